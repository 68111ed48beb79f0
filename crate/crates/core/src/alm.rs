//! Inexact augmented Lagrangian method for the proximal-point subproblem
//!
//! `min h(u) + lambda||z||_1 + |x - x_anchor|^2/(2 sigma)  s.t.  u = b - Ax, z = x`.
//!
//! Each iteration minimizes `phi_j` over x by semismooth Newton, recovers
//! `u = Prox_{h/rho}(f1(x))` and `z = Prox_{(lambda/rho)l1}(f2(x))` in closed
//! form, and updates the multipliers `alpha = alpha - rho*[u - b + Ax; z - x]`.
//! The inner solves honor the simplified stopping criteria: the gradient norm
//! of `phi_j` is pushed below `eps_j/sqrt(rho_j)` and below the multiplier-step
//! bounds `(kappa_j/sqrt(rho_j))|da|` and `(kappa'_j/rho_j)|da|`.

use ndarray::Array1;

use crate::error::SolverError;
use crate::model::{ProblemData, SolverConfig};
use crate::prox;
use crate::scalar::Scalar;
use crate::ssn::{ssn_minimize, SsnContext, SsnParams, SsnStats};

/// Numerical floor for the dynamic SSN tolerance; once the multiplier-step
/// criteria demand less than this, the subproblem is solved to machine
/// precision and the criteria are treated as met.
const TOL_FLOOR: f64 = 1e-13;

/// ALM iterate: primal triple, multipliers, and the penalty behind them.
#[derive(Debug, Clone)]
pub struct AlmState<F> {
    pub x: Array1<F>,
    pub u: Array1<F>,
    pub z: Array1<F>,
    pub alpha1: Array1<F>,
    pub alpha2: Array1<F>,
    /// Penalty at which (u, z, alpha) were produced; nondecreasing.
    pub rho: F,
    pub j: usize,
    /// Primal residual norm of the previous iteration, for the penalty rule.
    pub prev_primal: F,
    /// Primal residual when the penalty last grew.
    pub primal_ref: F,
    /// Iterations since the penalty last grew.
    pub since_growth: usize,
}

impl<F: Scalar> AlmState<F> {
    /// Warm start from an iterate `x`: exact primal fill-in `u = b - Ax`,
    /// `z = x`, multipliers from a loss subgradient (so the u-block KKT
    /// residual starts at zero) and its clamped image under `A'`.
    pub fn warm_start(problem: &ProblemData<F>, x: Array1<F>, alpha1: Option<Array1<F>>) -> Self {
        let u = problem.b() - &problem.a().dot(&x);
        let alpha1 = alpha1.unwrap_or_else(|| problem.loss().subgradient(&u));
        let lambda = problem.lambda();
        let alpha2 = problem
            .a()
            .t()
            .dot(&alpha1)
            .mapv(|v| v.max(-lambda).min(lambda));
        AlmState {
            z: x.clone(),
            x,
            u,
            alpha1,
            alpha2,
            rho: F::one(),
            j: 0,
            prev_primal: F::infinity(),
            primal_ref: F::infinity(),
            since_growth: 0,
        }
    }
}

/// Cumulative counters and per-iteration logs for one ALM run.
#[derive(Debug, Clone)]
pub struct AlmStats<F> {
    pub iterations: usize,
    pub ssn: SsnStats<F>,
    /// Inner solves that stopped at the arithmetic's resolution rather than
    /// the requested tolerance.
    pub degraded_solves: usize,
    /// Surrogate distance to the proximal-point inclusion after each iteration.
    pub surrogates: Vec<F>,
    /// Augmented Lagrangian value (with the pre-update multipliers) per iteration.
    pub lagrangians: Vec<F>,
}

impl<F> Default for AlmStats<F> {
    fn default() -> Self {
        Self {
            iterations: 0,
            ssn: Default::default(),
            degraded_solves: 0,
            surrogates: Vec::new(),
            lagrangians: Vec::new(),
        }
    }
}

/// Stopping targets for the outer proximal-point criteria: the surrogate
/// distance must fall below `target_a` and below `step_coef * |x - anchor|`.
#[derive(Debug, Clone, Copy)]
pub struct AlmStop<F> {
    pub target_a: F,
    pub step_coef: F,
    /// Unconditional exit once the surrogate is this small.
    pub abs_floor: F,
    /// The step-relative bound is waived once `|x - anchor|` falls below
    /// this scale: the proximal-point step has converged and the outer
    /// residual check takes over.
    pub step_floor: F,
}

/// Computable surrogate for `dist(0, S_k)` at a post-update state: the
/// phi-gradient norm expressed through the updated multipliers plus
/// penalty-scaled primal residuals and a lambda-scaled coupling term,
///
/// `|-A'a1 + a2 + (x - anchor)/sigma| + rho(|u - b + Ax| + |z - x|) + lambda|x - z|`.
pub fn surrogate_sk_distance<F: Scalar>(
    problem: &ProblemData<F>,
    state: &AlmState<F>,
    anchor: &Array1<F>,
    sigma: F,
) -> F {
    let grad = -problem.a().t().dot(&state.alpha1)
        + &state.alpha2
        + &(&state.x - anchor).mapv(|v| v / sigma);
    let r1 = &state.u - problem.b() + &problem.a().dot(&state.x);
    let r2 = &state.z - &state.x;
    let nr2 = prox::l2_norm(&r2);
    prox::l2_norm(&grad)
        + state.rho * (prox::l2_norm(&r1) + nr2)
        + problem.lambda() * nr2
}

/// Tight computable bound on `dist(0, S_k)` at a post-update state.
///
/// The updated `alpha1` is an exact loss subgradient at `u`, so the u-block
/// vanishes; the x-block minimizes over the L1 subdifferential per
/// coordinate, with numerically zero coordinates granted the full interval
/// (the sieve pads exact zeros there); the last block is the raw primal
/// residual. Unlike the reporting surrogate this does not scale with the
/// penalty.
pub fn sk_distance_bound<F: Scalar>(
    problem: &ProblemData<F>,
    state: &AlmState<F>,
    anchor: &Array1<F>,
    sigma: F,
) -> F {
    let at_alpha = problem.a().t().dot(&state.alpha1);
    sk_distance_bound_with(problem, state, anchor, sigma, &at_alpha)
}

pub(crate) fn sk_distance_bound_with<F: Scalar>(
    problem: &ProblemData<F>,
    state: &AlmState<F>,
    anchor: &Array1<F>,
    sigma: F,
    at_alpha: &Array1<F>,
) -> F {
    let lambda = problem.lambda();
    let ztol = F::of(1e-10)
        * (F::one() + state.x.iter().fold(F::zero(), |m: F, &v| m.max(v.abs())));
    let x_eff = state.x.mapv(|v| if v.abs() <= ztol { F::zero() } else { v });
    let c = at_alpha.mapv(|v| -v) + &(&x_eff - anchor).mapv(|v| v / sigma);
    let mut first = F::zero();
    for i in 0..x_eff.len() {
        let fi = if x_eff[i] != F::zero() {
            c[i] + lambda * x_eff[i].signum()
        } else {
            c[i].signum() * (c[i].abs() - lambda).max(F::zero())
        };
        first += fi * fi;
    }
    let third = problem.b() - &state.u - &problem.a().dot(&x_eff);
    let out = (first + third.dot(&third)).sqrt();
    if out > F::of(0.3) && std::env::var("RANKSIEVE_DEBUG_SKD").is_ok() {
        let mut worst: Vec<(usize, F)> = (0..x_eff.len())
            .map(|i| {
                let fi = if x_eff[i] != F::zero() {
                    c[i] + lambda * x_eff[i].signum()
                } else {
                    c[i].signum() * (c[i].abs() - lambda).max(F::zero())
                };
                (i, fi.abs())
            })
            .collect();
        worst.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        for &(i, v) in worst.iter().take(3) {
            eprintln!(
                "  skd coord {i}: |first|={v:?} x={:?} z={:?} a2={:?} c={:?}",
                state.x[i], state.z[i], state.alpha2[i], c[i]
            );
        }
    }
    out
}

/// Full augmented Lagrangian value at (x, u, z) with multipliers alpha.
pub fn lagrangian_value<F: Scalar>(
    problem: &ProblemData<F>,
    x: &Array1<F>,
    u: &Array1<F>,
    z: &Array1<F>,
    alpha1: &Array1<F>,
    alpha2: &Array1<F>,
    rho: F,
    anchor: &Array1<F>,
    sigma: F,
) -> F {
    let half = F::of(0.5);
    let r1 = u - problem.b() + &problem.a().dot(x);
    let r2 = z - x;
    let l1z = z.iter().fold(F::zero(), |acc, &v| acc + v.abs());
    let dx = x - anchor;
    problem.loss().value(u) + problem.lambda() * l1z - r1.dot(alpha1) - r2.dot(alpha2)
        + half * rho * r1.dot(&r1)
        + half * rho * r2.dot(&r2)
        + dx.dot(&dx) / (F::of(2.0) * sigma)
}

pub(crate) struct AlmDriver<'a, F> {
    pub problem: &'a ProblemData<F>,
    pub anchor: &'a Array1<F>,
    pub sigma: F,
    pub cfg: &'a SolverConfig<F>,
    /// Additional cap on the inner gradient tolerance, from the outer target.
    pub tol_cap: F,
}

pub(crate) struct AlmStep<F> {
    pub surrogate: F,
}

impl<'a, F: Scalar> AlmDriver<'a, F> {
    /// One ALM iteration: inner SSN solve, closed-form u/z, multiplier update.
    /// Grows the penalty between iterations (the first uses state.rho as-is).
    pub fn step(
        &self,
        state: &mut AlmState<F>,
        stats: &mut AlmStats<F>,
    ) -> Result<AlmStep<F>, SolverError<F>> {
        let rho = state.rho;
        let seq = self.cfg.seq_base.powi(state.j as i32 + 1);
        // the gradient of phi carries rho-scaled rounding noise
        let floor = F::of(TOL_FLOOR).max(rho * F::of(1e-15));
        // tightest of eps_ssn, criterion (C'), the outer target, and a
        // proximal-scale bound: errors of the inner solve enter the outer
        // iteration amplified by sigma, so the tolerance shrinks with it.
        // The (D1')/(D2') bounds are enforced by the retry loop below.
        let sigma_cap = self.cfg.eps_tilde / (F::one() + self.sigma);
        let mut tol = (seq / rho.sqrt())
            .min(self.cfg.eps_ssn)
            .min(self.tol_cap)
            .min(sigma_cap)
            .max(floor);

        let ctx = SsnContext {
            problem: self.problem,
            rho,
            sigma: self.sigma,
            alpha1: &state.alpha1,
            alpha2: &state.alpha2,
            anchor: self.anchor,
        };
        let params_for = |tol: F| SsnParams {
            tol,
            armijo_mu: self.cfg.armijo_mu,
            armijo_delta: self.cfg.armijo_delta,
            eta_bar0: self.cfg.eta_bar0,
            eta_bar1: self.cfg.eta_bar1,
            max_cg: self.cfg.max_cg,
            max_iter: self.cfg.max_ssn,
            max_line_search: self.cfg.max_line_search,
        };

        // a solve that stalls at the arithmetic's resolution still advances
        // the multiplier iteration; commit its best iterate
        let (mut x_new, mut parts) =
            match ssn_minimize(&ctx, state.x.clone(), &params_for(tol), &mut stats.ssn) {
                Ok(v) => v,
                Err(SolverError::NonConvergence { best, .. })
                | Err(SolverError::LineSearchStagnation { best, .. }) => {
                    stats.degraded_solves += 1;
                    tol = floor;
                    let x = Array1::from_vec(best);
                    let parts = ctx.eval_grad(&x);
                    (x, parts)
                }
                Err(e) => return Err(e),
            };
        // criteria (D1')/(D2'): tighten until the gradient norm is dominated
        // by the multiplier step; their right-hand sides scale with the
        // multiplier step, so cap the re-solves instead of chasing them to
        // the arithmetic floor
        let mut retries = 0usize;
        loop {
            let r1 = &state.alpha1.mapv(|v| v / rho) - &(&parts.f1 - &parts.u);
            let r2 = &state.alpha2.mapv(|v| v / rho) - &(&parts.f2 - &parts.z);
            let da = rho * (prox::l2_norm(&r1).powi(2) + prox::l2_norm(&r2).powi(2)).sqrt();
            let d1 = seq / rho.sqrt() * da;
            let d2 = seq / rho * da;
            if (parts.grad_norm <= d1 && parts.grad_norm <= d2) || tol <= floor || retries >= 2 {
                let primal = (prox::l2_norm(&r1).powi(2) + prox::l2_norm(&r2).powi(2)).sqrt();
                let lag = lagrangian_value(
                    self.problem,
                    &x_new,
                    &parts.u,
                    &parts.z,
                    &state.alpha1,
                    &state.alpha2,
                    rho,
                    self.anchor,
                    self.sigma,
                );
                // commit: the multiplier updates alpha1 - rho*r1, alpha2 - rho*r2
                state.alpha1 = &state.alpha1 - &r1.mapv(|v| rho * v);
                state.alpha2 = &state.alpha2 - &r2.mapv(|v| rho * v);
                state.x = x_new;
                state.u = parts.u;
                state.z = parts.z;
                state.j += 1;
                stats.iterations += 1;
                stats.lagrangians.push(lag);
                // penalty rule: halving the primal residual resets the stall
                // clock; three iterations without a halving grow the penalty
                state.since_growth += 1;
                if primal <= F::of(0.5) * state.primal_ref {
                    state.primal_ref = primal;
                    state.since_growth = 0;
                } else if state.since_growth >= 3 {
                    state.rho = (state.rho * self.cfg.rho_factor).min(self.cfg.rho_max);
                    state.primal_ref = primal;
                    state.since_growth = 0;
                }
                state.prev_primal = primal;
                let surrogate = surrogate_sk_distance(self.problem, state, self.anchor, self.sigma);
                stats.surrogates.push(surrogate);
                return Ok(AlmStep { surrogate });
            }
            retries += 1;
            tol = (tol * F::of(0.1)).min(d1.min(d2) * F::of(0.5)).max(floor);
            match ssn_minimize(&ctx, x_new.clone(), &params_for(tol), &mut stats.ssn) {
                Ok((x2, p2)) => {
                    x_new = x2;
                    parts = p2;
                }
                // the retry phase can push below what double precision
                // resolves; keep the last iterate, which met the previous
                // tolerance, and let the floor break the loop
                Err(SolverError::LineSearchStagnation { .. })
                | Err(SolverError::NonConvergence { .. }) => {
                    tol = floor;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Runs ALM until the proximal-point stopping targets hold (both the summable
/// and the step-relative bound), or an `extra_exit` predicate fires.
pub fn alm_solve<F: Scalar>(
    problem: &ProblemData<F>,
    anchor: &Array1<F>,
    sigma: F,
    state: &mut AlmState<F>,
    stop: AlmStop<F>,
    cfg: &SolverConfig<F>,
    mut extra_exit: impl FnMut(&AlmState<F>) -> bool,
) -> Result<AlmStats<F>, SolverError<F>> {
    let driver = AlmDriver {
        problem,
        anchor,
        sigma,
        cfg,
        tol_cap: stop.target_a,
    };
    let mut stats = AlmStats::default();
    loop {
        if stats.iterations >= cfg.max_alm {
            let res = stats.surrogates.last().copied().unwrap_or(F::infinity());
            return Err(SolverError::NonConvergence {
                layer: "alm",
                iterations: stats.iterations,
                residual: res.to_f64().unwrap_or(f64::NAN),
                best: state.x.to_vec(),
            });
        }
        let step = driver.step(state, &mut stats)?;
        if extra_exit(state) {
            return Ok(stats);
        }
        let step_norm = prox::l2_norm(&(&state.x - anchor));
        if step.surrogate <= stop.abs_floor
            || (step.surrogate <= stop.target_a
                && (step.surrogate <= stop.step_coef * step_norm
                    || step_norm <= stop.step_floor))
        {
            return Ok(stats);
        }
    }
}
