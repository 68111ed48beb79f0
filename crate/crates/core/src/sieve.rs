//! Adaptive sieving driver: support initialization by score screening,
//! restricted solves, KKT-violation screening, and support expansion.

use std::time::Instant;

use ndarray::Array1;
use serde::Serialize;

use crate::error::SolverError;
use crate::model::{objective, IterCounts, Loss, ProblemData, SolveReport, SolverConfig};
use crate::ppa::ppa_solve;
use crate::prox::{self, soft_threshold};
use crate::scalar::Scalar;

/// Absolute and relative KKT residuals of a primal-dual triple.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KktResidual<F> {
    /// Euclidean norm of the stacked residual
    /// `(x - Prox_{lambda l1}(x + A'a), u - Prox_h(u + a), u - b + Ax)`.
    pub abs: F,
    /// Max of the three residual norms, each normalized by `1 + |block|`.
    pub rel: F,
}

/// Residuals of `(x, u, alpha)` for the problem `min h(b - Ax) + lambda|x|_1`.
/// The loss prox is evaluated at unit parameter.
pub fn kkt_residual<F: Scalar>(
    problem: &ProblemData<F>,
    x: &Array1<F>,
    u: &Array1<F>,
    alpha: &Array1<F>,
) -> KktResidual<F> {
    let at_alpha = problem.a().t().dot(alpha);
    kkt_residual_with_atalpha(problem, x, u, alpha, &at_alpha)
}

pub(crate) fn kkt_residual_with_atalpha<F: Scalar>(
    problem: &ProblemData<F>,
    x: &Array1<F>,
    u: &Array1<F>,
    alpha: &Array1<F>,
    at_alpha: &Array1<F>,
) -> KktResidual<F> {
    let rx = x - &soft_threshold(&(x + at_alpha), problem.lambda());
    let ru = u - &problem.loss().prox_point(&(u + alpha), F::one());
    let rp = u - problem.b() + &problem.a().dot(x);
    let (nx, nu, np) = (prox::l2_norm(&rx), prox::l2_norm(&ru), prox::l2_norm(&rp));
    let abs = (nx * nx + nu * nu + np * np).sqrt();
    let one = F::one();
    let norm_u = one + prox::l2_norm(u);
    let rel = (nu / norm_u)
        .max(nx / (one + prox::l2_norm(x)))
        .max(np / norm_u);
    KktResidual { abs, rel }
}

/// Indices of the `m` largest `|A' s|` entries, where `s` is a loss
/// subgradient at `x = 0` (so `u = b`). Ties broken by lower index.
pub fn initial_support<F: Scalar>(problem: &ProblemData<F>, m: usize) -> Vec<usize> {
    let s = match problem.loss() {
        Loss::WilcoxonRank => prox::wilcoxon_subgradient(problem.b()),
        Loss::EuclideanNorm => {
            let norm = prox::l2_norm(problem.b());
            if norm > F::zero() {
                problem.b().mapv(|v| v / norm)
            } else {
                Array1::zeros(problem.n())
            }
        }
    };
    let scores = problem.a().t().dot(&s);
    top_indices_by(&scores.mapv(|v| v.abs()), m.min(problem.p()))
}

fn top_indices_by<F: Scalar>(scores: &Array1<F>, m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    idx.truncate(m);
    idx.sort_unstable();
    idx
}

/// Sieve state after a restricted solve: the current support, the padded
/// iterate, and its residuals.
#[derive(Debug, Clone)]
pub struct SieveState<F> {
    pub support: Vec<usize>,
    pub x: Array1<F>,
    pub u: Array1<F>,
    pub alpha: Array1<F>,
    pub res_abs: F,
    pub res_rel: F,
    pub round: usize,
    /// Multiplies the per-round addition count after a stalled round.
    pub stall_factor: usize,
}

/// KKT-violating off-support indices, ranked by violation magnitude and
/// truncated to `min(m_add * stall_factor, m_cap)`.
///
/// For `x_j = 0` the violation is `max(|(A'a)_j| - lambda - q, 0)`.
pub fn expand_support<F: Scalar>(
    problem: &ProblemData<F>,
    state: &SieveState<F>,
    q: F,
    m_add: usize,
    m_cap: usize,
) -> Vec<usize> {
    let at_alpha = problem.a().t().dot(&state.alpha);
    expand_support_with_atalpha(problem, state, &at_alpha, q, m_add, m_cap)
}

fn expand_support_with_atalpha<F: Scalar>(
    problem: &ProblemData<F>,
    state: &SieveState<F>,
    at_alpha: &Array1<F>,
    q: F,
    m_add: usize,
    m_cap: usize,
) -> Vec<usize> {
    let lambda = problem.lambda();
    let mut in_support = vec![false; problem.p()];
    for &j in &state.support {
        in_support[j] = true;
    }
    let mut violators: Vec<(usize, F)> = (0..problem.p())
        .filter(|&j| !in_support[j])
        .filter_map(|j| {
            let v = at_alpha[j].abs() - lambda - q;
            (v > F::zero()).then_some((j, v))
        })
        .collect();
    violators.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let take = m_add.saturating_mul(state.stall_factor).min(m_cap).max(1);
    violators.truncate(take);
    let mut out: Vec<usize> = violators.into_iter().map(|(j, _)| j).collect();
    out.sort_unstable();
    out
}

/// One row of the per-round trace emitted for external consumers.
#[derive(Debug, Clone, Serialize)]
pub struct RoundTrace<F> {
    pub round: usize,
    pub support_size: usize,
    pub res_abs: F,
    pub eta_kkt: F,
    pub val: F,
    /// Cumulative SSN wall time in seconds up to this round.
    pub ssn_time: f64,
}

/// Solve result plus per-round diagnostics.
#[derive(Debug, Clone)]
pub struct SolveOutput<F> {
    pub report: SolveReport<F>,
    pub trace: Vec<RoundTrace<F>>,
    /// Rounds where the residual exceeded eps yet no violator was found.
    /// Zero on every valid run.
    pub theorem1_violations: usize,
    /// Largest support fraction |I|/p reached across rounds.
    pub max_support_fraction: f64,
}

/// Adaptive sieving: alternates restricted solves at tolerance `eps_tilde`
/// with KKT-violation screening until the full-space residual is below `eps`.
pub fn as_solve<F: Scalar>(
    problem: &ProblemData<F>,
    cfg: &SolverConfig<F>,
) -> Result<SolveOutput<F>, SolverError<F>> {
    cfg.validate()?;
    let start = Instant::now();
    let p = problem.p();
    let m_add = cfg.m_add_for(p);
    let m_cap = cfg.m_cap_for(p);
    let mut counters = IterCounts::default();
    let mut trace: Vec<RoundTrace<F>> = Vec::new();
    let mut violations = 0usize;
    let mut ssn_time = 0.0f64;
    let mut max_frac = 0.0f64;

    let mut support: Vec<usize> = if cfg.no_sieve {
        (0..p).collect()
    } else if let Some(iters) = cfg.presolve_iters {
        presolve_support(problem, iters, m_add)
    } else {
        initial_support(problem, m_add)
    };
    let mut x_full: Array1<F> = Array1::zeros(p);
    let mut alpha1: Option<Array1<F>> = None;
    let mut prev_res: Option<F> = None;
    let mut stall = 1usize;

    loop {
        counters.sieve += 1;
        max_frac = max_frac.max(support.len() as f64 / p as f64);
        let sub = problem.restrict(&support);
        let x_init = Array1::from_iter(support.iter().map(|&j| x_full[j]));
        let mut out = ppa_solve(&sub, x_init, alpha1.clone(), cfg.eps_tilde, cfg, &mut counters)?;
        if !out.converged && support.len() == p {
            // final fallback: one full-space pass at the outer tolerance
            let x_init = Array1::from_iter(support.iter().map(|&j| x_full[j]));
            out = ppa_solve(&sub, x_init, alpha1.clone(), cfg.eps, cfg, &mut counters)?;
        }
        ssn_time += out.ssn_time;
        x_full.fill(F::zero());
        for (t, &j) in support.iter().enumerate() {
            x_full[j] = out.x[t];
        }
        let at_alpha = problem.a().t().dot(&out.alpha1);
        let res = kkt_residual_with_atalpha(problem, &x_full, &out.u, &out.alpha1, &at_alpha);
        let val = objective(problem, &x_full)?;
        trace.push(RoundTrace {
            round: counters.sieve,
            support_size: support.len(),
            res_abs: res.abs,
            eta_kkt: res.rel,
            val,
            ssn_time,
        });

        if res.abs <= cfg.eps {
            let u = problem.b() - &problem.a().dot(&x_full);
            let report = SolveReport {
                val: objective(problem, &x_full)?,
                x: x_full,
                u,
                alpha: out.alpha1,
                eta_kkt: res.rel,
                res_abs: res.abs,
                iters: counters,
                wall_time_total: start.elapsed().as_secs_f64(),
                wall_time_ssn: ssn_time,
            };
            return Ok(SolveOutput {
                report,
                trace,
                theorem1_violations: violations,
                max_support_fraction: max_frac,
            });
        }

        if support.len() == p || counters.sieve > p + 1 {
            return Err(SolverError::NonConvergence {
                layer: "sieve",
                iterations: counters.sieve,
                residual: res.abs.to_f64().unwrap_or(f64::NAN),
                best: x_full.to_vec(),
            });
        }

        let complement = p - support.len();
        let q = (cfg.eps - cfg.eps_tilde) / F::of_usize(complement).sqrt();
        let state = SieveState {
            support: support.clone(),
            x: x_full.clone(),
            u: out.u.clone(),
            alpha: out.alpha1.clone(),
            res_abs: res.abs,
            res_rel: res.rel,
            round: counters.sieve,
            stall_factor: stall,
        };
        let mut added =
            expand_support_with_atalpha(problem, &state, &at_alpha, q, m_add, m_cap);
        if added.is_empty() {
            // when the restricted solve met its tolerance, a nonempty
            // violator set is guaranteed while the residual exceeds eps;
            // a stalled round carries no such guarantee
            if out.converged {
                violations += 1;
            }
            let mut fallback: Vec<(usize, F)> = (0..p)
                .filter(|j| !support.contains(j))
                .map(|j| (j, at_alpha[j].abs()))
                .collect();
            fallback.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            added = fallback.into_iter().take(1).map(|(j, _)| j).collect();
        }
        let mut merged = Vec::with_capacity(support.len() + added.len());
        merged.extend_from_slice(&support);
        merged.extend_from_slice(&added);
        merged.sort_unstable();
        merged.dedup();
        support = merged;

        stall = match prev_res {
            Some(prev) if res.abs > prev * F::of(0.9) => (stall * 2).min(m_cap / m_add + 1),
            _ => 1,
        };
        prev_res = Some(res.abs);
        alpha1 = Some(out.alpha1);
    }
}

/// Support from a few reference-solver iterations, falling back to score
/// screening if the presolve returns a numerically zero vector.
fn presolve_support<F: Scalar>(problem: &ProblemData<F>, iters: usize, m: usize) -> Vec<usize> {
    match crate::refsolver::splitting_solve(problem, F::of(1e-4), iters) {
        Ok(out) => {
            let (k_hat, support) = crate::metrics::nonzero_rule(&out.x);
            if k_hat == 0 {
                initial_support(problem, m)
            } else {
                support
            }
        }
        Err(_) => initial_support(problem, m),
    }
}
