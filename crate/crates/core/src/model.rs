//! Core problem and configuration types shared by all solver layers.

use ndarray::{Array1, Array2, ShapeBuilder};
use serde::Serialize;

use crate::error::SolverError;
use crate::prox::{self, LossJacobian};
use crate::scalar::Scalar;

/// The nonsmooth loss `h` in `min h(b - Ax) + lambda ||x||_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Loss {
    /// Jaeckel's dispersion with Wilcoxon scores:
    /// `h(u) = 2/(n(n-1)) * sum_{i<j} |u_i - u_j|`.
    WilcoxonRank,
    /// `h(u) = ||u||_2` (square-root lasso).
    EuclideanNorm,
}

impl Loss {
    pub fn value<F: Scalar>(&self, u: &Array1<F>) -> F {
        match self {
            Loss::WilcoxonRank => prox::wilcoxon_value(u),
            Loss::EuclideanNorm => prox::l2_norm(u),
        }
    }

    /// Prox point together with a generalized-Jacobian element at `y`.
    pub fn prox<F: Scalar>(&self, y: &Array1<F>, tau: F) -> (Array1<F>, LossJacobian<F>) {
        match self {
            Loss::WilcoxonRank => {
                let (p, pools) = prox::prox_wilcoxon(y, tau);
                (p, LossJacobian::Pools(pools))
            }
            Loss::EuclideanNorm => {
                let p = prox::prox_euclidean(y, tau);
                let jac = if prox::l2_norm(y) > tau {
                    LossJacobian::Radial { y: y.clone(), tau }
                } else {
                    LossJacobian::Zero(y.len())
                };
                (p, jac)
            }
        }
    }

    pub fn prox_point<F: Scalar>(&self, y: &Array1<F>, tau: F) -> Array1<F> {
        match self {
            Loss::WilcoxonRank => prox::prox_wilcoxon(y, tau).0,
            Loss::EuclideanNorm => prox::prox_euclidean(y, tau),
        }
    }

    /// A subgradient element of `h` at `u`.
    pub fn subgradient<F: Scalar>(&self, u: &Array1<F>) -> Array1<F> {
        match self {
            Loss::WilcoxonRank => prox::wilcoxon_subgradient(u),
            Loss::EuclideanNorm => {
                let norm = prox::l2_norm(u);
                if norm > F::zero() {
                    u.mapv(|ui| ui / norm)
                } else {
                    Array1::zeros(u.len())
                }
            }
        }
    }

    /// Moreau envelope `min_z h(z) + ||z - y||^2 / (2 tau)` at the prox point.
    pub fn envelope<F: Scalar>(&self, y: &Array1<F>, tau: F) -> F {
        let p = self.prox_point(y, tau);
        let diff = &p - y;
        self.value(&p) + diff.dot(&diff) / (F::of(2.0) * tau)
    }
}

/// A problem instance `min h(b - Ax) + lambda ||x||_1`.
///
/// `A` is stored column-major since the sieve repeatedly gathers column
/// subsets. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ProblemData<F> {
    a: Array2<F>,
    b: Array1<F>,
    lambda: F,
    loss: Loss,
}

impl<F: Scalar> ProblemData<F> {
    pub fn new(a: Array2<F>, b: Array1<F>, lambda: F, loss: Loss) -> Result<Self, SolverError<F>> {
        let (n, _) = a.dim();
        if b.len() != n {
            return Err(SolverError::DimensionMismatch {
                what: "response vector",
                expected: n,
                got: b.len(),
            });
        }
        let min_n = if loss == Loss::WilcoxonRank { 2 } else { 1 };
        if n < min_n {
            return Err(SolverError::InvalidArgument(format!(
                "need at least {min_n} samples for this loss, got {n}"
            )));
        }
        if !(lambda > F::zero()) {
            return Err(SolverError::InvalidArgument(
                "lambda must be positive".into(),
            ));
        }
        if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidArgument(
                "design matrix and response must be finite".into(),
            ));
        }
        // gather into column-major storage
        let mut af = Array2::zeros(a.raw_dim().f());
        af.assign(&a);
        Ok(Self {
            a: af,
            b,
            lambda,
            loss,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &Array2<F> {
        &self.a
    }

    pub fn b(&self) -> &Array1<F> {
        &self.b
    }

    pub fn lambda(&self) -> F {
        self.lambda
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn with_lambda(mut self, lambda: F) -> Self {
        assert!(lambda > F::zero());
        self.lambda = lambda;
        self
    }

    pub fn with_loss(mut self, loss: Loss) -> Self {
        self.loss = loss;
        self
    }

    /// Restriction to a column subset: the same problem over `A_I`.
    pub fn restrict(&self, support: &[usize]) -> ProblemData<F> {
        let n = self.n();
        let mut a = Array2::zeros((n, support.len()).f());
        for (t, &j) in support.iter().enumerate() {
            a.column_mut(t).assign(&self.a.column(j));
        }
        ProblemData {
            a,
            b: self.b.clone(),
            lambda: self.lambda,
            loss: self.loss,
        }
    }
}

/// `h(b - Ax) + lambda ||x||_1`.
pub fn objective<F: Scalar>(data: &ProblemData<F>, x: &Array1<F>) -> Result<F, SolverError<F>> {
    if x.len() != data.p() {
        return Err(SolverError::DimensionMismatch {
            what: "solution vector",
            expected: data.p(),
            got: x.len(),
        });
    }
    let u = data.b() - &data.a().dot(x);
    let l1 = x.iter().fold(F::zero(), |acc, &xi| acc + xi.abs());
    Ok(data.loss().value(&u) + data.lambda() * l1)
}

/// Solver parameters. Defaults follow the reference configuration:
/// outer tolerance 1e-6, subproblem tolerance 9e-7, SSN tolerance 1e-6,
/// summable sequences realized as powers of 0.8.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig<F> {
    /// Outer KKT tolerance on ||Res||.
    pub eps: F,
    /// Subproblem tolerance; must satisfy 0 < eps_tilde < eps.
    pub eps_tilde: F,
    /// SSN gradient tolerance.
    pub eps_ssn: F,
    /// Components added per sieve round; None = round(p/100), at least 1.
    pub m_add: Option<usize>,
    /// Cap on additions per round; None = round(p/40), at least m_add.
    pub m_cap: Option<usize>,
    /// Proximal-parameter start and growth for the outer proximal loop.
    pub sigma0: F,
    pub sigma_factor: F,
    pub sigma_max: F,
    /// Penalty start for the augmented Lagrangian; None picks a sample-size
    /// aware default (the envelope smoothing must resolve the residual gap
    /// scale, which shrinks like 1/n).
    pub rho0: Option<F>,
    pub rho_factor: F,
    pub rho_max: F,
    /// Base of the geometric tolerance sequences (gamma_k, delta_k, eps_j, ...).
    pub seq_base: F,
    /// Armijo parameters: mu in (0, 1/2), delta in (0, 1).
    pub armijo_mu: F,
    pub armijo_delta: F,
    /// CG forcing terms: eta_i = min(eta_bar0, eta_bar1 * ||grad||).
    pub eta_bar0: F,
    pub eta_bar1: F,
    pub max_cg: usize,
    /// Iteration caps per layer.
    pub max_ssn: usize,
    pub max_alm: usize,
    pub max_ppa: usize,
    pub max_line_search: usize,
    /// Initial support from score screening (default) or a reference-solver
    /// presolve of the given iteration count.
    pub presolve_iters: Option<usize>,
    /// Solve in the full space (I0 = {1..p}) instead of sieving.
    pub no_sieve: bool,
}

impl<F: Scalar> Default for SolverConfig<F> {
    fn default() -> Self {
        Self {
            eps: F::of(1e-6),
            eps_tilde: F::of(9e-7),
            eps_ssn: F::of(1e-6),
            m_add: None,
            m_cap: None,
            sigma0: F::one(),
            sigma_factor: F::of(1.5),
            sigma_max: F::of(1e4),
            rho0: None,
            rho_factor: F::of(2.0),
            rho_max: F::of(1e4),
            seq_base: F::of(0.8),
            armijo_mu: F::of(1e-4),
            armijo_delta: F::of(0.5),
            eta_bar0: F::of(0.1),
            eta_bar1: F::of(0.1),
            max_cg: 300,
            max_ssn: 200,
            max_alm: 100,
            max_ppa: 100,
            max_line_search: 50,
            presolve_iters: None,
            no_sieve: false,
        }
    }
}

impl<F: Scalar> SolverConfig<F> {
    pub fn validate(&self) -> Result<(), SolverError<F>> {
        if !(F::zero() < self.eps_tilde && self.eps_tilde < self.eps) {
            return Err(SolverError::InvalidArgument(
                "need 0 < eps_tilde < eps".into(),
            ));
        }
        if self.sigma_factor < F::one() || self.rho_factor < F::one() {
            return Err(SolverError::InvalidArgument(
                "sigma_factor and rho_factor must be >= 1".into(),
            ));
        }
        if !(F::zero() < self.armijo_mu && self.armijo_mu < F::of(0.5)) {
            return Err(SolverError::InvalidArgument(
                "armijo_mu must lie in (0, 1/2)".into(),
            ));
        }
        if !(F::zero() < self.armijo_delta && self.armijo_delta < F::one()) {
            return Err(SolverError::InvalidArgument(
                "armijo_delta must lie in (0, 1)".into(),
            ));
        }
        if !(F::zero() < self.seq_base && self.seq_base < F::one()) {
            return Err(SolverError::InvalidArgument(
                "seq_base must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn m_add_for(&self, p: usize) -> usize {
        self.m_add
            .unwrap_or_else(|| ((p as f64) / 100.0).round() as usize)
            .max(1)
    }

    pub fn rho0_for(&self, n: usize) -> F {
        self.rho0
            .unwrap_or_else(|| (F::of(2.0) / F::of_usize(n.max(2))).min(F::one()))
            .max(F::of(1e-6))
    }

    pub fn m_cap_for(&self, p: usize) -> usize {
        let m_add = self.m_add_for(p);
        self.m_cap
            .unwrap_or_else(|| ((p as f64) / 40.0).round() as usize)
            .max(m_add)
    }
}

/// Iteration counters aggregated over a solve: sieve rounds, proximal-point
/// steps, augmented-Lagrangian steps, and semismooth Newton steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IterCounts {
    pub sieve: usize,
    pub ppa: usize,
    pub alm: usize,
    pub ssn: usize,
}

/// Result of a solve. `u` and `val` are recomputed from `x` on assembly so the
/// reported quantities are exactly consistent with the solution vector.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport<F> {
    pub x: Array1<F>,
    pub u: Array1<F>,
    pub alpha: Array1<F>,
    pub val: F,
    pub eta_kkt: F,
    pub res_abs: F,
    pub iters: IterCounts,
    pub wall_time_total: f64,
    pub wall_time_ssn: f64,
}
