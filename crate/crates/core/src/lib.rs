//! Solver library for L1-regularized convex composite regression
//! `min h(Ax - b) + lambda ||x||_1` with a nonsmooth loss `h`: the Wilcoxon
//! pairwise rank loss (rank lasso) or the Euclidean norm (square-root lasso).
//!
//! The solver stack is an adaptive sieve over a growing support set, solving
//! each restricted problem with a proximal point loop whose subproblems are
//! handled by an augmented Lagrangian method with semismooth Newton inner
//! solves. A slow operator-splitting reference solver, synthetic benchmark
//! generators, tuning-free lambda selection, and evaluation metrics round out
//! the toolkit.
//!
//! All numerics are generic over the scalar type via [`Scalar`] (f32 or f64);
//! concrete f64 aliases are exported at the crate root.

pub mod alm;
pub mod error;
pub mod metrics;
pub mod model;
pub mod ppa;
pub mod prox;
pub mod refsolver;
pub mod scalar;
pub mod sieve;
pub mod ssn;
pub mod synth;
pub mod tuning;

pub use error::SolverError;
pub use model::{objective, IterCounts, Loss, ProblemData, SolveReport, SolverConfig};
pub use scalar::Scalar;
pub use sieve::{as_solve, SolveOutput};

/// Concrete f64 aliases for the common entry points.
pub type ProblemData64 = model::ProblemData<f64>;
pub type SolverConfig64 = model::SolverConfig<f64>;
pub type SolveReport64 = model::SolveReport<f64>;
pub type SolveOutput64 = sieve::SolveOutput<f64>;
pub type SynthSpec64 = synth::SynthSpec<f64>;
pub type MetricsReport64 = metrics::MetricsReport<f64>;

/// f32 aliases; tolerances in [`SolverConfig`] should be loosened to suit
/// single precision.
pub type ProblemData32 = model::ProblemData<f32>;
pub type SolverConfig32 = model::SolverConfig<f32>;
pub type SolveReport32 = model::SolveReport<f32>;
