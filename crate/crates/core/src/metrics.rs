//! Evaluation metrics over a solution and ground truth: estimation errors,
//! model error under the population covariance, support-recovery counts via
//! the mass-based nonzero rule, and the correct-component ratio.

use ndarray::Array1;
use serde::Serialize;

use crate::model::{objective, ProblemData};
use crate::scalar::Scalar;
use crate::sieve::kkt_residual;
use crate::synth::{covariance_quadratic, CovarianceKind};

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport<F> {
    pub val: F,
    pub eta_kkt: F,
    pub l1_err: F,
    pub l2_err: F,
    pub me: F,
    pub fp: usize,
    pub fn_: usize,
    pub k_hat: usize,
    pub cr: Option<F>,
}

/// Mass-based nonzero count: the smallest k such that the k largest
/// magnitudes hold 0.9999 of the L1 mass, and the induced index set
/// `{i : |x_i| >= |x~_k|}` (non-strict at the threshold). Ties in the sort
/// break by original index; `x = 0` yields `(0, {})`.
pub fn nonzero_rule<F: Scalar>(x: &Array1<F>) -> (usize, Vec<usize>) {
    let total = x.iter().fold(F::zero(), |acc, &v| acc + v.abs());
    if total == F::zero() {
        return (0, Vec::new());
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| {
        x[j].abs()
            .partial_cmp(&x[i].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let target = F::of(0.9999) * total;
    let mut acc = F::zero();
    let mut k_hat = x.len();
    for (k, &i) in idx.iter().enumerate() {
        acc += x[i].abs();
        if acc >= target {
            k_hat = k + 1;
            break;
        }
    }
    let threshold = x[idx[k_hat - 1]].abs();
    let mut support: Vec<usize> = (0..x.len()).filter(|&i| x[i].abs() >= threshold).collect();
    support.sort_unstable();
    (k_hat, support)
}

/// Fills every metric field. `reference` is a full-space solution used for
/// the correct-component ratio of the sieve's final support.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<F: Scalar>(
    data: &ProblemData<F>,
    x: &Array1<F>,
    u: &Array1<F>,
    alpha: &Array1<F>,
    x_true: &Array1<F>,
    sigma_x: &CovarianceKind<F>,
    support: &[usize],
    reference: Option<&Array1<F>>,
) -> MetricsReport<F> {
    let res = kkt_residual(data, x, u, alpha);
    let diff = x - x_true;
    let l1_err = diff.iter().fold(F::zero(), |acc, &v| acc + v.abs());
    let l2_err = diff.dot(&diff).sqrt();
    let me = covariance_quadratic(sigma_x, &diff);
    let (k_hat, est) = nonzero_rule(x);
    let (_, truth) = nonzero_rule(x_true);
    let fp = est.iter().filter(|i| !truth.contains(i)).count();
    let fn_ = truth.iter().filter(|i| !est.contains(i)).count();
    let cr = reference.map(|xr| {
        let (_, ref_support) = nonzero_rule(xr);
        if support.is_empty() {
            F::zero()
        } else {
            let hit = support.iter().filter(|i| ref_support.contains(i)).count();
            F::of_usize(hit) / F::of_usize(support.len())
        }
    });
    MetricsReport {
        val: objective(data, x).expect("consistent dimensions"),
        eta_kkt: res.rel,
        l1_err,
        l2_err,
        me,
        fp,
        fn_,
        k_hat,
        cr,
    }
}
