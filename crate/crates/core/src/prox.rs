//! Proximal operators, Moreau envelopes, subgradients, and generalized-Jacobian
//! actions for the L1 regularizer and the two supported losses.
//!
//! The Wilcoxon pairwise loss `h(u) = 2/(n(n-1)) * sum_{i<j} |u_i - u_j|` has a
//! prox computable by sorting, shifting by the score vector `w_k = n - 2k + 1`,
//! and projecting onto the nonincreasing cone with pool-adjacent-violators.
//! The pools of that projection carry the generalized Jacobian: averaging
//! within tied blocks, identity elsewhere.

use ndarray::Array1;

use crate::scalar::Scalar;

/// One averaging block of a nonincreasing projection, over sorted positions
/// `start..start + len`. Blocks with `len >= 2` correspond to active (tied)
/// constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool<F> {
    pub start: usize,
    pub len: usize,
    pub value: F,
    pub active: bool,
}

/// Sorting permutation plus the pool structure of a nonincreasing projection.
///
/// `perm[k]` is the original index of the k-th entry after sorting the input
/// into nonincreasing order (stable: ties keep original order). Pool values
/// are strictly decreasing across consecutive pools; within an active pool all
/// projected components equal the pooled value.
#[derive(Debug, Clone)]
pub struct PoolDecomposition<F> {
    perm: Vec<usize>,
    pools: Vec<Pool<F>>,
}

impl<F: Scalar> PoolDecomposition<F> {
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn pools(&self) -> &[Pool<F>] {
        &self.pools
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }
}

/// Diagonal element of the Clarke subdifferential of the soft-threshold map.
/// `diag[i]` is true iff `|y_i| > tau` strictly; the boundary `|y_i| = tau`
/// is assigned 0.
#[derive(Debug, Clone)]
pub struct L1JacobianMask {
    pub diag: Vec<bool>,
}

impl L1JacobianMask {
    /// Applies `V2` (the mask) to `v`.
    pub fn apply<F: Scalar>(&self, v: &Array1<F>) -> Array1<F> {
        Array1::from_iter(
            self.diag
                .iter()
                .zip(v.iter())
                .map(|(&keep, &vi)| if keep { vi } else { F::zero() }),
        )
    }
}

/// `sign(y_i) * max(|y_i| - tau, 0)` componentwise.
pub fn soft_threshold<F: Scalar>(y: &Array1<F>, tau: F) -> Array1<F> {
    debug_assert!(tau > F::zero());
    y.mapv(|yi| yi.signum() * (yi.abs() - tau).max(F::zero()))
}

/// Jacobian element of the soft-threshold map at `y`.
pub fn l1_jacobian<F: Scalar>(y: &Array1<F>, tau: F) -> L1JacobianMask {
    debug_assert!(tau > F::zero());
    L1JacobianMask {
        diag: y.iter().map(|&yi| yi.abs() > tau).collect(),
    }
}

/// Euclidean projection of `v` onto `{x : x_1 >= x_2 >= ... >= x_n}` by a
/// single left-to-right PAVA pass with back-merging.
///
/// Pools that end up with equal values are merged, so pooled values are
/// strictly decreasing and the decomposition matches the full active set of
/// the projection.
pub fn project_nonincreasing<F: Scalar>(v: &Array1<F>) -> (Array1<F>, PoolDecomposition<F>) {
    let n = v.len();
    let (proj, pools) = pava_nonincreasing(v.as_slice().expect("contiguous"));
    (
        Array1::from_vec(proj),
        PoolDecomposition {
            perm: (0..n).collect(),
            pools,
        },
    )
}

/// PAVA on a raw slice; returns the projection and its pools.
fn pava_nonincreasing<F: Scalar>(v: &[F]) -> (Vec<F>, Vec<Pool<F>>) {
    let n = v.len();
    // Stack of (sum, len); a new element violates the nonincreasing order when
    // the previous pooled mean is <= the current one, in which case the pools
    // merge. Merging on equality keeps pooled values strictly decreasing.
    let mut sums: Vec<F> = Vec::with_capacity(n);
    let mut lens: Vec<usize> = Vec::with_capacity(n);
    for &vi in v {
        let mut sum = vi;
        let mut len = 1usize;
        while let (Some(&psum), Some(&plen)) = (sums.last(), lens.last()) {
            // psum/plen <= sum/len, compared without division
            if psum * F::of_usize(len) <= sum * F::of_usize(plen) {
                sum += psum;
                len += plen;
                sums.pop();
                lens.pop();
            } else {
                break;
            }
        }
        sums.push(sum);
        lens.push(len);
    }
    let mut proj = Vec::with_capacity(n);
    let mut pools = Vec::with_capacity(sums.len());
    let mut start = 0usize;
    for (sum, len) in sums.into_iter().zip(lens) {
        let value = sum / F::of_usize(len);
        proj.extend(std::iter::repeat(value).take(len));
        pools.push(Pool {
            start,
            len,
            value,
            active: len >= 2,
        });
        start += len;
    }
    (proj, pools)
}

/// Stable nonincreasing sort permutation: ties broken by original index.
fn sort_perm_desc<F: Scalar>(y: &Array1<F>) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..y.len()).collect();
    perm.sort_by(|&i, &j| {
        y[j].partial_cmp(&y[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    perm
}

/// Prox of the Wilcoxon loss: `P_y^T Pi_D(P_y y - (2 tau / (n(n-1))) w)` with
/// `w_k = n - 2k + 1` and `Pi_D` the nonincreasing projection.
pub fn prox_wilcoxon<F: Scalar>(y: &Array1<F>, tau: F) -> (Array1<F>, PoolDecomposition<F>) {
    let n = y.len();
    assert!(n >= 2, "Wilcoxon prox needs n >= 2");
    debug_assert!(tau > F::zero());
    let c = F::of(2.0) * tau / (F::of_usize(n) * F::of_usize(n - 1));
    let perm = sort_perm_desc(y);
    let shifted: Vec<F> = perm
        .iter()
        .enumerate()
        .map(|(k, &idx)| {
            // w_k = n - 2k - 1 for zero-based k
            let w = F::of_usize(n) - F::of(2.0) * F::of_usize(k) - F::one();
            y[idx] - c * w
        })
        .collect();
    let (proj, pools) = pava_nonincreasing(&shifted);
    let mut out = Array1::zeros(n);
    for (k, &idx) in perm.iter().enumerate() {
        out[idx] = proj[k];
    }
    (out, PoolDecomposition { perm, pools })
}

/// Applies the generalized Jacobian `U = P_y^T Diag(Gamma_1..Gamma_N) P_y` of
/// the Wilcoxon prox to `v`: permute, average within active pools, unpermute.
pub fn wilcoxon_jacobian_apply<F: Scalar>(
    pools: &PoolDecomposition<F>,
    v: &Array1<F>,
) -> Array1<F> {
    let n = pools.dim();
    assert_eq!(v.len(), n, "jacobian apply: dimension mismatch");
    let mut sorted: Vec<F> = pools.perm.iter().map(|&i| v[i]).collect();
    for pool in &pools.pools {
        if !pool.active {
            continue;
        }
        let range = pool.start..pool.start + pool.len;
        let mean = sorted[range.clone()]
            .iter()
            .fold(F::zero(), |acc, &x| acc + x)
            / F::of_usize(pool.len);
        for s in &mut sorted[range] {
            *s = mean;
        }
    }
    let mut out = Array1::zeros(n);
    for (k, &idx) in pools.perm.iter().enumerate() {
        out[idx] = sorted[k];
    }
    out
}

/// Subgradient of the Wilcoxon loss: `g_i = 2/(n(n-1)) * (2 R_i - n - 1)` with
/// ascending ranks `R_i`; ties receive average ranks.
pub fn wilcoxon_subgradient<F: Scalar>(u: &Array1<F>) -> Array1<F> {
    let n = u.len();
    assert!(n >= 2, "Wilcoxon subgradient needs n >= 2");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        u[i].partial_cmp(&u[j])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut ranks = vec![F::zero(); n];
    let mut k = 0usize;
    while k < n {
        let mut kk = k + 1;
        while kk < n && u[idx[kk]] == u[idx[k]] {
            kk += 1;
        }
        // positions k..kk share the average of ranks k+1..kk (one-based)
        let avg = F::of_usize(k + 1 + kk) / F::of(2.0);
        for &i in &idx[k..kk] {
            ranks[i] = avg;
        }
        k = kk;
    }
    let c = F::of(2.0) / (F::of_usize(n) * F::of_usize(n - 1));
    Array1::from_iter(
        ranks
            .into_iter()
            .map(|r| c * (F::of(2.0) * r - F::of_usize(n) - F::one())),
    )
}

/// Value of the Wilcoxon loss, computed in O(n log n) from ranks:
/// `h(u) = <g, u>` for any rank-based subgradient g.
pub fn wilcoxon_value<F: Scalar>(u: &Array1<F>) -> F {
    wilcoxon_subgradient(u).dot(u)
}

/// Prox of `tau * ||.||_2`: radial shrinkage toward the origin.
pub fn prox_euclidean<F: Scalar>(y: &Array1<F>, tau: F) -> Array1<F> {
    debug_assert!(tau > F::zero());
    let norm = l2_norm(y);
    if norm > tau {
        y.mapv(|yi| yi * (F::one() - tau / norm))
    } else {
        Array1::zeros(y.len())
    }
}

/// Jacobian action of the Euclidean prox at `y`:
/// `(1 - tau/|y|) v + (tau/|y|^3) (y^T v) y` if `|y| > tau`, else the zero map.
pub fn euclidean_jacobian_apply<F: Scalar>(y: &Array1<F>, tau: F, v: &Array1<F>) -> Array1<F> {
    let norm = l2_norm(y);
    if norm > tau {
        let scale = F::one() - tau / norm;
        let coef = tau / (norm * norm * norm) * y.dot(v);
        v.mapv(|vi| vi * scale) + &y.mapv(|yi| yi * coef)
    } else {
        Array1::zeros(v.len())
    }
}

/// Generalized Jacobian of a loss prox, held in the structure produced by the
/// prox itself so the Hessian action never materializes a matrix.
#[derive(Debug, Clone)]
pub enum LossJacobian<F> {
    /// Wilcoxon prox: pool averaging.
    Pools(PoolDecomposition<F>),
    /// Euclidean prox outside the ball.
    Radial { y: Array1<F>, tau: F },
    /// Euclidean prox shrunk to zero.
    Zero(usize),
}

impl<F: Scalar> LossJacobian<F> {
    pub fn apply(&self, v: &Array1<F>) -> Array1<F> {
        match self {
            LossJacobian::Pools(pools) => wilcoxon_jacobian_apply(pools, v),
            LossJacobian::Radial { y, tau } => euclidean_jacobian_apply(y, *tau, v),
            LossJacobian::Zero(n) => Array1::zeros(*n),
        }
    }
}

pub(crate) fn l2_norm<F: Scalar>(v: &Array1<F>) -> F {
    v.dot(v).sqrt()
}
