//! Independent first-order operator-splitting solver over the constraints
//! `u = b - Ax`, `z = x`, used as a correctness oracle and optional presolve.
//! Shares only the prox operators with the Newton path; allowed to be slow.

use ndarray::{Array1, Array2};

use crate::error::SolverError;
use crate::model::{objective, ProblemData};
use crate::prox::{self, soft_threshold};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SplittingOutput<F> {
    pub x: Array1<F>,
    pub val: F,
    pub primal_res: F,
    pub dual_res: F,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternating-direction iteration on `min h(u) + lambda||z||_1` subject to
/// `u = b - Ax`, `z = x`: closed-form prox updates for (u, z), a CG solve of
/// the regularized normal system `(A'A + I)x = rhs` for x, then dual ascent.
/// Stops when both primal and dual residual norms fall below `tol`.
pub fn splitting_solve<F: Scalar>(
    problem: &ProblemData<F>,
    tol: F,
    max_iter: usize,
) -> Result<SplittingOutput<F>, SolverError<F>> {
    splitting_solve_prox(problem, None, tol, max_iter)
}

/// Same splitting applied to the proximally regularized objective
/// `... + |x - anchor|^2/(2 sigma)`; used to cross-check the inner solvers.
pub fn splitting_solve_prox<F: Scalar>(
    problem: &ProblemData<F>,
    anchor_term: Option<(&Array1<F>, F)>,
    tol: F,
    max_iter: usize,
) -> Result<SplittingOutput<F>, SolverError<F>> {
    if !(tol > F::zero()) {
        return Err(SolverError::InvalidArgument("tol must be positive".into()));
    }
    let (n, p) = (problem.n(), problem.p());
    let a = problem.a();
    let lambda = problem.lambda();
    let mut x = Array1::<F>::zeros(p);
    let mut u;
    let mut z;
    let mut w1 = Array1::<F>::zeros(n); // scaled duals
    let mut w2 = Array1::<F>::zeros(p);
    let mut beta = F::one();

    let mut primal = F::infinity();
    let mut dual = F::infinity();
    for it in 1..=max_iter {
        let ax_old = a.dot(&x);
        // (u, z) block
        u = problem
            .loss()
            .prox_point(&(problem.b() - &ax_old - &w1), F::one() / beta);
        z = soft_threshold(&(&x - &w2), lambda / beta);

        // x block: (A'A + I + c)x = A'(b - u - w1) + z + w2 + c*anchor,
        // c = 1/(beta*sigma) when the proximal term is present
        let c = anchor_term.map_or(F::zero(), |(_, sigma)| F::one() / (beta * sigma));
        let mut rhs = a.t().dot(&(problem.b() - &u - &w1)) + &z + &w2;
        if let Some((anchor, _)) = anchor_term {
            rhs = rhs + &anchor.mapv(|v| v * c);
        }
        let x_prev = x.clone();
        x = cg_normal(a, &rhs, c, x, F::of(1e-13), 4 * p + 50)?;

        let ax = a.dot(&x);
        let r1 = &u + &ax - problem.b();
        let r2 = &z - &x;
        w1 += &r1;
        w2 += &r2;

        primal = (prox::l2_norm(&r1).powi(2) + prox::l2_norm(&r2).powi(2)).sqrt();
        // the (u, z) block was minimized against the previous x, so its
        // stationarity is stale by beta * [A dx; -dx]
        let dax = &ax - &ax_old;
        let dx = &x - &x_prev;
        dual = beta * (prox::l2_norm(&dax).powi(2) + prox::l2_norm(&dx).powi(2)).sqrt();
        if !primal.is_finite() || !dual.is_finite() {
            return Err(SolverError::NumericFailure(
                "splitting solver produced non-finite residuals".into(),
            ));
        }
        if primal <= tol && dual <= tol {
            return Ok(SplittingOutput {
                val: objective(problem, &x)?,
                x,
                primal_res: primal,
                dual_res: dual,
                iterations: it,
                converged: true,
            });
        }
        // residual balancing on a fixed cadence
        if it % 100 == 0 {
            let ten = F::of(10.0);
            if primal > ten * dual && beta < F::of(1e4) {
                beta = beta * F::of(2.0);
                w1.mapv_inplace(|v| v / F::of(2.0));
                w2.mapv_inplace(|v| v / F::of(2.0));
            } else if dual > ten * primal && beta > F::of(1e-4) {
                beta = beta / F::of(2.0);
                w1.mapv_inplace(|v| v * F::of(2.0));
                w2.mapv_inplace(|v| v * F::of(2.0));
            }
        }
    }
    Ok(SplittingOutput {
        val: objective(problem, &x)?,
        x,
        primal_res: primal,
        dual_res: dual,
        iterations: max_iter,
        converged: false,
    })
}

/// CG for `(A'A + (1 + c) I) x = rhs`, warm-started.
fn cg_normal<F: Scalar>(
    a: &Array2<F>,
    rhs: &Array1<F>,
    c: F,
    x0: Array1<F>,
    rel_tol: F,
    max_iter: usize,
) -> Result<Array1<F>, SolverError<F>> {
    let shift = F::one() + c;
    let apply = |v: &Array1<F>| a.t().dot(&a.dot(v)) + &v.mapv(|w| w * shift);
    let mut x = x0;
    let mut r = rhs - &apply(&x);
    let target = rel_tol * prox::l2_norm(rhs).max(F::of(1e-30));
    let mut rs = r.dot(&r);
    if rs.sqrt() <= target {
        return Ok(x);
    }
    let mut p = r.clone();
    for _ in 0..max_iter {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !pap.is_finite() || pap <= F::zero() {
            return Err(SolverError::NumericFailure(
                "normal-equation CG lost positive definiteness".into(),
            ));
        }
        let alpha = rs / pap;
        x = x + &p.mapv(|v| v * alpha);
        r = r - &ap.mapv(|v| v * alpha);
        let rs_new = r.dot(&r);
        if rs_new.sqrt() <= target {
            break;
        }
        p = &r + &p.mapv(|v| v * (rs_new / rs));
        rs = rs_new;
    }
    Ok(x)
}

/// Exact Wilcoxon prox for small n: sort, shift by the score vector, then
/// exact nonincreasing projection by enumerating all 2^(n-1) contiguous pool
/// partitions and selecting the feasible candidate satisfying the projection
/// KKT conditions.
pub fn enumerate_prox_oracle<F: Scalar>(
    y: &Array1<F>,
    tau: F,
) -> Result<Array1<F>, SolverError<F>> {
    let n = y.len();
    if n < 2 || n > 10 {
        return Err(SolverError::InvalidArgument(format!(
            "enumeration oracle supports 2 <= n <= 10, got {n}"
        )));
    }
    let c = F::of(2.0) * tau / (F::of_usize(n) * F::of_usize(n - 1));
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by(|&i, &j| {
        y[j].partial_cmp(&y[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let shifted: Vec<F> = perm
        .iter()
        .enumerate()
        .map(|(k, &idx)| y[idx] - c * (F::of_usize(n) - F::of(2.0) * F::of_usize(k) - F::one()))
        .collect();

    let proj = enumerate_projection(&shifted);
    let mut out = Array1::zeros(n);
    for (k, &idx) in perm.iter().enumerate() {
        out[idx] = proj[k];
    }
    Ok(out)
}

/// Exact projection onto the nonincreasing cone by partition enumeration.
fn enumerate_projection<F: Scalar>(z: &[F]) -> Vec<F> {
    let n = z.len();
    let slack = F::of(1e-12);
    let mut kkt_choice: Option<Vec<F>> = None;
    let mut best: Option<(F, Vec<F>)> = None;
    for mask in 0..(1u32 << (n - 1)) {
        // block boundaries after position i where bit i is set
        let mut cand = Vec::with_capacity(n);
        let mut means: Vec<(F, usize, usize)> = Vec::new(); // (mean, start, end)
        let mut start = 0usize;
        for i in 0..n {
            if i == n - 1 || (mask >> i) & 1 == 1 {
                let len = i - start + 1;
                let mean =
                    z[start..=i].iter().fold(F::zero(), |acc, &v| acc + v) / F::of_usize(len);
                means.push((mean, start, i));
                cand.extend(std::iter::repeat(mean).take(len));
                start = i + 1;
            }
        }
        // feasibility: block means nonincreasing
        if means.windows(2).any(|w| w[0].0 < w[1].0) {
            continue;
        }
        // KKT: multipliers (prefix sums of mean - z within each block) stay
        // nonnegative
        let scale = F::one() + z.iter().fold(F::zero(), |m: F, &v| m.max(v.abs()));
        let mut kkt_ok = true;
        'blocks: for &(mean, s, e) in &means {
            let mut mu = F::zero();
            for i in s..e {
                mu += mean - z[i];
                if mu < -slack * scale {
                    kkt_ok = false;
                    break 'blocks;
                }
            }
        }
        let dist = cand
            .iter()
            .zip(z.iter())
            .fold(F::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
        if kkt_ok && kkt_choice.is_none() {
            kkt_choice = Some(cand.clone());
        }
        if best.as_ref().map_or(true, |(d, _)| dist < *d) {
            best = Some((dist, cand));
        }
    }
    // the KKT-certified candidate is the projection; the distance argmin over
    // feasible candidates coincides with it and covers any fp corner case
    kkt_choice.unwrap_or_else(|| best.expect("singleton partition is always feasible").1)
}
