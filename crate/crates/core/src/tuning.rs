//! Tuning-free regularization parameter selection.
//!
//! For the rank loss, `lambda = c * G^{-1}(1 - alpha0)` where `G` is the
//! distribution of `||S_n||_inf` with `S_n = -2/(n(n-1)) * X' xi`,
//! `xi = 2r - (n+1)` and `r` a uniformly random permutation of `1..n`.
//! For the Euclidean loss, `lambda = 1.1 * Phi^{-1}(1 - 0.05/(2n))`.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::scalar::Scalar;

/// Simulation parameters for the rank-loss lambda.
#[derive(Debug, Clone, Copy)]
pub struct LambdaSpec<F> {
    pub c: F,
    pub alpha0: F,
    pub draws: usize,
    pub seed: u64,
}

impl<F: Scalar> Default for LambdaSpec<F> {
    fn default() -> Self {
        Self {
            c: F::of(1.1),
            alpha0: F::of(0.10),
            draws: 1000,
            seed: 0,
        }
    }
}

/// Empirical `(1 - alpha0)`-quantile (nearest rank) of `||S_n||_inf` over
/// `draws` permutation draws, times `c`. Returns a tiny positive floor for a
/// degenerate (zero) design.
pub fn rank_lambda<F: Scalar>(x: &Array2<F>, spec: &LambdaSpec<F>) -> F {
    let (n, p) = x.dim();
    assert!(n >= 2, "rank lambda needs n >= 2");
    assert!(spec.draws >= 1);
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let scale = F::of(2.0) / (F::of_usize(n) * F::of_usize(n - 1));
    let mut stats: Vec<F> = Vec::with_capacity(spec.draws);
    let mut r: Vec<usize> = (1..=n).collect();
    let mut xi = Array1::<F>::zeros(n);
    for _ in 0..spec.draws {
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            r.swap(i, j);
        }
        for (i, &ri) in r.iter().enumerate() {
            xi[i] = F::of(2.0) * F::of_usize(ri) - F::of_usize(n) - F::one();
        }
        let s = x.t().dot(&xi);
        let sup = s.iter().fold(F::zero(), |m: F, &v| m.max(v.abs())) * scale;
        stats.push(sup);
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let q = F::one() - spec.alpha0;
    let rank = (q * F::of_usize(spec.draws))
        .ceil()
        .to_usize()
        .unwrap_or(spec.draws)
        .clamp(1, spec.draws);
    let lambda = spec.c * stats[rank - 1];
    let _ = p;
    lambda.max(F::of(1e-12))
}

/// `1.1 * Phi^{-1}(1 - 0.05/(2n))` for the square-root lasso.
pub fn sqrt_lasso_lambda<F: Scalar>(n: usize) -> F {
    assert!(n >= 1);
    let p = 1.0 - 0.05 / (2.0 * n as f64);
    F::of(1.1 * inverse_normal_cdf(p))
}

/// Inverse standard normal CDF by the Wichura AS 241 rational approximation
/// (PPND16), accurate to well below 1e-9 over (0, 1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability must lie in (0,1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545_5e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_646e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn rank_lambda_zero_design_floor() {
        let x = Array2::<f64>::zeros((5, 3));
        let lambda = rank_lambda(&x, &LambdaSpec::default());
        assert_eq!(lambda, 1e-12);
    }

    #[test]
    fn rank_lambda_two_sample_exhaustive() {
        // n = 2, single column (1, -1): both permutations give |S_n| = 2,
        // so lambda = 1.1 * 2 regardless of the draw
        let x = array![[1.0], [-1.0]];
        let lambda = rank_lambda(&x, &LambdaSpec::default());
        assert_abs_diff_eq!(lambda, 2.2, epsilon = 1e-12);
    }

    #[test]
    fn rank_lambda_quantile_monotone_in_alpha0() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(607);
        let x = Array2::from_shape_fn((20, 15), |_| rng.random::<f64>() - 0.5);
        let spec05 = LambdaSpec {
            alpha0: 0.05,
            ..LambdaSpec::default()
        };
        let spec10 = LambdaSpec::default();
        assert!(rank_lambda(&x, &spec05) >= rank_lambda(&x, &spec10));
    }

    #[test]
    fn rank_lambda_scales_linearly_and_reproduces() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(613);
        let x = Array2::from_shape_fn((12, 8), |_| rng.random::<f64>() * 2.0 - 1.0);
        let spec = LambdaSpec {
            seed: 99,
            ..LambdaSpec::default()
        };
        let l1 = rank_lambda(&x, &spec);
        let l2 = rank_lambda(&x.mapv(|v| 3.0 * v), &spec);
        assert_abs_diff_eq!(l2, 3.0 * l1, epsilon = 1e-12);
        // bitwise reproducibility
        assert_eq!(l1.to_bits(), rank_lambda(&x, &spec).to_bits());
    }

    #[test]
    fn sqrt_lambda_reference_values() {
        // n = 1: Phi^{-1}(0.975) = 1.959964..., lambda = 2.155960...
        let l1: f64 = sqrt_lasso_lambda(1);
        assert_abs_diff_eq!(l1, 2.155960, epsilon = 1e-5);
        assert_abs_diff_eq!(l1, 1.1 * 1.959963984540054, epsilon = 1e-9);

        // strictly increasing in n
        let mut prev = 0.0;
        for n in [1usize, 2, 5, 10, 100, 1000] {
            let l: f64 = sqrt_lasso_lambda(n);
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn inverse_cdf_matches_independent_implementation() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        for &p in &[
            1e-9, 1e-6, 1e-3, 0.025, 0.2, 0.5, 0.8, 0.975, 0.99975, 1.0 - 1e-6, 1.0 - 1e-9,
        ] {
            let ours = inverse_normal_cdf(p);
            let reference = normal.inverse_cdf(p);
            assert_abs_diff_eq!(ours, reference, epsilon = 1e-9);
        }
        // n = 100 case used by the square-root lasso default
        let l: f64 = sqrt_lasso_lambda(100);
        assert_abs_diff_eq!(l, 1.1 * normal.inverse_cdf(0.99975), epsilon = 1e-9);
    }
}
