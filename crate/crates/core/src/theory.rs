//! Noise amplification of the minimum-norm solution.
//!
//! For a Gaussian `N × D` matrix `X` with `N < D` and `ω ~ N(0, I_N)`,
//! `‖X†y − X†Xθ*‖ = ‖X†ω‖`, and `E‖X†ω‖ → √(N/(D−N))` as both dimensions
//! grow with `N/D` fixed. The limit follows from the Marchenko–Pastur law:
//! for unit-variance entries the eigenvalues of `XXᵀ/D` follow
//! `f_λ(x) = √((λ₊−x)(x−λ₋)) / (2πλx)` on `[λ₋, λ₊]`, `λ± = (1 ± √λ)²`,
//! `λ = N/D`, and `∫ f_λ(x)/x dx = 1/(1−λ)`. Hence
//! `(1/N) Σ 1/σᵢ² → 1/(D−N)`.
//!
//! The heuristic `E‖X†Xθ*‖ ~ √(N/D)‖Xθ*‖` sometimes quoted alongside this
//! compares vectors of different dimensions and is not checked here.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::linalg::{pseudo_inverse, DEFAULT_SV_TOL_FACTOR};
use crate::rng;

/// Marchenko–Pastur parameters for aspect ratio `λ ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpParams {
    lambda: f64,
    lambda_minus: f64,
    lambda_plus: f64,
}

impl MpParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(invalid(format!("Marchenko-Pastur ratio must lie in (0, 1), got {lambda}")));
        }
        let r = lambda.sqrt();
        Ok(Self { lambda, lambda_minus: (1.0 - r).powi(2), lambda_plus: (1.0 + r).powi(2) })
    }

    /// `λ = n / d`.
    pub fn from_dims(n: usize, d: usize) -> Result<Self> {
        if n == 0 || n >= d {
            return Err(invalid(format!("need 0 < n < d, got n={n}, d={d}")));
        }
        Self::new(n as f64 / d as f64)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_minus(&self) -> f64 {
        self.lambda_minus
    }

    pub fn lambda_plus(&self) -> f64 {
        self.lambda_plus
    }
}

/// `f_λ(x)`; zero outside `(λ₋, λ₊)`.
pub fn mp_density(p: &MpParams, x: f64) -> f64 {
    if x <= p.lambda_minus || x >= p.lambda_plus {
        return 0.0;
    }
    let radicand = (p.lambda_plus - x) * (x - p.lambda_minus);
    radicand.max(0.0).sqrt() / (2.0 * std::f64::consts::PI * p.lambda * x)
}

/// `∫ f_λ(x)/x dx = 1/(1−λ)` in closed form.
pub fn mp_inverse_moment(p: &MpParams) -> f64 {
    1.0 / (1.0 - p.lambda)
}

// 15-point Kronrod nodes on [0, 1] (symmetric), with the embedded 7-point
// Gauss rule on the odd-indexed nodes.
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = half * GK_NODES[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += GK_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`, bisecting
/// until each piece's error estimate is within its share of `tol`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gauss_kronrod(f, a, b);
        if err <= tol || depth == 0 {
            return value;
        }
        let mid = 0.5 * (a + b);
        recurse(f, a, mid, 0.5 * tol, depth - 1) + recurse(f, mid, b, 0.5 * tol, depth - 1)
    }
    recurse(&f, a, b, tol, 48)
}

const QUAD_TOL: f64 = 1e-11;

/// Total mass of `f_λ` by quadrature; should be 1.
pub fn mp_mass_quadrature(p: &MpParams) -> f64 {
    integrate_adaptive(|x| mp_density(p, x), p.lambda_minus, p.lambda_plus, QUAD_TOL)
}

/// `∫ f_λ(x)/x dx` by quadrature, the independent check of
/// [`mp_inverse_moment`].
pub fn mp_inverse_moment_quadrature(p: &MpParams) -> f64 {
    integrate_adaptive(|x| mp_density(p, x) / x, p.lambda_minus, p.lambda_plus, QUAD_TOL)
}

/// `√(n/(d−n))`, the limiting `E‖X†ω‖`.
pub fn predicted_error_norm(n: usize, d: usize) -> Result<f64> {
    if n >= d {
        return Err(invalid(format!("need n < d, got n={n}, d={d}")));
    }
    Ok((n as f64 / (d - n) as f64).sqrt())
}

fn gaussian_matrix<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `‖X†(Xθ + ω) − X†Xθ‖`, built the long way round.
pub fn reconstruction_error(x: &DMatrix<f64>, theta: &DVector<f64>, omega: &DVector<f64>) -> Result<f64> {
    let pinv = pseudo_inverse(x, DEFAULT_SV_TOL_FACTOR)?;
    let clean = x * theta;
    let noisy = &clean + omega;
    Ok((&pinv * noisy - &pinv * clean).norm())
}

/// `‖X†ω‖`, the same quantity after the linearity reduction.
pub fn noise_amplification(x: &DMatrix<f64>, omega: &DVector<f64>) -> Result<f64> {
    Ok((pseudo_inverse(x, DEFAULT_SV_TOL_FACTOR)? * omega).norm())
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { mean, std_error: (var / n).sqrt() }
    }
}

fn trial_stream(seed: u64, tag: u64, n: usize, d: usize, t: usize) -> rng::Stream {
    rng::stream(rng::derive_seed(seed, &[tag, n as u64, d as u64, t as u64]))
}

const ERROR_NORM_TAG: u64 = 0x4552_524e; // "ERRN"
const INV_SV_TAG: u64 = 0x494e_5653; // "INVS"

/// Monte-Carlo estimate of `E‖X†ω‖` over fresh Gaussian `X` (`n × d`) and
/// `ω ~ N(0, I_n)`. Trial `t` draws from a stream derived from
/// `(seed, n, d, t)`, so the result is independent of the thread count.
pub fn empirical_error_norm(n: usize, d: usize, trials: usize, seed: u64) -> Result<Estimate> {
    if n == 0 || n >= d {
        return Err(invalid(format!("need 0 < n < d, got n={n}, d={d}")));
    }
    if trials < 2 {
        return Err(invalid("need at least 2 trials for a standard error"));
    }
    let samples = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_stream(seed, ERROR_NORM_TAG, n, d, t);
            let x = gaussian_matrix(n, d, &mut rng);
            let omega = gaussian_vector(n, &mut rng);
            noise_amplification(&x, &omega)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(&samples))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseSingularMean {
    /// Average over trials of `(1/n) Σ 1/σᵢ²`.
    pub mean: f64,
    /// Singular values at or below the rank cutoff, which were skipped.
    pub excluded: usize,
}

/// `(1/n) Σ 1/σᵢ²` over the retained singular values of `x`, plus the number
/// of excluded ones.
pub fn inverse_singular_mean(x: &DMatrix<f64>) -> (f64, usize) {
    let (n, d) = x.shape();
    let sv = x.singular_values();
    let cutoff = n.max(d) as f64 * sv.max() * f64::EPSILON * DEFAULT_SV_TOL_FACTOR;
    let (sum, excluded) = sv.iter().fold((0.0, 0), |(sum, ex), &s| {
        if s > cutoff {
            (sum + 1.0 / (s * s), ex)
        } else {
            (sum, ex + 1)
        }
    });
    (sum / n as f64, excluded)
}

/// Monte-Carlo estimate of `E (1/n) Σ 1/σᵢ²` over Gaussian `n × d`
/// matrices; the limit is `1/(d−n)`.
pub fn empirical_inverse_singular_mean(
    n: usize,
    d: usize,
    trials: usize,
    seed: u64,
) -> Result<InverseSingularMean> {
    if n == 0 || n >= d {
        return Err(invalid(format!("need 0 < n < d, got n={n}, d={d}")));
    }
    if trials == 0 {
        return Err(invalid("need at least 1 trial"));
    }
    let per_trial: Vec<(f64, usize)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_stream(seed, INV_SV_TAG, n, d, t);
            inverse_singular_mean(&gaussian_matrix(n, d, &mut rng))
        })
        .collect();
    let mean = per_trial.iter().map(|p| p.0).sum::<f64>() / trials as f64;
    let excluded = per_trial.iter().map(|p| p.1).sum();
    Ok(InverseSingularMean { mean, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    const LAMBDAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

    #[test]
    fn mp_params_invariants() {
        for l in LAMBDAS {
            let p = MpParams::new(l).unwrap();
            assert!(0.0 < p.lambda_minus() && p.lambda_minus() < 1.0 && 1.0 < p.lambda_plus());
            assert!((p.lambda_plus() - p.lambda_minus() - 4.0 * l.sqrt()).abs() < 1e-12);
        }
        for bad in [0.0, 1.0, 1.5, -0.1, f64::NAN] {
            assert!(MpParams::new(bad).is_err());
        }
        assert!(MpParams::from_dims(300, 300).is_err());
        assert_eq!(MpParams::from_dims(150, 300).unwrap().lambda(), 0.5);
    }

    #[test]
    fn density_support_and_sign() {
        let p = MpParams::new(0.4).unwrap();
        assert_eq!(mp_density(&p, p.lambda_minus()), 0.0);
        assert_eq!(mp_density(&p, p.lambda_plus()), 0.0);
        assert_eq!(mp_density(&p, p.lambda_minus() * 0.5), 0.0);
        assert_eq!(mp_density(&p, p.lambda_plus() + 1.0), 0.0);
        assert_eq!(mp_density(&p, -1.0), 0.0);
        for i in 1..200 {
            let x = p.lambda_plus() * 1.1 * i as f64 / 200.0;
            assert!(mp_density(&p, x) >= 0.0);
        }
    }

    #[test]
    fn quadrature_sanity() {
        let v = integrate_adaptive(f64::sin, 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
        // Square-root endpoint behaviour: ∫₀¹ √x dx = 2/3.
        let v = integrate_adaptive(f64::sqrt, 0.0, 1.0, 1e-12);
        assert!((v - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn density_is_normalized() {
        for l in LAMBDAS {
            let p = MpParams::new(l).unwrap();
            assert!((mp_mass_quadrature(&p) - 1.0).abs() < 1e-6, "lambda {l}");
        }
    }

    #[test]
    fn inverse_moment_closed_form_matches_quadrature() {
        for l in LAMBDAS {
            let p = MpParams::new(l).unwrap();
            let q = mp_inverse_moment_quadrature(&p);
            assert!((q - mp_inverse_moment(&p)).abs() < 1e-6, "lambda {l}: {q}");
        }
        assert_eq!(mp_inverse_moment(&MpParams::new(0.5).unwrap()), 2.0);
        assert!((mp_inverse_moment(&MpParams::new(1e-12).unwrap()) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn predicted_values() {
        assert_eq!(predicted_error_norm(150, 300).unwrap(), 1.0);
        assert!((predicted_error_norm(10, 300).unwrap() - 0.185_695_338).abs() < 1e-8);
        assert_eq!(predicted_error_norm(0, 300).unwrap(), 0.0);
        assert!(predicted_error_norm(1, 1_000_000).unwrap() < 1.1e-3);
        assert!(predicted_error_norm(300, 300).is_err());
    }

    #[test]
    fn reduction_to_noise_only() {
        let mut r = stream(3);
        let x = gaussian_matrix(20, 50, &mut r);
        let omega = gaussian_vector(20, &mut r);
        let base = noise_amplification(&x, &omega).unwrap();
        for scale in [0.0, 1.0, 10.0] {
            let theta = gaussian_vector(50, &mut r) * scale;
            let long = reconstruction_error(&x, &theta, &omega).unwrap();
            assert!((long - base).abs() <= 1e-10 * (1.0 + base), "{long} vs {base}");
        }
    }

    #[test]
    fn inverse_singular_mean_is_frobenius_norm_of_pinv() {
        let x = gaussian_matrix(15, 40, &mut stream(5));
        let (mean, excluded) = inverse_singular_mean(&x);
        let fro = pseudo_inverse(&x, 1.0).unwrap().norm_squared() / 15.0;
        assert_eq!(excluded, 0);
        assert!((mean - fro).abs() <= 1e-10 * fro);
    }

    #[test]
    fn jensen_direction_at_fixed_matrix() {
        let mut r = stream(11);
        let x = gaussian_matrix(40, 100, &mut r);
        let pinv = pseudo_inverse(&x, 1.0).unwrap();
        let norms: Vec<f64> = (0..2000).map(|_| (&pinv * gaussian_vector(40, &mut r)).norm()).collect();
        let squares: Vec<f64> = norms.iter().map(|v| v * v).collect();
        let mean = Estimate::from_samples(&norms);
        let mean_sq = Estimate::from_samples(&squares);
        assert!(mean.mean * mean.mean <= mean_sq.mean + 3.0 * mean_sq.std_error);
    }

    #[test]
    fn error_norm_is_reproducible_and_checked() {
        let a = empirical_error_norm(20, 60, 8, 4).unwrap();
        let b = empirical_error_norm(20, 60, 8, 4).unwrap();
        assert_eq!(a, b);
        assert!(empirical_error_norm(60, 60, 8, 4).is_err());
        assert!(empirical_error_norm(20, 60, 1, 4).is_err());
        assert!(empirical_inverse_singular_mean(60, 40, 3, 1).is_err());
    }

    #[test]
    fn error_norm_near_half_ratio() {
        let est = empirical_error_norm(150, 300, 100, 2024).unwrap();
        assert!((est.mean - 1.0).abs() < 0.05, "{est:?}");
        assert!(est.std_error > 0.0);
    }
}
