//! Minimum-norm least squares.
//!
//! [`min_norm_least_squares`] and [`pseudo_inverse`] go through a full SVD and
//! handle every shape and rank. [`RowSubsetAverager`] is the hot kernel of the
//! peeling solvers: it averages minimum-norm solutions of many row subsets of
//! one system and reuses the Gram matrix `A Aᵀ` across subsets.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Default multiplier on the `max(n, d) · σ_max · ε` singular-value cutoff.
pub const DEFAULT_SV_TOL_FACTOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LstSqSolution {
    pub theta_hat: DVector<f64>,
    pub rank: usize,
    pub residual_norm: f64,
}

fn check_finite_matrix(a: &DMatrix<f64>) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    Ok(())
}

fn check_tol(sv_tol_factor: f64) -> Result<()> {
    if !(sv_tol_factor > 0.0 && sv_tol_factor.is_finite()) {
        return Err(invalid(format!("sv_tol_factor must be positive, got {sv_tol_factor}")));
    }
    Ok(())
}

fn sv_cutoff(n: usize, d: usize, sigma_max: f64, sv_tol_factor: f64) -> f64 {
    n.max(d) as f64 * sigma_max * f64::EPSILON * sv_tol_factor
}

/// Thin SVD factors with the reciprocal singular values already truncated:
/// `A† = Vᵀᵀ · diag(inv) · Uᵀ`.
struct TruncatedSvd {
    u: DMatrix<f64>,
    v_t: DMatrix<f64>,
    inv: DVector<f64>,
    rank: usize,
}

fn truncated_svd(a: &DMatrix<f64>, sv_tol_factor: f64) -> TruncatedSvd {
    let (n, d) = a.shape();
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = sv_cutoff(n, d, sigma_max, sv_tol_factor);
    let mut rank = 0;
    let inv = svd.singular_values.map(|s| {
        if s > cutoff {
            rank += 1;
            1.0 / s
        } else {
            0.0
        }
    });
    TruncatedSvd {
        u: svd.u.expect("requested U"),
        v_t: svd.v_t.expect("requested Vᵀ"),
        inv,
        rank,
    }
}

/// The minimum-ℓ² minimizer of `‖A θ − b‖`.
///
/// Singular values at or below `max(n, d) · σ_max · ε · sv_tol_factor` are
/// treated as zero; `rank` counts the ones that survive.
pub fn min_norm_least_squares(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    sv_tol_factor: f64,
) -> Result<LstSqSolution> {
    let (n, d) = a.shape();
    if b.len() != n {
        return Err(invalid(format!("rhs has length {} but matrix has {n} rows", b.len())));
    }
    check_tol(sv_tol_factor)?;
    check_finite_matrix(a)?;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(invalid("rhs has non-finite entries"));
    }
    if n == 0 || d == 0 {
        return Ok(LstSqSolution {
            theta_hat: DVector::zeros(d),
            rank: 0,
            residual_norm: b.norm(),
        });
    }
    let svd = truncated_svd(a, sv_tol_factor);
    let coeffs = (svd.u.transpose() * b).component_mul(&svd.inv);
    let theta_hat = svd.v_t.transpose() * coeffs;
    let residual_norm = (a * &theta_hat - b).norm();
    Ok(LstSqSolution { theta_hat, rank: svd.rank, residual_norm })
}

/// Moore–Penrose pseudo-inverse with the same cutoff as
/// [`min_norm_least_squares`].
pub fn pseudo_inverse(a: &DMatrix<f64>, sv_tol_factor: f64) -> Result<DMatrix<f64>> {
    check_tol(sv_tol_factor)?;
    check_finite_matrix(a)?;
    let (n, d) = a.shape();
    if n == 0 || d == 0 {
        return Ok(DMatrix::zeros(d, n));
    }
    let svd = truncated_svd(a, sv_tol_factor);
    let mut v = svd.v_t.transpose();
    for (j, s) in svd.inv.iter().enumerate() {
        v.column_mut(j).scale_mut(*s);
    }
    Ok(v * svd.u.transpose())
}

/// Smallest Cholesky pivot, relative to the largest Gram diagonal, accepted
/// on the Gram path. Smaller pivots fall back to the SVD.
const GRAM_PIVOT_RATIO: f64 = 1e-8;

/// Averages `A_S† b_S` over row subsets `S` of a fixed system `(A, b)`.
///
/// For a subset with `|S| ≤ d` and full row rank, `A_S† = A_Sᵀ (A_S A_Sᵀ)⁻¹`
/// and `A_S A_Sᵀ` is the principal submatrix `G[S, S]` of `G = A Aᵀ`. The
/// minimum-norm solution is therefore `A_Sᵀ z_S` with `G[S, S] z_S = b_S`,
/// and the average over subsets is `Aᵀ w / m` where `w` accumulates the
/// scattered `z_S`. Subsets that are overdetermined or whose Gram block is
/// numerically singular are solved with [`min_norm_least_squares`].
pub struct RowSubsetAverager<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    gram: DMatrix<f64>,
    sv_tol_factor: f64,
    dual: DVector<f64>,
    primal: DVector<f64>,
    count: usize,
    svd_fallbacks: usize,
}

impl<'a> RowSubsetAverager<'a> {
    pub fn new(a: &'a DMatrix<f64>, b: &'a DVector<f64>, sv_tol_factor: f64) -> Result<Self> {
        let (n, d) = a.shape();
        if b.len() != n {
            return Err(invalid(format!("rhs has length {} but matrix has {n} rows", b.len())));
        }
        check_tol(sv_tol_factor)?;
        check_finite_matrix(a)?;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(invalid("rhs has non-finite entries"));
        }
        Ok(Self {
            a,
            b,
            gram: a * a.transpose(),
            sv_tol_factor,
            dual: DVector::zeros(n),
            primal: DVector::zeros(d),
            count: 0,
            svd_fallbacks: 0,
        })
    }

    /// Adds the minimum-norm solution on the rows `subset` (distinct indices).
    pub fn add_subset(&mut self, subset: &[usize]) -> Result<()> {
        let (n, d) = self.a.shape();
        if let Some(&bad) = subset.iter().find(|&&i| i >= n) {
            return Err(invalid(format!("row index {bad} out of range for {n} rows")));
        }
        self.count += 1;
        if subset.is_empty() {
            return Ok(());
        }
        if subset.len() <= d && self.add_via_gram(subset) {
            return Ok(());
        }
        self.svd_fallbacks += 1;
        let a_s = self.a.select_rows(subset);
        let b_s = DVector::from_iterator(subset.len(), subset.iter().map(|&i| self.b[i]));
        let sol = min_norm_least_squares(&a_s, &b_s, self.sv_tol_factor)?;
        self.primal += sol.theta_hat;
        Ok(())
    }

    fn add_via_gram(&mut self, subset: &[usize]) -> bool {
        let s = subset.len();
        let g = DMatrix::from_fn(s, s, |i, j| self.gram[(subset[i], subset[j])]);
        let max_diag = g.diagonal().max();
        let Some(chol) = g.cholesky() else {
            return false;
        };
        let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, &v| m.min(v * v));
        if max_diag.is_nan() || max_diag <= 0.0 || min_pivot < GRAM_PIVOT_RATIO * max_diag {
            return false;
        }
        let b_s = DVector::from_iterator(s, subset.iter().map(|&i| self.b[i]));
        let z = chol.solve(&b_s);
        for (&row, zi) in subset.iter().zip(z.iter()) {
            self.dual[row] += zi;
        }
        true
    }

    /// Clears the accumulated solutions; the Gram matrix is kept.
    pub fn reset(&mut self) {
        self.dual.fill(0.0);
        self.primal.fill(0.0);
        self.count = 0;
        self.svd_fallbacks = 0;
    }

    /// Number of subsets added so far.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Number of subsets that needed the SVD fallback.
    pub fn svd_fallbacks(&self) -> usize {
        self.svd_fallbacks
    }

    /// The mean of the per-subset solutions; zero if nothing was added.
    pub fn average(&self) -> DVector<f64> {
        if self.count == 0 {
            return DVector::zeros(self.a.ncols());
        }
        (self.a.tr_mul(&self.dual) + &self.primal) / self.count as f64
    }
}
