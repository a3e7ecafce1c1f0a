//! Refined least squares (RLS) for exact support recovery.
//!
//! Given noisy, underdetermined measurements `y = X θ* + ω` of a ternary
//! signal `θ* ∈ {-1, 0, 1}^D` with known sparsity `k`, the solvers in this
//! crate estimate the support of `θ*` one coordinate at a time. Each step
//! averages minimum-norm least-squares solutions computed on random subsets
//! of the equations and peels off the coordinate with the largest averaged
//! magnitude.
//!
//! Layout:
//! - [`instance`]: problem generators for the three design ensembles and
//!   the plain-text instance file format.
//! - [`linalg`]: minimum-norm least squares and the pseudo-inverse.
//! - [`solvers`]: RLS, the fixed-size variant, RAWLS and OMP.
//! - [`theory`]: Marchenko–Pastur density, quadrature and the Monte-Carlo
//!   checks of the noise-amplification law `E‖X†ω‖ ≈ √(N/(D−N))`.
//! - [`bench`]: the exact-recovery harness, sweeps and results CSV.

pub mod bench;
pub mod error;
pub mod format;
pub mod instance;
pub mod linalg;
pub mod rng;
pub mod solvers;
pub mod theory;

pub use error::{Error, Result};
