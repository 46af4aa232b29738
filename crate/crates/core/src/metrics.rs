//! Subspace error and objective measurements.

use crate::data::CovarianceModel;
use crate::error::{OpcaError, Result};
use crate::matops::{gram, orthonormalize, Matrix, SymmetricEig};

/// Relative tolerance used by [`default_tolerance`].
pub const EFFECTIVE_INDEX_RTOL: f64 = 1e-9;

/// `1e-9 · λ_1`, robust to roundoff in file-derived spectra.
pub fn default_tolerance(lambda: &[f64]) -> f64 {
    EFFECTIVE_INDEX_RTOL * lambda.first().copied().unwrap_or(0.0).abs()
}

/// Smallest `i` in `p..n` (1-based) with `λ_{i+1} < λ_p - tol`.
///
/// Requires `λ_p > λ_n + tol`; otherwise the top-`p` subspace is not separated
/// from the bottom of the spectrum and no such index exists.
pub fn effective_index(lambda: &[f64], p: usize, tol: f64) -> Result<usize> {
    let n = lambda.len();
    if p == 0 || p >= n {
        return Err(OpcaError::BadRange(format!(
            "need 1 <= p < n, got p = {p}, n = {n}"
        )));
    }
    let lp = lambda[p - 1];
    if !(lp > lambda[n - 1] + tol) {
        return Err(OpcaError::AssumptionViolated(format!(
            "λ_p = {lp} does not exceed λ_n = {} by more than {tol:e}",
            lambda[n - 1]
        )));
    }
    // 1-based i ranges over p..=n-1 and inspects λ_{i+1} = lambda[i]
    (p..n)
        .find(|&i| lambda[i] < lp - tol)
        .ok_or_else(|| OpcaError::AssumptionViolated("spectrum not sorted descending".into()))
}

/// Reference subspace `U_{p'}` with the spectral quantities the schedules need.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub u_pprime: Matrix,
    pub p: usize,
    pub p_prime: usize,
    pub lambda: Vec<f64>,
    /// `λ_p - λ_{p'+1}`.
    pub nu: f64,
}

impl GroundTruth {
    fn build(
        u_all: impl FnOnce(usize) -> Result<Matrix>,
        lambda: Vec<f64>,
        p: usize,
    ) -> Result<Self> {
        let tol = default_tolerance(&lambda);
        let p_prime = effective_index(&lambda, p, tol)?;
        let nu = lambda[p - 1] - lambda[p_prime];
        Ok(GroundTruth {
            u_pprime: u_all(p_prime)?,
            p,
            p_prime,
            lambda,
            nu,
        })
    }

    pub fn from_model(model: &CovarianceModel, p: usize) -> Result<Self> {
        let lambda = model.eigenvalues().as_slice().to_vec();
        GroundTruth::build(|k| model.top_eigenvectors(k), lambda, p)
    }

    pub fn from_eig(eig: &SymmetricEig, p: usize) -> Result<Self> {
        let lambda = eig.eigenvalues.as_slice().to_vec();
        GroundTruth::build(|k| Ok(eig.top(k)), lambda, p)
    }

    /// `λ_p`.
    pub fn lambda_p(&self) -> f64 {
        self.lambda[self.p - 1]
    }

    pub fn lambda_1(&self) -> f64 {
        self.lambda[0]
    }

    pub fn lambda_n(&self) -> f64 {
        *self.lambda.last().expect("non-empty spectrum")
    }
}

/// `‖U_{p'}^T orth(X)‖_F²`, the captured part of the error identity.
pub fn captured_energy(x: &Matrix, gt: &GroundTruth) -> Result<f64> {
    if x.nrows() != gt.u_pprime.nrows() {
        return Err(OpcaError::DimensionMismatch(format!(
            "iterate has {} rows, reference has {}",
            x.nrows(),
            gt.u_pprime.nrows()
        )));
    }
    let q = orthonormalize(x)?;
    Ok(gt.u_pprime.tr_mul(&q).norm_squared())
}

/// `‖sin Θ(X, U_{p'})‖_F² = p - ‖U_{p'}^T orth(X)‖_F²`, clamped to `[0, p]`.
pub fn sin_theta_error(x: &Matrix, gt: &GroundTruth) -> Result<f64> {
    let p = x.ncols() as f64;
    Ok((p - captured_energy(x, gt)?).clamp(0.0, p))
}

/// [`sin_theta_error`] divided by `p`, in `[0, 1]`.
pub fn normalized_error(x: &Matrix, gt: &GroundTruth) -> Result<f64> {
    Ok(sin_theta_error(x, gt)? / x.ncols() as f64)
}

/// `½‖X X^T − A A^T/h‖_F²` via the `p x p` / `h x h` expansion.
pub fn batch_objective(x: &Matrix, a: &Matrix) -> f64 {
    let h = a.ncols() as f64;
    let xtx = gram(x).norm_squared();
    let atx = a.tr_mul(x).norm_squared();
    let ata = a.tr_mul(a).norm_squared();
    (0.5 * (xtx - 2.0 * atx / h + ata / (h * h))).max(0.0)
}

/// `½‖X X^T − Σ‖_F²` against the factored model.
pub fn population_objective(x: &Matrix, model: &CovarianceModel) -> f64 {
    let xtx = gram(x).norm_squared();
    let cross = x.dot(&model.apply(x));
    (0.5 * (xtx - 2.0 * cross + model.frobenius_sq())).max(0.0)
}
