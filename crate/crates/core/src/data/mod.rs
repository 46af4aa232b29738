//! Synthetic covariance models, sample streams, and matrix file loaders.

mod io;
mod stream;

pub use io::{
    center_columns, empirical_covariance, load_matrix_file, parse_csv, parse_f64le, parse_idx,
    save_f64le, MatrixFormat,
};
pub use stream::{sample_stream, SampleBatch, SampleStream, StreamSpec};

use crate::error::{OpcaError, Result};
use crate::matops::{orthonormalize, Matrix, SymmetricEig, Vector};
use crate::rng::{GaussianStream, StreamPurpose};

/// Spiked population covariance `Σ = Q diag(μ) Q^T + ρ² I`.
///
/// `Q` is `n x r` with orthonormal columns and `μ` is non-increasing, so the
/// spectrum is `(μ_1+ρ², …, μ_r+ρ², ρ², …, ρ²)` with `Q` as its top-`r`
/// eigenvectors. `Σ` itself is never formed unless asked for.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    planted: Matrix,
    mu: Vec<f64>,
    rho: f64,
    eigenvalues: Vector,
    sample_factor: Matrix,
}

impl CovarianceModel {
    /// Builds a model from an orthonormal basis and planted values.
    pub fn spiked(planted: Matrix, mu: Vec<f64>, rho: f64) -> Result<Self> {
        let (n, r) = planted.shape();
        if mu.len() != r {
            return Err(OpcaError::DimensionMismatch(format!(
                "{} planted values for {} directions",
                mu.len(),
                r
            )));
        }
        if r > n || r == 0 {
            return Err(OpcaError::BadRange(format!(
                "spike rank {r} must be in 1..={n}"
            )));
        }
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(OpcaError::BadRange(format!("rho = {rho}")));
        }
        if mu.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(OpcaError::BadRange(
                "planted values must be finite and >= 0".into(),
            ));
        }
        if mu.windows(2).any(|w| w[0] < w[1]) {
            return Err(OpcaError::BadRange(
                "planted values must be non-increasing".into(),
            ));
        }
        let gram_err = (planted.tr_mul(&planted) - Matrix::identity(r, r)).amax();
        if gram_err > 1e-10 {
            return Err(OpcaError::BadRange(format!(
                "planted basis is not orthonormal (error {gram_err:e})"
            )));
        }
        let rho2 = rho * rho;
        let eigenvalues = Vector::from_fn(n, |i, _| if i < r { mu[i] + rho2 } else { rho2 });
        let mut sample_factor = planted.clone();
        for (j, m) in mu.iter().enumerate() {
            sample_factor.column_mut(j).scale_mut(m.sqrt());
        }
        Ok(CovarianceModel {
            planted,
            mu,
            rho,
            eigenvalues,
            sample_factor,
        })
    }

    /// Diagonal covariance with `λ = (λ_1, …, λ_r, ρ², …, ρ²)`, i.e. planted
    /// directions along the first `r` coordinate axes.
    pub fn axis_spiked(n: usize, mu: Vec<f64>, rho: f64) -> Result<Self> {
        let r = mu.len();
        if r > n {
            return Err(OpcaError::BadRange(format!(
                "spike rank {r} exceeds n = {n}"
            )));
        }
        CovarianceModel::spiked(Matrix::identity(n, r), mu, rho)
    }

    /// Same spectrum with the planted directions moved onto the coordinate axes.
    pub fn into_axis_aligned(self) -> Self {
        let (n, r) = self.planted.shape();
        CovarianceModel::spiked(Matrix::identity(n, r), self.mu, self.rho)
            .expect("spectrum already validated")
    }

    pub fn dim(&self) -> usize {
        self.planted.nrows()
    }

    pub fn spike_rank(&self) -> usize {
        self.planted.ncols()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn planted_values(&self) -> &[f64] {
        &self.mu
    }

    pub fn planted_basis(&self) -> &Matrix {
        &self.planted
    }

    /// Full spectrum of `Σ`, descending.
    pub fn eigenvalues(&self) -> &Vector {
        &self.eigenvalues
    }

    /// The first `k <= spike_rank` eigenvectors.
    pub fn top_eigenvectors(&self, k: usize) -> Result<Matrix> {
        if k > self.spike_rank() {
            return Err(OpcaError::BadRange(format!(
                "requested {k} eigenvectors but only {} are planted",
                self.spike_rank()
            )));
        }
        Ok(self.planted.columns(0, k).into_owned())
    }

    /// Complete eigendecomposition, filling the noise eigenspace with an
    /// orthonormal complement of the planted basis.
    pub fn spectrum(&self) -> SymmetricEig {
        let (n, r) = self.planted.shape();
        let mut stacked = Matrix::zeros(n, r + n);
        stacked.columns_mut(0, r).copy_from(&self.planted);
        stacked.columns_mut(r, n).fill_with_identity();
        let q = stacked.qr().q();
        let mut vectors = q.columns(0, n).into_owned();
        vectors.columns_mut(0, r).copy_from(&self.planted);
        SymmetricEig {
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: vectors,
        }
    }

    /// Dense `Σ`; only sensible for moderate `n`.
    pub fn materialize(&self) -> Matrix {
        let n = self.dim();
        let mut sigma = &self.sample_factor * self.sample_factor.transpose();
        for i in 0..n {
            sigma[(i, i)] += self.rho * self.rho;
        }
        sigma
    }

    /// `Σ M` without forming `Σ`.
    pub fn apply(&self, m: &Matrix) -> Matrix {
        let coeffs = self.planted.tr_mul(m);
        let mut scaled = coeffs;
        for (i, mu) in self.mu.iter().enumerate() {
            scaled.row_mut(i).scale_mut(*mu);
        }
        &self.planted * scaled + m * (self.rho * self.rho)
    }

    /// `‖Σ‖_F²`.
    pub fn frobenius_sq(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l * l).sum()
    }

    /// `Q diag(√μ)`, the planted part of the sampling factor.
    pub(crate) fn sample_factor(&self) -> &Matrix {
        &self.sample_factor
    }
}

fn model_stream(seed: u64) -> GaussianStream {
    GaussianStream::new(seed, StreamPurpose::Model)
}

fn random_orthonormal(n: usize, r: usize, rng: &mut GaussianStream) -> Result<Matrix> {
    let draws = rng.normals(n * r);
    orthonormalize(&Matrix::from_vec(n, r, draws))
}

fn sorted_uniform(count: usize, lo: f64, hi: f64, rng: &mut GaussianStream) -> Vec<f64> {
    let mut v: Vec<f64> = (0..count)
        .map(|_| {
            let u = rng.next_uniform();
            lo + (hi - lo) * (1.0 - u)
        })
        .collect();
    v.sort_by(|a, b| b.partial_cmp(a).expect("finite draws"));
    v
}

fn check_dims(n: usize, p: usize) -> Result<()> {
    if p == 0 || p >= n {
        return Err(OpcaError::BadRange(format!(
            "need 1 <= p < n, got p = {p}, n = {n}"
        )));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(OpcaError::BadRange(format!(
            "rho must be finite and >= 0, got {rho}"
        )));
    }
    Ok(())
}

/// `Gau-gap-1`: `p` planted values drawn uniformly from `[mu_min, mu_max]`.
pub fn make_gau_gap_1(
    n: usize,
    p: usize,
    mu_min: f64,
    mu_max: f64,
    rho: f64,
    seed: u64,
) -> Result<CovarianceModel> {
    check_dims(n, p)?;
    check_rho(rho)?;
    if !(mu_min > 0.0 && mu_min <= mu_max && mu_max.is_finite()) {
        return Err(OpcaError::BadRange(format!(
            "need 0 < mu_min <= mu_max, got [{mu_min}, {mu_max}]"
        )));
    }
    let mut rng = model_stream(seed);
    let mu = sorted_uniform(p, mu_min, mu_max, &mut rng);
    let q = random_orthonormal(n, p, &mut rng)?;
    CovarianceModel::spiked(q, mu, rho)
}

/// `Gau-gap-2`: the top `p1` planted values equal `mu_high`, the next `p - p1` equal `mu_low`.
pub fn make_gau_gap_2(
    n: usize,
    p: usize,
    p1: usize,
    mu_low: f64,
    mu_high: f64,
    rho: f64,
    seed: u64,
) -> Result<CovarianceModel> {
    check_dims(n, p)?;
    check_rho(rho)?;
    if p1 > p {
        return Err(OpcaError::BadRange(format!("p1 = {p1} exceeds p = {p}")));
    }
    if !(mu_low > 0.0 && mu_low <= mu_high && mu_high.is_finite()) {
        return Err(OpcaError::BadRange(format!(
            "need 0 < mu_low <= mu_high, got ({mu_low}, {mu_high})"
        )));
    }
    let mut rng = model_stream(seed);
    let mu: Vec<f64> = (0..p)
        .map(|i| if i < p1 { mu_high } else { mu_low })
        .collect();
    let q = random_orthonormal(n, p, &mut rng)?;
    CovarianceModel::spiked(q, mu, rho)
}

/// `Gau-ngap`: `p` sorted uniform draws, then `μ_p` replicated through index `p_prime`.
pub fn make_gau_ngap(
    n: usize,
    p: usize,
    p_prime: usize,
    mu_min: f64,
    mu_max: f64,
    rho: f64,
    seed: u64,
) -> Result<CovarianceModel> {
    check_dims(n, p)?;
    check_rho(rho)?;
    if !(p < p_prime && p_prime < n) {
        return Err(OpcaError::BadRange(format!(
            "need p < p_prime < n, got p = {p}, p_prime = {p_prime}, n = {n}"
        )));
    }
    if !(mu_min > 0.0 && mu_min <= mu_max && mu_max.is_finite()) {
        return Err(OpcaError::BadRange(format!(
            "need 0 < mu_min <= mu_max, got [{mu_min}, {mu_max}]"
        )));
    }
    let mut rng = model_stream(seed);
    let mut mu = sorted_uniform(p, mu_min, mu_max, &mut rng);
    let last = mu[p - 1];
    mu.resize(p_prime, last);
    let q = random_orthonormal(n, p_prime, &mut rng)?;
    CovarianceModel::spiked(q, mu, rho)
}
