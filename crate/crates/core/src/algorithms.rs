//! One-step update rules: stochastic Gauss-Newton, Oja, AdaOja, and the
//! rank-restoring correction.

use serde::{Deserialize, Serialize};

use crate::error::{OpcaError, Result};
use crate::matops::{
    cholesky, cholesky_right_solve, gram, orthonormalize, smallest_singular_value_from_gram,
    thin_svd, Matrix,
};
use crate::rng::{GaussianStream, StreamPurpose};

/// Current factor `X^{(k)}` with its step counter and Gram data.
///
/// `gram` and `sigma_min` are refreshed after every SGN update and by
/// [`Iterate::refresh`]; code that edits `x` directly must call it.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x: Matrix,
    pub k: u64,
    /// `X^T X`.
    pub gram: Matrix,
    /// Smallest singular value of `x`.
    pub sigma_min: f64,
}

impl Iterate {
    pub fn new(x: Matrix) -> Self {
        let mut it = Iterate {
            x,
            k: 0,
            gram: Matrix::zeros(0, 0),
            sigma_min: 0.0,
        };
        it.refresh();
        it
    }

    /// `orth` of an `n x p` standard normal draw from the trial's init stream.
    pub fn random(n: usize, p: usize, key: u64) -> Result<Self> {
        let mut rng = GaussianStream::new(key, StreamPurpose::Init);
        let draw = Matrix::from_vec(n, p, rng.normals(n * p));
        Ok(Iterate::new(orthonormalize(&draw)?))
    }

    /// The saddle start `X^{(0)} = e_n` (single column).
    pub fn last_axis(n: usize) -> Self {
        let mut x = Matrix::zeros(n, 1);
        x[(n - 1, 0)] = 1.0;
        Iterate::new(x)
    }

    pub fn refresh(&mut self) {
        self.gram = gram(&self.x);
        self.sigma_min = smallest_singular_value_from_gram(&self.gram);
    }

    fn set_orthonormal(&mut self, q: Matrix) {
        let p = q.ncols();
        self.x = q;
        self.gram = Matrix::identity(p, p);
        self.sigma_min = 1.0;
    }
}

/// Minimum weighted-norm Gauss-Newton direction for `½‖XX^T − AA^T/h‖_F²`.
///
/// Uses `P = X(X^T X)^{-1}`, `Q = A^T P/√h`, `S = AQ/√h − X(I + Q^T Q)/2`,
/// so no `n x n` matrix is formed.
pub fn sgn_direction(x: &Matrix, a: &Matrix) -> Result<Matrix> {
    sgn_direction_with_gram(x, &gram(x), a)
}

fn sgn_direction_with_gram(x: &Matrix, g: &Matrix, a: &Matrix) -> Result<Matrix> {
    check_batch(x, a)?;
    let h_sqrt = (a.ncols() as f64).sqrt();
    // A^T P = (A^T X) G^{-1}, an h x p solve instead of n x p
    let l = cholesky(g)?;
    let q = cholesky_right_solve(&l, &a.tr_mul(x)) / h_sqrt;
    let mut inner = q.tr_mul(&q);
    for i in 0..inner.nrows() {
        inner[(i, i)] += 1.0;
    }
    Ok(a * q / h_sqrt - x * inner * 0.5)
}

fn check_batch(x: &Matrix, a: &Matrix) -> Result<()> {
    if x.nrows() != a.nrows() {
        return Err(OpcaError::DimensionMismatch(format!(
            "iterate has {} rows, batch has {}",
            x.nrows(),
            a.nrows()
        )));
    }
    if a.ncols() == 0 {
        return Err(OpcaError::BadRange("empty batch".into()));
    }
    Ok(())
}

/// `‖J^T J(S) + J^T R‖_F` with `R = XX^T − AA^T/h`, `J(S) = XS^T + SX^T` and
/// `J^T(M) = (M + M^T) X`.
///
/// Forms `n x n` intermediates; meant for checking directions at test scale.
pub fn gn_normal_residual(x: &Matrix, a: &Matrix, s: &Matrix) -> f64 {
    let h = a.ncols() as f64;
    let r = x * x.transpose() - a * a.transpose() / h;
    let js = x * s.transpose() + s * x.transpose();
    let jt = |m: &Matrix| (m + m.transpose()) * x;
    (jt(&js) + jt(&r)).norm()
}

/// `X^{(k+1)} = X^{(k)} + α S^{(k)}(X^{(k)})`, without orthonormalization.
pub fn sgn_step(it: &mut Iterate, a: &Matrix, alpha: f64) -> Result<()> {
    let s = sgn_direction_with_gram(&it.x, &it.gram, a)?;
    let before = it.sigma_min;
    let before_trace = it.gram.trace();
    it.x.zip_apply(&s, |x, s| *x += alpha * s);
    it.k += 1;
    it.refresh();
    // σ_min comes from eigenvalues of the Gram matrix, accurate to about ε tr(G) / σ_min
    let slack =
        1e-12 + 16.0 * f64::EPSILON * (before_trace / before + it.gram.trace() / it.sigma_min);
    debug_assert!(
        !(0.0..=1.0).contains(&alpha) || it.sigma_min >= (1.0 - alpha / 2.0) * before - slack,
        "full-rank bound violated: σ_min {} -> {} at α = {alpha}",
        before,
        it.sigma_min
    );
    Ok(())
}

/// `G = (1/h) A (A^T X)`.
pub fn oja_gradient(x: &Matrix, a: &Matrix) -> Matrix {
    let h = a.ncols() as f64;
    a * (a.tr_mul(x) / h)
}

/// `X^{(k+1)} = orth(X + α G)`.
pub fn oja_step(it: &mut Iterate, a: &Matrix, alpha: f64) -> Result<()> {
    check_batch(&it.x, a)?;
    let g = oja_gradient(&it.x, a);
    it.set_orthonormal(orthonormalize(&(&it.x + g * alpha))?);
    it.k += 1;
    Ok(())
}

/// `X^{(k+1)} = orth(X + G diag(steps))`, the AdaOja update with per-column steps.
pub fn adaoja_step(it: &mut Iterate, g: &Matrix, steps: &[f64]) -> Result<()> {
    if g.shape() != it.x.shape() || steps.len() != g.ncols() {
        return Err(OpcaError::DimensionMismatch("AdaOja step shapes".into()));
    }
    let mut scaled = g.clone();
    for (j, s) in steps.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    it.set_orthonormal(orthonormalize(&(&it.x + scaled))?);
    it.k += 1;
    Ok(())
}

/// Which left directions the correction pushes along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QChoice {
    /// The left singular vectors paired with the small singular values.
    TailLeftSingular,
    /// Directions orthogonal to `span(X)`.
    Complement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionPolicy {
    pub threshold: f64,
    pub theta: f64,
    pub q_choice: QChoice,
}

/// Threshold used when nothing is known about the spectrum.
pub const FLAT_CORRECTION_THRESHOLD: f64 = 1e-6;

impl CorrectionPolicy {
    /// `σ̲ = min(1e-6, (4/35)(λ_n/λ_1)√λ_n)` and `θ = √λ_n`.
    pub fn from_spectrum(lambda_1: f64, lambda_n: f64) -> Self {
        let bound = 4.0 / 35.0 * (lambda_n / lambda_1) * lambda_n.sqrt();
        CorrectionPolicy {
            threshold: FLAT_CORRECTION_THRESHOLD.min(bound),
            theta: lambda_n.sqrt(),
            q_choice: QChoice::TailLeftSingular,
        }
    }
}

/// Adds `S_c = θ Q V_tail^T` when `σ_min(X) ≤ σ̲`, where `V_tail` holds the
/// right singular vectors of the singular values at or below the threshold.
///
/// Returns whether a correction was applied.
pub fn correct_iterate(it: &mut Iterate, policy: &CorrectionPolicy) -> Result<bool> {
    let (n, p) = it.x.shape();
    let svd = thin_svd(&it.x)?;
    let tail = svd
        .singular_values
        .iter()
        .filter(|&&s| s <= policy.threshold)
        .count();
    if tail == 0 {
        return Ok(false);
    }
    let head = p - tail;
    let q = match policy.q_choice {
        QChoice::TailLeftSingular => svd.u.columns(head, tail).into_owned(),
        QChoice::Complement => complement_directions(&svd.u, tail, n),
    };
    let v_tail = svd.v.columns(head, tail);
    it.x += q * v_tail.transpose() * policy.theta;
    it.refresh();
    log::warn!(
        "correction applied at step {}: {} singular value(s) <= {:e}",
        it.k,
        tail,
        policy.threshold
    );
    Ok(true)
}

/// `count` orthonormal vectors orthogonal to the columns of `u`, built from
/// the coordinate axes in order.
fn complement_directions(u: &Matrix, count: usize, n: usize) -> Matrix {
    let mut basis: Vec<nalgebra::DVector<f64>> = u.column_iter().map(|c| c.into_owned()).collect();
    let mut out = Matrix::zeros(n, count);
    let mut found = 0;
    for axis in 0..n {
        if found == count {
            break;
        }
        let mut v = nalgebra::DVector::<f64>::zeros(n);
        v[axis] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 0.5 {
            v /= norm;
            out.set_column(found, &v);
            basis.push(v);
            found += 1;
        }
    }
    out
}
