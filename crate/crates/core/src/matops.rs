//! Dense kernels shared by every other module.
//!
//! [`Matrix`] is nalgebra's `DMatrix<f64>`, stored column-major. File formats
//! declare their own ordering, so storage order never leaks out of the crate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{OpcaError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular value cutoff below which `orthonormalize` reports rank loss.
pub const RANK_TOL: f64 = 1e-12;
/// Relative Cholesky pivot cutoff for [`gram_solve`].
pub const GRAM_PIVOT_TOL: f64 = 1e-14;

/// Eigenpairs of a symmetric matrix, eigenvalues non-increasing.
#[derive(Debug, Clone)]
pub struct SymmetricEig {
    pub eigenvalues: Vector,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: Matrix,
}

impl SymmetricEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// First `k` eigenvectors as an `n x k` matrix.
    pub fn top(&self, k: usize) -> Matrix {
        self.eigenvectors.columns(0, k).into_owned()
    }

    pub fn reconstruct(&self) -> Matrix {
        let v = &self.eigenvectors;
        let scaled = v * Matrix::from_diagonal(&self.eigenvalues);
        scaled * v.transpose()
    }
}

/// Thin SVD with singular values sorted in non-increasing order.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Matrix,
    pub singular_values: Vector,
    pub v: Matrix,
}

fn ensure_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(OpcaError::NonFinite)
    }
}

/// Orthonormal basis of `span(x)` via Householder QR.
///
/// Sign convention: the largest-magnitude entry of each output column is
/// positive, ties resolved towards the lowest row index.
pub fn orthonormalize(x: &Matrix) -> Result<Matrix> {
    let (n, p) = x.shape();
    ensure_finite(x)?;
    if p == 0 {
        return Ok(Matrix::zeros(n, 0));
    }
    if p > n {
        return Err(OpcaError::RankDeficient {
            rank: n,
            expected: p,
        });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let sv = singular_values(&r);
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * smax).count();
    if smax == 0.0 || rank < p {
        return Err(OpcaError::RankDeficient { rank, expected: p });
    }
    let mut q = qr.q();
    fix_column_signs(&mut q);
    Ok(q)
}

/// Flips columns so that the largest-magnitude entry of each is positive.
pub fn fix_column_signs(q: &mut Matrix) {
    for mut col in q.column_iter_mut() {
        let max_abs = col.amax();
        // entries equal up to roundoff count as ties
        let best = col
            .iter()
            .position(|v| v.abs() >= max_abs * (1.0 - 1e-12))
            .unwrap_or(0);
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full symmetric eigendecomposition, eigenvalues sorted descending.
///
/// The input is symmetrized as `(S + S^T)/2` before factorization.
pub fn symmetric_eig(s: &Matrix) -> Result<SymmetricEig> {
    let (rows, cols) = s.shape();
    if rows != cols {
        return Err(OpcaError::NotSquare { rows, cols });
    }
    ensure_finite(s)?;
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let eigenvalues = Vector::from_iterator(rows, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = Matrix::zeros(rows, rows);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_column_signs(&mut eigenvectors);
    Ok(SymmetricEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Lower Cholesky factor `L` with `G = L L^T`.
///
/// Fails with `GramSingular` when a pivot drops to `GRAM_PIVOT_TOL * trace(G)/p`.
pub fn cholesky(g: &Matrix) -> Result<Matrix> {
    let p = g.nrows();
    let scale = (g.trace() / p as f64).max(0.0);
    let floor = GRAM_PIVOT_TOL * scale;
    let mut l = Matrix::zeros(p, p);
    for j in 0..p {
        let mut d = g[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(OpcaError::GramSingular {
                column: j,
                pivot: d,
            });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..p {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `M G = B` for `M` given the lower Cholesky factor of the symmetric `G`.
pub fn cholesky_right_solve(l: &Matrix, b: &Matrix) -> Matrix {
    // Y L^T = B forward over columns, then M L = Y backward; every update is
    // an axpy on a contiguous column
    let (n, p) = b.shape();
    let mut m = b.clone();
    let data = m.as_mut_slice();
    for j in 0..p {
        let (done, rest) = data.split_at_mut(j * n);
        let col = &mut rest[..n];
        for k in 0..j {
            axpy_neg(col, l[(j, k)], &done[k * n..(k + 1) * n]);
        }
        let d = l[(j, j)];
        col.iter_mut().for_each(|v| *v /= d);
    }
    for j in (0..p).rev() {
        let (head, tail) = data.split_at_mut((j + 1) * n);
        let col = &mut head[j * n..];
        for k in (j + 1)..p {
            let off = (k - j - 1) * n;
            axpy_neg(col, l[(k, j)], &tail[off..off + n]);
        }
        let d = l[(j, j)];
        col.iter_mut().for_each(|v| *v /= d);
    }
    m
}

fn axpy_neg(y: &mut [f64], c: f64, x: &[f64]) {
    if c != 0.0 {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi -= c * xi;
        }
    }
}

/// `X^T X`.
pub fn gram(x: &Matrix) -> Matrix {
    x.transpose() * x
}

/// Returns `B (X^T X)^{-1}` through a Cholesky factorization of the Gram matrix.
pub fn gram_solve(x: &Matrix, b: &Matrix) -> Result<Matrix> {
    if x.shape() != b.shape() {
        return Err(OpcaError::DimensionMismatch(format!(
            "gram_solve: X is {:?}, B is {:?}",
            x.shape(),
            b.shape()
        )));
    }
    let l = cholesky(&gram(x))?;
    Ok(cholesky_right_solve(&l, b))
}

fn to_faer(x: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD with descending singular values.
///
/// Computed with faer: nalgebra 0.35's SVD returns wrong factors for some
/// square inputs with clustered singular values.
pub fn thin_svd(x: &Matrix) -> Result<ThinSvd> {
    ensure_finite(x)?;
    let svd = to_faer(x)
        .thin_svd()
        .map_err(|_| OpcaError::NoConvergence)?;
    let s = svd.S().column_vector();
    Ok(ThinSvd {
        u: from_faer(svd.U()),
        singular_values: Vector::from_fn(s.nrows(), |i, _| s[i]),
        v: from_faer(svd.V()),
    })
}

/// Singular values of `x`, descending. NaN entries yield NaN.
pub fn singular_values(x: &Matrix) -> Vector {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Vector::zeros(0);
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Vector::from_element(x.nrows().min(x.ncols()), f64::NAN);
    }
    match to_faer(x).singular_values() {
        Ok(s) => Vector::from_vec(s),
        Err(_) => Vector::from_element(x.nrows().min(x.ncols()), f64::NAN),
    }
}

/// Smallest singular value of a tall `n x p` matrix, from the eigenvalues of `X^T X`.
pub fn smallest_singular_value(x: &Matrix) -> f64 {
    if x.ncols() == 0 {
        return 0.0;
    }
    smallest_singular_value_from_gram(&gram(x))
}

/// `sqrt(λ_min(G))` for a Gram matrix `G = X^T X`.
pub fn smallest_singular_value_from_gram(g: &Matrix) -> f64 {
    let lmin = match g.nrows() {
        0 => return 0.0,
        1 => g[(0, 0)],
        _ => SymmetricEigen::new(g.clone()).eigenvalues.min(),
    };
    lmin.max(0.0).sqrt()
}
