//! Regularized canonical correlation analysis.
//!
//! The solve whitens both views with symmetric inverse square roots of their
//! (ridge-regularized) covariance matrices and takes the SVD of the whitened
//! cross-covariance. Singular values are the canonical correlations; mapping
//! the singular vectors back through the whitening transforms gives the
//! projection directions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Dense real matrix, row count = samples.
pub type Matrix = DMatrix<f64>;

/// Eigenvalues below this are clamped before inverting square roots.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Singular values at or below this are not retained as directions.
pub const RANK_TOLERANCE: f64 = 1e-9;

const JACOBI_MAX_SWEEPS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CcaError {
    #[error("canonical correlation needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("row count mismatch: x has {x} rows, y has {y}")]
    RowMismatch { x: usize, y: usize },
    #[error("empty matrix ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("regularization must be finite and >= 0, got {0}")]
    BadGamma(f64),
    #[error("label {label} out of range for {k} classes")]
    LabelOutOfRange { label: usize, k: usize },
}

/// Paired projections and canonical correlations from one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaResult {
    /// d × ν; columns are the X-side canonical directions.
    pub projections_x: Matrix,
    /// k × ν; columns are the Y-side canonical directions.
    pub projections_y: Matrix,
    /// Non-increasing, each in [0, 1].
    pub correlations: Vec<f64>,
}

impl CcaResult {
    pub fn rank(&self) -> usize {
        self.correlations.len()
    }
}

/// Subtract the column means. Returns the centered copy and the means.
pub fn center_columns(m: &Matrix) -> (Matrix, Vec<f64>) {
    let n = m.nrows() as f64;
    let means: Vec<f64> = m.column_iter().map(|c| c.sum() / n).collect();
    let mut centered = m.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    (centered, means)
}

/// Indicator encoding of class labels, n × k.
pub fn one_hot(labels: &[usize], k: usize) -> Result<Matrix, CcaError> {
    let mut out = Matrix::zeros(labels.len(), k);
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(CcaError::LabelOutOfRange { label, k });
        }
        out[(i, label)] = 1.0;
    }
    Ok(out)
}

/// Sample covariance between the columns of two centered matrices (divisor n − 1).
fn cross_covariance(a: &Matrix, b: &Matrix) -> Matrix {
    let scale = 1.0 / (a.nrows() as f64 - 1.0);
    (a.transpose() * b) * scale
}

/// Σ^{-1/2} for a symmetric positive semi-definite Σ, with eigenvalue clamping.
fn inverse_sqrt(sym: Matrix) -> Matrix {
    let eig = SymmetricEigen::new(sym);
    let scaled = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&l| 1.0 / l.max(EIGEN_FLOOR).sqrt()),
    );
    let v = &eig.eigenvectors;
    let mut vs = v.clone();
    for (j, mut col) in vs.column_iter_mut().enumerate() {
        col *= scaled[j];
    }
    let out = vs * v.transpose();
    // symmetrize away round-off
    (&out + out.transpose()) * 0.5
}

fn add_ridge(m: &mut Matrix, gamma: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += gamma;
    }
}

fn validate(m: &Matrix) -> Result<(), CcaError> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(CcaError::Empty {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(CcaError::NonFinite);
    }
    Ok(())
}

/// Canonical correlation analysis of `x` (n × d) against `y` (n × k).
///
/// `gamma` is added to the diagonal of both within-view covariance matrices.
/// At least one direction is always returned, even when every correlation
/// is zero.
pub fn canonical_correlation(x: &Matrix, y: &Matrix, gamma: f64) -> Result<CcaResult, CcaError> {
    if x.nrows() != y.nrows() {
        return Err(CcaError::RowMismatch {
            x: x.nrows(),
            y: y.nrows(),
        });
    }
    if x.nrows() < 2 {
        return Err(CcaError::TooFewSamples(x.nrows()));
    }
    validate(x)?;
    validate(y)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(CcaError::BadGamma(gamma));
    }

    let n = x.nrows();
    let (d, k) = (x.ncols(), y.ncols());
    let (xc, _) = center_columns(x);
    let (yc, _) = center_columns(y);

    let mut sxx = cross_covariance(&xc, &xc);
    let mut syy = cross_covariance(&yc, &yc);
    let sxy = cross_covariance(&xc, &yc);
    add_ridge(&mut sxx, gamma);
    add_ridge(&mut syy, gamma);

    let wx = inverse_sqrt(sxx);
    let wy = inverse_sqrt(syy);
    let whitened = &wx * &sxy * &wy;

    let (u, singular, v) = jacobi_svd(&whitened);

    let mut order: Vec<usize> = (0..singular.len()).collect();
    order.sort_by(|&a, &b| singular[b].total_cmp(&singular[a]).then(a.cmp(&b)));

    let max_rank = d.min(k).min(n - 1);
    let kept = order
        .iter()
        .take(max_rank)
        .filter(|&&i| singular[i] > RANK_TOLERANCE)
        .count()
        .max(1);

    let mut projections_x = Matrix::zeros(d, kept);
    let mut projections_y = Matrix::zeros(k, kept);
    let mut correlations = Vec::with_capacity(kept);
    for (slot, &i) in order.iter().take(kept).enumerate() {
        let mut a = &wx * u.column(i);
        let mut b = &wy * v.column(i);
        if leading_entry_negative(a.as_slice()) {
            a.neg_mut();
            b.neg_mut();
        }
        projections_x.set_column(slot, &a);
        projections_y.set_column(slot, &b);
        correlations.push(singular[i].clamp(0.0, 1.0));
    }

    Ok(CcaResult {
        projections_x,
        projections_y,
        correlations,
    })
}

/// Thin SVD `a = u · diag(s) · vᵀ` by one-sided Jacobi rotations, with
/// singular values in no particular order. Jacobi keeps small singular
/// values accurate to high relative precision, which the rank cut-off
/// depends on. Columns of `u` for zero singular values are unit basis
/// vectors.
fn jacobi_svd(a: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    if a.nrows() < a.ncols() {
        let (u, s, v) = jacobi_svd(&a.transpose());
        return (v, s, u);
    }
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = Matrix::identity(n, n);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                for mat in [&mut w, &mut v] {
                    for i in 0..mat.nrows() {
                        let (xp, xq) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * xp - s * xq;
                        mat[(i, q)] = s * xp + c * xq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut u = Matrix::zeros(m, n);
    let mut s = Vec::with_capacity(n);
    for j in 0..n {
        let norm = w.column(j).norm();
        if norm > 0.0 {
            u.set_column(j, &(w.column(j) / norm));
        } else {
            u[(j, j)] = 1.0;
        }
        s.push(norm);
    }
    (u, s, v)
}

/// True when the largest-magnitude entry (first one on ties) is negative.
fn leading_entry_negative(v: &[f64]) -> bool {
    let mut best = 0.0_f64;
    let mut negative = false;
    for &x in v {
        if x.abs() > best {
            best = x.abs();
            negative = x < 0.0;
        }
    }
    negative
}
