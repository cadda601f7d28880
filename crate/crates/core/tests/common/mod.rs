#![allow(dead_code)]

use ccfmap::cca::Matrix;
use nalgebra::{Cholesky, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// n×k one-hot labels with every class present at least once.
pub fn random_one_hot(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (Matrix, Vec<usize>) {
    let labels: Vec<usize> = (0..n)
        .map(|i| if i < k { i } else { rng.gen_range(0..k) })
        .collect();
    (ccfmap::cca::one_hot(&labels, k).unwrap(), labels)
}

/// Random orthogonal matrix from the QR factorisation of a gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    gaussian(rng, d, d).qr().q()
}

fn covariance(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.nrows() as f64;
    let ca = a.clone() - Matrix::from_fn(a.nrows(), a.ncols(), |_, j| a.column(j).mean());
    let cb = b.clone() - Matrix::from_fn(b.nrows(), b.ncols(), |_, j| b.column(j).mean());
    ca.transpose() * cb / (n - 1.0)
}

/// Canonical correlations from the generalized eigenproblem
/// `Sxy Syy^-1 Syx a = rho^2 Sxx a` (both covariances ridge-regularized by
/// `gamma`), reduced to a symmetric problem with a Cholesky factor of Sxx.
/// Returned non-increasing, length min(d, k).
pub fn gev_correlations(x: &Matrix, y: &Matrix, gamma: f64) -> Vec<f64> {
    let d = x.ncols();
    let k = y.ncols();
    let sxx = covariance(x, x) + Matrix::identity(d, d) * gamma;
    let syy = covariance(y, y) + Matrix::identity(k, k) * gamma;
    let sxy = covariance(x, y);
    let syy_inv = syy.try_inverse().expect("regularized Syy is invertible");
    let m = &sxy * syy_inv * sxy.transpose();
    let l = Cholesky::new(sxx)
        .expect("regularized Sxx is positive definite")
        .l();
    let l_inv = l.try_inverse().unwrap();
    let c = &l_inv * m * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut rho: Vec<f64> = SymmetricEigen::new(c)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .collect();
    rho.sort_by(|a, b| b.partial_cmp(a).unwrap());
    rho.truncate(d.min(k));
    rho
}

/// Largest absolute difference over the retained correlations, with the
/// oracle's remaining ones required to be (near) zero.
///
/// The oracle produces ρ² and takes a square root, so a rounding-level
/// eigenvalue of 1e-16 turns into ρ ≈ 1e-8. Near zero the comparison is
/// therefore made on ρ², which is what the oracle actually resolves.
pub fn max_correlation_gap(got: &[f64], oracle: &[f64]) -> f64 {
    let mut gap = 0.0_f64;
    for (i, &o) in oracle.iter().enumerate() {
        let g = got.get(i).copied().unwrap_or(0.0);
        let diff = if o.max(g) < 1e-4 {
            (g * g - o * o).abs()
        } else {
            (g - o).abs()
        };
        gap = gap.max(diff);
    }
    gap
}

/// Gaussian blobs: class `c` centred at `separation * c` on every feature.
pub fn blob_set(
    rng: &mut ChaCha8Rng,
    n_per_class: usize,
    d: usize,
    k: usize,
    separation: f64,
) -> ccfmap::ccf::TrainingSet {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..k {
        for _ in 0..n_per_class {
            rows.push(
                (0..d)
                    .map(|_| separation * c as f64 + rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            labels.push(c);
        }
    }
    let names = (0..k).map(|c| format!("class{c}")).collect();
    ccfmap::ccf::TrainingSet::new(&rows, &labels, names).unwrap()
}

/// Walk a tree by hand, independent of `Tree::leaf_index`.
pub fn walk(tree: &ccfmap::ccf::Tree, row: &[f64]) -> Vec<f64> {
    use ccfmap::ccf::Node;
    let mut i = 0;
    loop {
        match &tree.nodes()[i] {
            Node::Leaf { distribution } => return distribution.clone(),
            Node::Split {
                features,
                projection,
                threshold,
                left,
                right,
            } => {
                let z: f64 = features
                    .iter()
                    .zip(projection)
                    .map(|(&f, &w)| row[f] * w)
                    .sum();
                i = if z <= *threshold { *left } else { *right };
            }
        }
    }
}
