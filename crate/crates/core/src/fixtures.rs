//! Seeded synthetic data with known structure.

use crate::error::{Error, Result};
use crate::linalg::orthonormal_basis;
use crate::rng::{derive_seed, CounterRng};
use crate::tensor::{DenseTensor, Matrix};

/// Gaussian core of shape `ranks` multiplied by orthonormal factors of shape
/// `dims[k] × ranks[k]`; the multilinear rank is exactly `ranks` with
/// probability one.
pub fn planted_tucker(dims: &[usize], ranks: &[usize], seed: u64) -> Result<DenseTensor> {
    if dims.len() != ranks.len() || dims.is_empty() {
        return Err(Error::SizeMismatch(format!("dims {dims:?} and ranks {ranks:?}")));
    }
    for (&d, &r) in dims.iter().zip(ranks) {
        if r == 0 || r > d {
            return Err(Error::RankOutOfRange { rank: r, max: d });
        }
    }
    let mut rng = CounterRng::new(seed);
    let core = DenseTensor::random_normal(ranks.to_vec(), &mut rng)?;
    let factors: Vec<Matrix> = dims
        .iter()
        .zip(ranks)
        .map(|(&d, &r)| orthonormal_basis(&Matrix::random_normal(d, r, &mut rng)))
        .collect();
    core.multilinear_product(&factors)
}

/// Adds Gaussian noise scaled so that `‖noise‖_F = level · ‖t‖_F`.
pub fn add_relative_noise(t: &DenseTensor, level: f64, seed: u64) -> Result<DenseTensor> {
    if level == 0.0 {
        return Ok(t.clone());
    }
    let n = DenseTensor::random_normal(t.shape().to_vec(), &mut CounterRng::new(derive_seed(seed, 1)))?;
    let c = level * t.frobenius_norm() / n.frobenius_norm();
    let data = t.data().iter().zip(n.data()).map(|(a, b)| a + c * b).collect();
    DenseTensor::new(t.shape().to_vec(), data)
}

/// `rows × cols` i.i.d. N(0, std²).
pub fn noise_matrix(rows: usize, cols: usize, std: f64, seed: u64) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Empty);
    }
    let m = Matrix::random_normal(rows, cols, &mut CounterRng::new(seed));
    Ok(Matrix::from_fn(rows, cols, |i, j| std * m.get(i, j)))
}

/// Rank-`r` matrix `Σ s_i u_i v_iᵀ` with orthonormal `u, v` plus N(0, std²)
/// noise.
pub fn planted_low_rank(rows: usize, cols: usize, singular_values: &[f64], std: f64, seed: u64) -> Result<Matrix> {
    let r = singular_values.len();
    if r > rows.min(cols) {
        return Err(Error::RankOutOfRange { rank: r, max: rows.min(cols) });
    }
    let noise = noise_matrix(rows, cols, std, derive_seed(seed, 2))?;
    if r == 0 {
        return Ok(noise);
    }
    let mut rng = CounterRng::new(seed);
    let u = orthonormal_basis(&Matrix::random_normal(rows, r, &mut rng));
    let v = orthonormal_basis(&Matrix::random_normal(cols, r, &mut rng));
    let us = Matrix::from_fn(rows, r, |i, k| u.get(i, k) * singular_values[k]);
    let signal = us.matmul(&v.transpose())?;
    Ok(Matrix::from_fn(rows, cols, |i, j| signal.get(i, j) + noise.get(i, j)))
}
