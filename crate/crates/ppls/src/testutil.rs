//! Shared helpers for unit tests: seeded RNGs and random well-conditioned
//! matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn standard_vector<R: Rng>(r: &mut R, d: usize) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| r.sample::<f64, _>(StandardNormal)))
}

pub fn standard_matrix<R: Rng>(r: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_iterator(
        rows,
        cols,
        (0..rows * cols).map(|_| r.sample::<f64, _>(StandardNormal)),
    )
}

/// A A^T + d I with standard-normal A: symmetric positive definite with
/// smallest eigenvalue at least d.
pub fn random_spd<R: Rng>(r: &mut R, d: usize) -> DMatrix<f64> {
    let a = standard_matrix(r, d, d);
    &a * a.transpose() + DMatrix::<f64>::identity(d, d) * (d as f64)
}
