//! Block-Gaussian algebra: log-densities, marginalization, and conditioning
//! on arbitrary index subsets via Schur complements.
//!
//! Everything downstream (predictive distributions, factor-score posteriors,
//! observed-subset likelihoods) reduces to the three operations in this
//! module applied to one joint Gaussian or another.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{PplsError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Relative tolerance for the symmetry check at construction.
const SYMMETRY_RTOL: f64 = 1e-12;
/// Relative floor for the positive-semidefiniteness check at construction.
const PSD_RTOL: f64 = 1e-10;

/// A multivariate normal distribution held as a mean vector and a dense
/// symmetric covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianDist {
    /// Builds a distribution, validating that `cov` is square of matching
    /// dimension, symmetric to relative tolerance 1e-12, and positive
    /// semidefinite (eigenvalues >= -1e-10 * ||cov||).
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(PplsError::DimensionMismatch {
                what: "covariance matrix",
                expected: d,
                actual: cov.nrows().max(cov.ncols()),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) || cov.iter().any(|v| !v.is_finite()) {
            return Err(PplsError::param("GaussianDist", "non-finite entries"));
        }
        let scale = cov.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
        let mut max_asym = 0.0_f64;
        for i in 0..d {
            for j in (i + 1)..d {
                max_asym = max_asym.max((cov[(i, j)] - cov[(j, i)]).abs());
            }
        }
        if max_asym > SYMMETRY_RTOL * scale {
            return Err(PplsError::param(
                "GaussianDist",
                format!("covariance asymmetric: max |Σij−Σji| = {max_asym:.3e}"),
            ));
        }
        let cov = symmetrized(&cov);
        if d > 0 {
            let lambda_min = smallest_eigenvalue(&cov);
            if lambda_min < -PSD_RTOL * scale {
                return Err(PplsError::param(
                    "GaussianDist",
                    format!("covariance not positive semidefinite: eigenvalue {lambda_min:.3e}"),
                ));
            }
        }
        Ok(Self { mean, cov })
    }

    /// Internal constructor for covariances that are symmetric PSD by
    /// construction (Schur complements, precision-form inverses).
    pub(crate) fn new_unchecked(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Log-density `log N(x | mean, cov)`.
    ///
    /// Fails with a [`PplsError::SingularCovariance`] naming the smallest
    /// eigenvalue when the covariance has no Cholesky factorization.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(PplsError::DimensionMismatch {
                what: "log_density input",
                expected: d,
                actual: x.len(),
            });
        }
        let chol = cholesky(&self.cov, "log_density covariance")?;
        let diff = x - &self.mean;
        let z = chol.l_dirty().solve_lower_triangular(&diff).ok_or_else(|| {
            PplsError::SingularCovariance {
                context: "log_density triangular solve".into(),
                smallest_eigenvalue: smallest_eigenvalue(&self.cov),
            }
        })?;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        Ok(-0.5 * (d as f64 * LN_2PI + log_det + z.norm_squared()))
    }

    /// Distribution of the complementary indices given `values` observed at
    /// `observed`, via the Schur complement of the observed block.
    ///
    /// Conditioning on the empty set returns the joint unchanged. Observing
    /// every index is rejected (the complement would be empty).
    pub fn condition(&self, observed: &IndexSet, values: &DVector<f64>) -> Result<GaussianDist> {
        let d = self.dim();
        observed.check_bounds(d)?;
        if observed.is_empty() {
            return Ok(self.clone());
        }
        if observed.len() == d {
            return Err(PplsError::InvalidIndexSet {
                reason: "cannot condition on every index; the complement is empty".into(),
            });
        }
        if values.len() != observed.len() {
            return Err(PplsError::DimensionMismatch {
                what: "observed values",
                expected: observed.len(),
                actual: values.len(),
            });
        }
        let kept = observed.complement(d);
        let sigma_bb = select_square(&self.cov, observed.as_slice());
        let sigma_ab = select_rect(&self.cov, kept.as_slice(), observed.as_slice());
        let sigma_aa = select_square(&self.cov, kept.as_slice());
        let chol = cholesky(&sigma_bb, "conditioning block Σ_BB")?;

        // Σ_BB^{-1} Σ_BA and Σ_BB^{-1} (v − μ_B)
        let k = chol.solve(&sigma_ab.transpose());
        let centered = values - select_vector(&self.mean, observed.as_slice());
        let shift = chol.solve(&centered);

        let mean = select_vector(&self.mean, kept.as_slice()) + sigma_ab.transpose().tr_mul(&shift);
        let cov = symmetrized(&(sigma_aa - &sigma_ab * k));
        Ok(GaussianDist::new_unchecked(mean, cov))
    }

    /// Restriction of the distribution to the `keep` indices, order preserved.
    pub fn marginal(&self, keep: &IndexSet) -> Result<GaussianDist> {
        keep.check_bounds(self.dim())?;
        if keep.is_empty() {
            return Err(PplsError::InvalidIndexSet {
                reason: "marginal requires a nonempty index set".into(),
            });
        }
        Ok(GaussianDist::new_unchecked(
            select_vector(&self.mean, keep.as_slice()),
            select_square(&self.cov, keep.as_slice()),
        ))
    }
}

/// An ordered set of distinct indices into a joint vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    /// Requires the indices to be strictly increasing.
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PplsError::InvalidIndexSet {
                reason: "indices must be strictly increasing and distinct".into(),
            });
        }
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
        }
    }

    /// Indices of `true` entries in a presence mask.
    pub fn from_mask(mask: &[bool]) -> Self {
        Self {
            indices: mask
                .iter()
                .enumerate()
                .filter_map(|(i, &m)| m.then_some(i))
                .collect(),
        }
    }

    /// Contiguous range `[start, end)`.
    pub fn range(start: usize, end: usize) -> Self {
        Self {
            indices: (start..end).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    /// All indices of `0..dim` not in this set.
    pub fn complement(&self, dim: usize) -> IndexSet {
        let mut member = vec![false; dim];
        for &i in &self.indices {
            if i < dim {
                member[i] = true;
            }
        }
        IndexSet {
            indices: (0..dim).filter(|&i| !member[i]).collect(),
        }
    }

    pub(crate) fn check_bounds(&self, dim: usize) -> Result<()> {
        match self.indices.last() {
            Some(&max) if max >= dim => Err(PplsError::InvalidIndexSet {
                reason: format!("index {max} out of range for dimension {dim}"),
            }),
            _ => Ok(()),
        }
    }
}

/// (M + Mᵀ)/2; applied after composite products to bound round-off drift.
pub(crate) fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cholesky factorization that reports the offending smallest eigenvalue on
/// failure instead of masking it.
pub(crate) fn cholesky(m: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| PplsError::SingularCovariance {
        context: context.to_string(),
        smallest_eigenvalue: smallest_eigenvalue(m),
    })
}

pub(crate) fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetric_eigenvalues(m)
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v))
}

pub(crate) fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    symmetrized(m).symmetric_eigenvalues()
}

pub(crate) fn select_vector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub(crate) fn select_square(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    select_rect(m, idx, idx)
}

pub(crate) fn select_rect(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}
