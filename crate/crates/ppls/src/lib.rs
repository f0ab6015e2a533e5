//! Probabilistic partial least squares regression with unique variance.
//!
//! A latent-factor model links an input block `x` and an output block `y`
//! through shared factors `u` and input-specific factors `v`, with a
//! diagonal noise covariance split per coordinate into unique variance and
//! loading energy by a norm constraint. The crate provides:
//!
//! - exact Gaussian predictive and posterior distributions ([`model`]),
//! - the constrained, identifiable parametrization ([`canonical`]),
//! - maximum-likelihood fitting that handles missing entries natively
//!   ([`estimation`]),
//! - latent-dimension selection by BIC and variance-contribution summaries
//!   ([`metrics`]),
//! - synthetic-data generation and sampling-distribution studies
//!   ([`simulate`]),
//! - JSON persistence that round-trips bit-exactly ([`persistence`]).
//!
//! ```
//! use ppls::model::PlsParams;
//! use nalgebra::{DMatrix, DVector};
//!
//! let params = PlsParams::new(
//!     DVector::zeros(2),
//!     DVector::zeros(1),
//!     DMatrix::from_column_slice(2, 1, &[0.9, 0.7]),
//!     DMatrix::zeros(2, 0),
//!     DMatrix::from_column_slice(1, 1, &[0.8]),
//!     DVector::from_vec(vec![0.5, 0.5]),
//!     DVector::from_vec(vec![0.4]),
//! )?;
//! let pred = params.predict_y_given_x(&DVector::from_vec(vec![1.0, -0.5]))?;
//! assert_eq!(pred.mean().len(), 1);
//! # Ok::<(), ppls::error::PplsError>(())
//! ```

pub mod canonical;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod gaussian;
pub mod metrics;
pub mod model;
pub mod persistence;
pub mod simulate;

#[cfg(test)]
pub(crate) mod testutil;

pub use canonical::{CanonicalForm, NormConstraint};
pub use dataset::Dataset;
pub use error::{PplsError, Result};
pub use estimation::{fit, log_likelihood, log_likelihood_gradient, FitConfig, FitResult};
pub use metrics::{bic_grid, contribution_ratios, r_squared, BicGrid, Subspace};
pub use model::{factor_scores, FactorScores, LatentDims, PlsParams};
pub use persistence::{canonical_to_json, from_json, stored_to_json, to_json, StoredModel};
pub use simulate::{inject_missing, run_sampling_study, sample, SamplingStudy};

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(model, "../../../book/src/model.md");
    chapter!(constraint, "../../../book/src/constraint.md");
    chapter!(identifiability, "../../../book/src/identifiability.md");
    chapter!(fitting, "../../../book/src/fitting.md");
    chapter!(missing_data, "../../../book/src/missing-data.md");
    chapter!(selection, "../../../book/src/selection.md");
    chapter!(simulation, "../../../book/src/simulation.md");
}
