//! The equal-row-norm constraint and the identifiability machinery: scaled
//! loading matrices, the `h` ↔ `c` conversion, canonicalization by
//! eigen-sorting and sign conventions, and the dimension preconditions for a
//! unique parametrization.
//!
//! Three scalings of the block loading matrix `W` appear throughout:
//!
//! ```text
//! W̄ = diag(psi)^{-1/2} W      (noise-scaled;   constraint: every row norm = c)
//! Ŵ = diag(Σ)^{-1/2}  W      (correlation-scaled; every row norm = h)
//! W̃ = W̄ / c                  (unit row norms)
//! ```
//!
//! with `h² = c²/(1+c²)`. Tying `diag(psi)` to the rows of `W` through the
//! constraint removes the degrees of freedom that let unique variances
//! collapse to zero during likelihood ascent, so improper solutions cannot
//! occur by construction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{PplsError, Result};
use crate::gaussian::symmetrized;
use crate::model::{LatentDims, PlsParams};

/// Relative row-norm deviation beyond which a parameter set is rejected as
/// violating the constraint.
const CONSTRAINT_RTOL: f64 = 1e-6;
/// Relative gap under which adjacent eigenvalues count as tied.
const TIE_RTOL: f64 = 1e-8;
/// Eigenvalues at or below this count as structurally zero columns.
const ZERO_EIGENVALUE_ATOL: f64 = 1e-12;

/// Relative tolerance under which entry magnitudes count as tied when the
/// zero-sum sign fallback picks its deciding entry. The norm constraint can
/// force exact magnitude ties: with two response variables and two shared
/// axes, every scaled `Ŵ_yu` row has norm `h`, which pins the trailing
/// canonical column to `±(ω/√2)(1, -1)` — its sum is structurally zero and
/// its entries match in magnitude to rounding error. The deciding entry must
/// therefore be chosen by position among the tied ones, never by which one
/// floating-point noise ranks first.
const SIGN_TIE_RTOL: f64 = 1e-6;

/// The constraint level in both scalings: `c` is the common row norm of the
/// noise-scaled loadings, `h` the common row norm of the correlation-scaled
/// loadings; `h² = c²/(1+c²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormConstraint {
    c: f64,
    h: f64,
}

impl NormConstraint {
    pub fn from_c(c: f64) -> Result<Self> {
        if !c.is_finite() || c < 0.0 {
            return Err(PplsError::param("c", "must be finite and nonnegative"));
        }
        Ok(Self { c, h: h_from_c(c) })
    }

    pub fn from_h(h: f64) -> Result<Self> {
        Ok(Self {
            c: c_from_h(h)?,
            h,
        })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn h(&self) -> f64 {
        self.h
    }
}

/// `h = c/√(1+c²)`, the correlation-scale row norm for noise-scale level `c`.
pub fn h_from_c(c: f64) -> f64 {
    // written to avoid overflow for large c
    1.0 / (1.0 + 1.0 / (c * c)).sqrt()
}

/// Inverse of [`h_from_c`]; rejects `h ≥ 1` (infinite `c`) and `h < 0`.
pub fn c_from_h(h: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&h) {
        return Err(PplsError::param("h", "must lie in [0, 1)"));
    }
    Ok(h / (1.0 - h * h).sqrt())
}

/// The three scalings of the block loading matrix for a constraint-satisfying
/// parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledLoadings {
    /// `diag(psi)^{-1/2} W`; every row has norm `c`.
    pub w_bar: DMatrix<f64>,
    /// `diag(Σ)^{-1/2} W`; every row has norm `h`.
    pub w_hat: DMatrix<f64>,
    /// `w_bar / c`; every row has unit norm.
    pub w_tilde: DMatrix<f64>,
    /// The common row-norm level.
    pub constraint: NormConstraint,
}

/// Computes all three loading scalings, verifying the equal-row-norm
/// constraint first.
///
/// Rows of the noise-scaled loadings whose norm deviates from the common
/// level by more than 1e-6 (relative) make this an error that names the
/// worst row.
pub fn scale_loadings(params: &PlsParams) -> Result<ScaledLoadings> {
    let w = params.w_joint();
    let psi = params.psi_joint();
    let d = w.nrows();

    let mut w_bar = w.clone();
    for i in 0..d {
        let s = 1.0 / psi[i].sqrt();
        w_bar.row_mut(i).scale_mut(s);
    }
    let c = params.constraint_level();
    let mut worst_row = 0usize;
    let mut worst_dev = 0.0f64;
    for i in 0..d {
        let dev = (w_bar.row(i).norm() - c).abs() / c.max(1e-300);
        if dev > worst_dev {
            worst_dev = dev;
            worst_row = i;
        }
    }
    if worst_dev > CONSTRAINT_RTOL {
        return Err(PplsError::ConstraintViolated {
            worst_row,
            deviation: worst_dev,
        });
    }

    let mut w_hat = w.clone();
    for i in 0..d {
        let sigma_ii = psi[i] + w.row(i).norm_squared();
        let s = 1.0 / sigma_ii.sqrt();
        w_hat.row_mut(i).scale_mut(s);
    }

    Ok(ScaledLoadings {
        w_tilde: &w_bar / c,
        w_bar,
        w_hat,
        constraint: NormConstraint::from_c(c)?,
    })
}

/// Reparametrizes raw loading blocks into a constraint-satisfying parameter
/// set by deriving the unique variances: `psi_i = ‖W row i‖² / c²`, which
/// makes every noise-scaled row norm equal `c` exactly.
///
/// Because `psi_i` is a fixed positive multiple of the loading row energy,
/// no unique variance can collapse to zero while the loadings stay bounded
/// away from zero: improper solutions are impossible in this parametrization.
///
/// A zero row is rejected: such a feature loads on no latent factor, which
/// contradicts the equal-row-norm premise. Callers should drop the feature.
pub fn enforce_constraint(
    mu_x: DVector<f64>,
    mu_y: DVector<f64>,
    w_xu: DMatrix<f64>,
    w_xv: DMatrix<f64>,
    w_yu: DMatrix<f64>,
    c: f64,
) -> Result<PlsParams> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(PplsError::param("c", "must be finite and positive"));
    }
    let p_x = w_xu.nrows();
    let p_y = w_yu.nrows();
    let c2 = c * c;
    let mut psi_x = DVector::zeros(p_x);
    for i in 0..p_x {
        let energy = w_xu.row(i).norm_squared() + w_xv.row(i).norm_squared();
        if energy == 0.0 {
            return Err(PplsError::NoSignal {
                context: format!("input feature {i} has a zero loading row"),
            });
        }
        psi_x[i] = energy / c2;
    }
    let mut psi_y = DVector::zeros(p_y);
    for i in 0..p_y {
        let energy = w_yu.row(i).norm_squared();
        if energy == 0.0 {
            return Err(PplsError::NoSignal {
                context: format!("output feature {i} has a zero loading row"),
            });
        }
        psi_y[i] = energy / c2;
    }
    PlsParams::new(mu_x, mu_y, w_xu, w_xv, w_yu, psi_x, psi_y)
}

/// Outcome of the dimension-counting identifiability test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identifiability {
    pub identifiable: bool,
    /// Human-readable description of each violated condition; empty when
    /// identifiable.
    pub violations: Vec<String>,
}

impl Identifiability {
    pub fn into_result(self) -> Result<()> {
        if self.identifiable {
            Ok(())
        } else {
            Err(PplsError::NotIdentifiable {
                reasons: self.violations,
            })
        }
    }
}

/// Checks the three counting conditions for a unique canonical
/// parametrization: `p_u + p_v < p_x + p_y`, `p_v ≤ p_x`, and `p_u ≤ p_y`.
///
/// With a univariate output (`p_y = 1`) the last condition forces `p_u = 1`:
/// a single output feature can identify only one shared direction.
pub fn check_identifiability(p_x: usize, p_y: usize, dims: LatentDims) -> Identifiability {
    let mut violations = Vec::new();
    if dims.total() >= p_x + p_y {
        violations.push(format!(
            "latent dimension p_u + p_v = {} must be strictly less than p_x + p_y = {}",
            dims.total(),
            p_x + p_y
        ));
    }
    if dims.p_v() > p_x {
        violations.push(format!(
            "input-specific dimension p_v = {} exceeds p_x = {}",
            dims.p_v(),
            p_x
        ));
    }
    if dims.p_u() > p_y {
        violations.push(format!(
            "shared dimension p_u = {} exceeds p_y = {}",
            dims.p_u(),
            p_y
        ));
    }
    Identifiability {
        identifiable: violations.is_empty(),
        violations,
    }
}

/// The unique representative of a parameter set's rotation/sign equivalence
/// class, with its sorted squared singular-value spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalForm {
    pub params: PlsParams,
    /// Eigenvalues of `Ŵ_yuᵀ Ŵ_yu`, descending: the correlation-scale
    /// shared-axis strengths.
    pub omega2_yu: DVector<f64>,
    /// Eigenvalues of `Ŵ_xvᵀ Ŵ_xv`, descending.
    pub omega2_xv: DVector<f64>,
    pub constraint: NormConstraint,
    /// True when the spectra carry ties (relative gap below 1e-8) or zero
    /// columns; the canonical form is then deterministic but basis-dependent
    /// and should not be treated as unique.
    pub degenerate: bool,
}

/// Rotates and sign-fixes a constraint-satisfying parameter set into its
/// canonical form:
///
/// 1. a rotation `R_u` diagonalizes `Ŵ_yuᵀ Ŵ_yu` with descending
///    eigenvalues, a rotation `R_v` diagonalizes `Ŵ_xvᵀ Ŵ_xv` likewise;
/// 2. `W → W · diag(R_u, R_v)`;
/// 3. column signs are flipped so every column sum of `Ŵ_yu` and of
///    `Ŵ_xv` is nonnegative (a zero column sum resolves to making the
///    largest-magnitude entry positive, with near-ties broken toward the
///    earliest entry so the choice never rests on rounding noise).
///
/// The observed covariance is untouched (the transformation is exactly the
/// invariance group of the likelihood), unique variances and means are
/// untouched, and the map is idempotent.
pub fn canonicalize(params: &PlsParams) -> Result<CanonicalForm> {
    check_identifiability(params.p_x(), params.p_y(), params.dims()).into_result()?;
    let scaled = scale_loadings(params)?;
    let dims = params.dims();
    let (p_x, p_y) = (params.p_x(), params.p_y());
    let (p_u, p_v) = (dims.p_u(), dims.p_v());

    let w_hat_yu = scaled.w_hat.view((p_x, 0), (p_y, p_u)).into_owned();
    let w_hat_xv = scaled.w_hat.view((0, p_u), (p_x, p_v)).into_owned();

    let (omega2_yu, r_u) = eigen_sorted_desc(&(w_hat_yu.transpose() * &w_hat_yu));
    let (omega2_xv, r_v) = eigen_sorted_desc(&(w_hat_xv.transpose() * &w_hat_xv));

    let mut w_xu = params.w_xu() * &r_u;
    let mut w_yu = params.w_yu() * &r_u;
    let mut w_xv = params.w_xv() * &r_v;

    // sign convention on the correlation-scaled blocks; the per-row scaling
    // is positive, so per-column signs transfer unchanged to the raw blocks
    let sigma_y_scale: Vec<f64> = (0..p_y)
        .map(|i| 1.0 / (params.psi_y()[i] + params.w_yu().row(i).norm_squared()).sqrt())
        .collect();
    for j in 0..p_u {
        let scaled_col: Vec<f64> = (0..p_y).map(|i| w_yu[(i, j)] * sigma_y_scale[i]).collect();
        if flip_needed(&scaled_col) {
            w_yu.column_mut(j).neg_mut();
            w_xu.column_mut(j).neg_mut();
        }
    }
    let sigma_x_diag = params.sigma_x_diagonal();
    for j in 0..p_v {
        let scaled_col: Vec<f64> = (0..p_x)
            .map(|i| w_xv[(i, j)] / sigma_x_diag[i].sqrt())
            .collect();
        if flip_needed(&scaled_col) {
            w_xv.column_mut(j).neg_mut();
        }
    }

    let degenerate = spectrum_degenerate(&omega2_yu) || spectrum_degenerate(&omega2_xv);

    let params = PlsParams::new(
        params.mu_x().clone(),
        params.mu_y().clone(),
        w_xu,
        w_xv,
        w_yu,
        params.psi_x().clone(),
        params.psi_y().clone(),
    )?;
    Ok(CanonicalForm {
        params,
        omega2_yu,
        omega2_xv,
        constraint: scaled.constraint,
        degenerate,
    })
}

/// Smallest eigenvalue of the correlation matrix
/// `Σ̃ = diag(Σ)^{-1/2} Σ diag(Σ)^{-1/2} = (1−h²) I + Ŵ Ŵᵀ`.
///
/// Whenever the latent dimension is below the observed dimension, `Ŵ Ŵᵀ`
/// is rank deficient and the smallest eigenvalue equals `1 − h²`, with
/// multiplicity `(p_x + p_y) − (p_u + p_v)` for generic loadings.
pub fn smallest_eigvalue_check(params: &PlsParams) -> f64 {
    let joint = params.joint_covariance();
    let d = joint.dim();
    let scale: Vec<f64> = (0..d).map(|i| 1.0 / joint.cov()[(i, i)].sqrt()).collect();
    let corr = DMatrix::from_fn(d, d, |i, j| joint.cov()[(i, j)] * scale[i] * scale[j]);
    crate::gaussian::smallest_eigenvalue(&corr)
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and eigenvector columns permuted to match.
pub(crate) fn eigen_sorted_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let k = m.nrows();
    if k == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let se = SymmetricEigen::new(symmetrized(m));
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
    let values = DVector::from_iterator(k, order.iter().map(|&i| se.eigenvalues[i]));
    let vectors = DMatrix::from_fn(k, k, |i, j| se.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Sign decision for one canonical column: flip when the column sum is
/// negative, falling back to the largest-magnitude entry when the sum is
/// numerically zero. Magnitudes within [`SIGN_TIE_RTOL`] of the maximum
/// count as tied and the earliest tied entry decides, so structurally exact
/// ties resolve identically for every parameter set fitted to the same
/// problem instead of following rounding noise.
fn flip_needed(entries: &[f64]) -> bool {
    let col_sum: f64 = entries.iter().sum();
    let largest_abs = entries.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
    if col_sum.abs() > ZERO_EIGENVALUE_ATOL * largest_abs.max(1e-300) {
        return col_sum < 0.0;
    }
    entries
        .iter()
        .find(|e| e.abs() >= (1.0 - SIGN_TIE_RTOL) * largest_abs)
        .is_some_and(|&e| e < 0.0)
}

fn spectrum_degenerate(omega2: &DVector<f64>) -> bool {
    let k = omega2.len();
    for j in 0..k {
        if omega2[j] <= ZERO_EIGENVALUE_ATOL {
            return true;
        }
        if j + 1 < k {
            let gap = omega2[j] - omega2[j + 1];
            if gap <= TIE_RTOL * omega2[j].abs().max(omega2[j + 1].abs()) {
                return true;
            }
        }
    }
    false
}
