//! The probabilistic PLS parameter set and its closed-form distributions:
//! joint covariance, predictive distribution, factor-score posteriors,
//! classical-limit scores, and regression coefficients.
//!
//! The generative model couples an input block `x` (dimension `p_x`) and an
//! output block `y` (dimension `p_y`) through shared latent factors `u`
//! (dimension `p_u`) and input-specific factors `v` (dimension `p_v`):
//!
//! ```text
//! z = (u, v) ~ N(0, I)
//! x | z ~ N(mu_x + W_xu u + W_xv v, diag(psi_x))
//! y | z ~ N(mu_y + W_yu u,          diag(psi_y))
//! ```
//!
//! The latent mean and covariance are fixed at 0 and I; any other choice is
//! absorbed into the loadings, so they carry no fields.

use nalgebra::{DMatrix, DVector};

use crate::error::{PplsError, Result};
use crate::gaussian::{cholesky, symmetrized, GaussianDist, IndexSet};

/// Latent-space widths: `p_u` shared factors and `p_v` input-specific ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentDims {
    p_u: usize,
    p_v: usize,
}

impl LatentDims {
    /// At least one shared factor is required; `p_v = 0` degenerates to a
    /// shared-only model.
    pub fn new(p_u: usize, p_v: usize) -> Result<Self> {
        if p_u == 0 {
            return Err(PplsError::param("p_u", "at least one shared factor is required"));
        }
        Ok(Self { p_u, p_v })
    }

    pub fn p_u(&self) -> usize {
        self.p_u
    }

    pub fn p_v(&self) -> usize {
        self.p_v
    }

    /// Total latent dimension `p_u + p_v`.
    pub fn total(&self) -> usize {
        self.p_u + self.p_v
    }
}

/// Full parameter set of the model.
///
/// The block loading matrix is `W = [[W_xu, W_xv], [W_yu, O]]`; the zero
/// block is structural (output features never load on input-specific
/// factors). Noise covariances are diagonal: `diag(psi_x)` and
/// `diag(psi_y)`, the unique variances.
///
/// Construction validates dimensions, strict positivity of the unique
/// variances, and finiteness. Column orthogonality of `W_yu` and `W_xv` is
/// deliberately not an invariant here: it is a property of the canonical
/// representative (rotations of the latent basis leave the likelihood
/// unchanged), established by canonicalization and measured by
/// [`PlsParams::column_orthogonality_defect`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlsParams {
    mu_x: DVector<f64>,
    mu_y: DVector<f64>,
    w_xu: DMatrix<f64>,
    w_xv: DMatrix<f64>,
    w_yu: DMatrix<f64>,
    psi_x: DVector<f64>,
    psi_y: DVector<f64>,
}

impl PlsParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mu_x: DVector<f64>,
        mu_y: DVector<f64>,
        w_xu: DMatrix<f64>,
        w_xv: DMatrix<f64>,
        w_yu: DMatrix<f64>,
        psi_x: DVector<f64>,
        psi_y: DVector<f64>,
    ) -> Result<Self> {
        let p_x = mu_x.len();
        let p_y = mu_y.len();
        if p_x == 0 || p_y == 0 {
            return Err(PplsError::param("dimensions", "p_x and p_y must be at least 1"));
        }
        let checks: [(&str, usize, usize); 5] = [
            ("W_xu rows", p_x, w_xu.nrows()),
            ("W_xv rows", p_x, w_xv.nrows()),
            ("W_yu rows", p_y, w_yu.nrows()),
            ("psi_x length", p_x, psi_x.len()),
            ("psi_y length", p_y, psi_y.len()),
        ];
        for (what, expected, actual) in checks {
            if expected != actual {
                return Err(PplsError::DimensionMismatch {
                    what,
                    expected,
                    actual,
                });
            }
        }
        if w_xu.ncols() != w_yu.ncols() {
            return Err(PplsError::DimensionMismatch {
                what: "W_yu columns (shared factors)",
                expected: w_xu.ncols(),
                actual: w_yu.ncols(),
            });
        }
        LatentDims::new(w_xu.ncols(), w_xv.ncols())?;
        if psi_x.iter().chain(psi_y.iter()).any(|&p| !(p > 0.0)) {
            return Err(PplsError::param("psi", "unique variances must be strictly positive"));
        }
        let finite = mu_x.iter().all(|v| v.is_finite())
            && mu_y.iter().all(|v| v.is_finite())
            && w_xu.iter().all(|v| v.is_finite())
            && w_xv.iter().all(|v| v.is_finite())
            && w_yu.iter().all(|v| v.is_finite())
            && psi_x.iter().all(|v| v.is_finite())
            && psi_y.iter().all(|v| v.is_finite());
        if !finite {
            return Err(PplsError::param("PlsParams", "non-finite entries"));
        }
        Ok(Self {
            mu_x,
            mu_y,
            w_xu,
            w_xv,
            w_yu,
            psi_x,
            psi_y,
        })
    }

    pub fn p_x(&self) -> usize {
        self.mu_x.len()
    }

    pub fn p_y(&self) -> usize {
        self.mu_y.len()
    }

    pub fn dims(&self) -> LatentDims {
        LatentDims {
            p_u: self.w_xu.ncols(),
            p_v: self.w_xv.ncols(),
        }
    }

    pub fn mu_x(&self) -> &DVector<f64> {
        &self.mu_x
    }

    pub fn mu_y(&self) -> &DVector<f64> {
        &self.mu_y
    }

    pub fn w_xu(&self) -> &DMatrix<f64> {
        &self.w_xu
    }

    pub fn w_xv(&self) -> &DMatrix<f64> {
        &self.w_xv
    }

    pub fn w_yu(&self) -> &DMatrix<f64> {
        &self.w_yu
    }

    pub fn psi_x(&self) -> &DVector<f64> {
        &self.psi_x
    }

    pub fn psi_y(&self) -> &DVector<f64> {
        &self.psi_y
    }

    /// Input-block loading `[W_xu | W_xv]`, shape `p_x × (p_u + p_v)`.
    pub fn w_x(&self) -> DMatrix<f64> {
        let (p_x, dims) = (self.p_x(), self.dims());
        let mut w = DMatrix::zeros(p_x, dims.total());
        w.view_mut((0, 0), (p_x, dims.p_u)).copy_from(&self.w_xu);
        w.view_mut((0, dims.p_u), (p_x, dims.p_v)).copy_from(&self.w_xv);
        w
    }

    /// Block loading `[[W_xu, W_xv], [W_yu, O]]`, shape `(p_x+p_y) × (p_u+p_v)`.
    pub fn w_joint(&self) -> DMatrix<f64> {
        let (p_x, p_y, dims) = (self.p_x(), self.p_y(), self.dims());
        let mut w = DMatrix::zeros(p_x + p_y, dims.total());
        w.view_mut((0, 0), (p_x, dims.p_u)).copy_from(&self.w_xu);
        w.view_mut((0, dims.p_u), (p_x, dims.p_v)).copy_from(&self.w_xv);
        w.view_mut((p_x, 0), (p_y, dims.p_u)).copy_from(&self.w_yu);
        w
    }

    /// Concatenated unique variances `[psi_x; psi_y]`.
    pub fn psi_joint(&self) -> DVector<f64> {
        let mut psi = DVector::zeros(self.p_x() + self.p_y());
        psi.rows_mut(0, self.p_x()).copy_from(&self.psi_x);
        psi.rows_mut(self.p_x(), self.p_y()).copy_from(&self.psi_y);
        psi
    }

    /// Concatenated means `[mu_x; mu_y]`.
    pub fn mu_joint(&self) -> DVector<f64> {
        let mut mu = DVector::zeros(self.p_x() + self.p_y());
        mu.rows_mut(0, self.p_x()).copy_from(&self.mu_x);
        mu.rows_mut(self.p_x(), self.p_y()).copy_from(&self.mu_y);
        mu
    }

    /// Marginal distribution of the observed vector `(x, y)`:
    /// mean `[mu_x; mu_y]`, covariance `diag(psi) + W Wᵀ`, whose blocks are
    ///
    /// ```text
    /// Σ_xx = diag(psi_x) + W_xu W_xuᵀ + W_xv W_xvᵀ
    /// Σ_xy = W_xu W_yuᵀ
    /// Σ_yy = diag(psi_y) + W_yu W_yuᵀ
    /// ```
    pub fn joint_covariance(&self) -> GaussianDist {
        let w = self.w_joint();
        let mut cov = symmetrized(&(&w * w.transpose()));
        for (i, psi) in self.psi_joint().iter().enumerate() {
            cov[(i, i)] += psi;
        }
        GaussianDist::new_unchecked(self.mu_joint(), cov)
    }

    /// Joint distribution of `(x, y, u, v)`: covariance `[[Σ, W], [Wᵀ, I]]`
    /// with `Σ` from [`PlsParams::joint_covariance`]. The `y`–`v` cross
    /// block is exactly zero for every parameter value.
    pub fn full_joint(&self) -> GaussianDist {
        let d = self.p_x() + self.p_y();
        let k = self.dims().total();
        let obs = self.joint_covariance();
        let w = self.w_joint();

        let mut cov = DMatrix::zeros(d + k, d + k);
        cov.view_mut((0, 0), (d, d)).copy_from(obs.cov());
        cov.view_mut((0, d), (d, k)).copy_from(&w);
        cov.view_mut((d, 0), (k, d)).copy_from(&w.transpose());
        cov.view_mut((d, d), (k, k)).copy_from(&DMatrix::identity(k, k));

        let mut mean = DVector::zeros(d + k);
        mean.rows_mut(0, d).copy_from(obs.mean());
        GaussianDist::new_unchecked(mean, cov)
    }

    /// Predictive distribution of `y` given a fully observed `x`:
    /// mean `mu_y + W_yu W_xuᵀ Σ_x⁻¹ (x − mu_x)` and covariance
    /// `Σ_yy − W_yu W_xuᵀ Σ_x⁻¹ W_xu W_yuᵀ`.
    pub fn predict_y_given_x(&self, x: &DVector<f64>) -> Result<GaussianDist> {
        self.check_x_dim(x.len())?;
        let sigma_x = self.sigma_x();
        let chol = cholesky(&sigma_x, "input covariance Σ_x")?;
        // Z = Σ_x⁻¹ W_xu, so B = W_yu Zᵀ and Σ_y|x = Σ_yy − B W_xu W_yuᵀ.
        let z = chol.solve(&self.w_xu);
        let b = &self.w_yu * z.transpose();
        let mean = &self.mu_y + &b * (x - &self.mu_x);
        let cov = symmetrized(&(self.sigma_y() - &b * &self.w_xu * self.w_yu.transpose()));
        Ok(GaussianDist::new_unchecked(mean, cov))
    }

    /// Low-rank regression coefficient matrix `B_yx = W_yu W_xuᵀ Σ_x⁻¹`
    /// (rank at most `p_u`), satisfying
    /// `predict mean = mu_y + B_yx (x − mu_x)`.
    pub fn regression_coefficients(&self) -> Result<DMatrix<f64>> {
        let sigma_x = self.sigma_x();
        let chol = cholesky(&sigma_x, "input covariance Σ_x")?;
        Ok(&self.w_yu * chol.solve(&self.w_xu).transpose())
    }

    /// Posterior of the latent vector `z = (u, v)` given both blocks, in
    /// precision form: covariance `[I + Wᵀ diag(psi)⁻¹ W]⁻¹`, mean
    /// `cov · Wᵀ diag(psi)⁻¹ ([x; y] − mu)`.
    ///
    /// The precision form stays well conditioned as the unique variances
    /// shrink, where conditioning the full joint degrades.
    pub fn posterior_z_given_xy(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<GaussianDist> {
        self.check_x_dim(x.len())?;
        self.check_y_dim(y.len())?;
        let mut centered = DVector::zeros(self.p_x() + self.p_y());
        centered.rows_mut(0, self.p_x()).copy_from(&(x - &self.mu_x));
        centered.rows_mut(self.p_x(), self.p_y()).copy_from(&(y - &self.mu_y));
        precision_form_posterior(&self.w_joint(), &self.psi_joint(), &centered)
    }

    /// Posterior of `z = (u, v)` given `x` alone, precision form with
    /// `W_x = [W_xu | W_xv]` and `psi_x`.
    pub fn posterior_z_given_x(&self, x: &DVector<f64>) -> Result<GaussianDist> {
        self.check_x_dim(x.len())?;
        precision_form_posterior(&self.w_x(), &self.psi_x, &(x - &self.mu_x))
    }

    /// Posterior of `z = (u, v)` given `y` alone. The `v` block is
    /// structural: `y` carries no information about input-specific factors,
    /// so its posterior mean is exactly 0, its covariance exactly I, and the
    /// `u`–`v` cross covariance exactly zero.
    pub fn posterior_z_given_y(&self, y: &DVector<f64>) -> Result<GaussianDist> {
        self.check_y_dim(y.len())?;
        let u_post = precision_form_posterior(&self.w_yu, &self.psi_y, &(y - &self.mu_y))?;
        let dims = self.dims();
        let k = dims.total();
        let mut mean = DVector::zeros(k);
        mean.rows_mut(0, dims.p_u).copy_from(u_post.mean());
        let mut cov = DMatrix::identity(k, k);
        cov.view_mut((0, 0), (dims.p_u, dims.p_u)).copy_from(u_post.cov());
        Ok(GaussianDist::new_unchecked(mean, cov))
    }

    /// Posterior of `z` given an arbitrary observed subset of the joint
    /// vector `(x, y)`. `mask` has length `p_x + p_y` (x first); `observed`
    /// holds the present values in index order. Computed from the covariance
    /// blocks restricted to the observed set:
    /// mean `Σ_zO Σ_OO⁻¹ (o − mu_O)`, covariance `I − Σ_zO Σ_OO⁻¹ Σ_Oz`.
    pub fn posterior_z_given_partial(
        &self,
        observed: &DVector<f64>,
        mask: &[bool],
    ) -> Result<GaussianDist> {
        let d = self.p_x() + self.p_y();
        if mask.len() != d {
            return Err(PplsError::DimensionMismatch {
                what: "observation mask",
                expected: d,
                actual: mask.len(),
            });
        }
        let idx = IndexSet::from_mask(mask);
        if idx.len() != observed.len() {
            return Err(PplsError::DimensionMismatch {
                what: "observed values",
                expected: idx.len(),
                actual: observed.len(),
            });
        }
        let k = self.dims().total();
        if idx.is_empty() {
            return Ok(GaussianDist::new_unchecked(
                DVector::zeros(k),
                DMatrix::identity(k, k),
            ));
        }
        let joint = self.joint_covariance();
        let sigma_oo = crate::gaussian::select_square(joint.cov(), idx.as_slice());
        // Σ_Oz: observed rows of the block loading matrix.
        let w = self.w_joint();
        let sigma_oz = DMatrix::from_fn(idx.len(), k, |i, j| w[(idx.as_slice()[i], j)]);
        let chol = cholesky(&sigma_oo, "observed-subset covariance Σ_OO")?;
        let centered = observed - crate::gaussian::select_vector(joint.mean(), idx.as_slice());
        let gain = chol.solve(&sigma_oz); // Σ_OO⁻¹ Σ_Oz
        let mean = sigma_oz.transpose() * chol.solve(&centered);
        let cov = symmetrized(&(DMatrix::identity(k, k) - sigma_oz.transpose() * gain));
        Ok(GaussianDist::new_unchecked(mean, cov))
    }

    /// Predictive distribution of `y` given an observed subset of `x`.
    /// `mask` has length `p_x`; `observed` holds the present values in index
    /// order. An all-false mask returns the `y` marginal.
    pub fn predict_y_given_partial_x(
        &self,
        observed: &DVector<f64>,
        mask: &[bool],
    ) -> Result<GaussianDist> {
        if mask.len() != self.p_x() {
            return Err(PplsError::DimensionMismatch {
                what: "x observation mask",
                expected: self.p_x(),
                actual: mask.len(),
            });
        }
        let idx = IndexSet::from_mask(mask);
        if idx.len() != observed.len() {
            return Err(PplsError::DimensionMismatch {
                what: "observed x values",
                expected: idx.len(),
                actual: observed.len(),
            });
        }
        if idx.is_empty() {
            return Ok(GaussianDist::new_unchecked(self.mu_y.clone(), self.sigma_y()));
        }
        let sigma_x = self.sigma_x();
        let sigma_oo = crate::gaussian::select_square(&sigma_x, idx.as_slice());
        // Σ_yO: cross covariance W_yu W_xuᵀ restricted to observed columns.
        let cross = &self.w_yu * self.w_xu.transpose();
        let sigma_yo = DMatrix::from_fn(self.p_y(), idx.len(), |i, j| {
            cross[(i, idx.as_slice()[j])]
        });
        let chol = cholesky(&sigma_oo, "observed-x covariance Σ_OO")?;
        let centered = observed - crate::gaussian::select_vector(&self.mu_x, idx.as_slice());
        let mean = &self.mu_y + &sigma_yo * chol.solve(&centered);
        let cov = symmetrized(&(self.sigma_y() - &sigma_yo * chol.solve(&sigma_yo.transpose())));
        Ok(GaussianDist::new_unchecked(mean, cov))
    }

    /// Plug-in predictive `N(mu_y + W_yu m_u, diag(psi_y))` where `m_u` is
    /// the shared part of the factor score given `x`.
    ///
    /// Its mean coincides exactly with [`PlsParams::predict_y_given_x`]
    /// (the exact marginalization over the latent posterior); the covariance
    /// omits the posterior-uncertainty term `W_yu Σ_z|x,uu W_yuᵀ` plus the
    /// cross terms, so it understates predictive variance.
    pub fn plug_in_predict(&self, x: &DVector<f64>) -> Result<GaussianDist> {
        let post = self.posterior_z_given_x(x)?;
        let m_u = post.mean().rows(0, self.dims().p_u()).into_owned();
        Ok(GaussianDist::new_unchecked(
            &self.mu_y + &self.w_yu * m_u,
            DMatrix::from_diagonal(&self.psi_y),
        ))
    }

    /// Classical-limit factor score: the least-squares projection of the
    /// standardized input onto the unit-row loading columns,
    /// `(W̃_xᵀ W̃_x)⁻¹ W̃_xᵀ diag(Σ_x)^{-1/2} (x − mu_x)`.
    ///
    /// As the constraint level `c` grows (noise vanishing relative to
    /// signal), the posterior mean of `z` given `x` converges to this value.
    pub fn classical_scores(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x_dim(x.len())?;
        let c = self.constraint_level();
        if !(c > 0.0) {
            return Err(PplsError::NoSignal {
                context: "classical scores need a nonzero loading matrix".into(),
            });
        }
        let w_x = self.w_x();
        // W̃_x: rows scaled by 1/(c·sqrt(psi_x)).
        let mut w_tilde = w_x;
        for i in 0..self.p_x() {
            let s = 1.0 / (c * self.psi_x[i].sqrt());
            w_tilde.row_mut(i).scale_mut(s);
        }
        let sigma_x_diag = self.sigma_x_diagonal();
        let standardized =
            DVector::from_fn(self.p_x(), |i, _| (x[i] - self.mu_x[i]) / sigma_x_diag[i].sqrt());
        let gram = symmetrized(&(w_tilde.transpose() * &w_tilde));
        let rank_deficient = || PplsError::RankDeficient {
            context: "classical scores: W̃_x has linearly dependent columns".into(),
        };
        let chol = nalgebra::Cholesky::new(gram).ok_or_else(rank_deficient)?;
        // a collapsed Cholesky pivot marks numerically dependent columns
        // even when the factorization itself squeaks through; the diagonal
        // carries sqrt(pivot), so 1e-6 here is a 1e-12 condition floor
        let pivots = chol.l_dirty().diagonal();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for p in pivots.iter() {
            lo = lo.min(*p);
            hi = hi.max(*p);
        }
        if lo <= 1e-6 * hi {
            return Err(rank_deficient());
        }
        Ok(chol.solve(&(w_tilde.transpose() * standardized)))
    }

    /// Root-mean-square row norm of the noise-scaled loading matrix
    /// `diag(psi)^{-1/2} W`. When the equal-row-norm constraint holds this
    /// equals the constraint level `c` exactly.
    pub fn constraint_level(&self) -> f64 {
        let w = self.w_joint();
        let psi = self.psi_joint();
        let d = w.nrows();
        let total: f64 = (0..d).map(|i| w.row(i).norm_squared() / psi[i]).sum();
        (total / d as f64).sqrt()
    }

    /// Largest off-diagonal Gram entry of the correlation-scaled blocks
    /// `Ŵ_yu` and `Ŵ_xv` (rows of `W_yu` / `W_xv` divided by the matching
    /// `sqrt(Σ_ii)`), relative to the adjacent column norms. Zero for a
    /// canonical representative; positive values measure how far the latent
    /// basis is from the canonical one.
    pub fn column_orthogonality_defect(&self) -> f64 {
        let defect = |w: &DMatrix<f64>, sigma_diag: &DVector<f64>| -> f64 {
            let mut scaled = w.clone();
            for i in 0..w.nrows() {
                let s = 1.0 / sigma_diag[i].sqrt();
                scaled.row_mut(i).scale_mut(s);
            }
            let gram = scaled.transpose() * scaled;
            let k = gram.nrows();
            let mut worst = 0.0_f64;
            for i in 0..k {
                for j in (i + 1)..k {
                    let scale = (gram[(i, i)] * gram[(j, j)]).sqrt().max(1e-300);
                    worst = worst.max(gram[(i, j)].abs() / scale);
                }
            }
            worst
        };
        let sigma_y_diag = DVector::from_fn(self.p_y(), |i, _| {
            self.psi_y[i] + self.w_yu.row(i).norm_squared()
        });
        defect(&self.w_yu, &sigma_y_diag).max(defect(&self.w_xv, &self.sigma_x_diagonal()))
    }

    /// Diagonal of the input-block covariance: `psi_x,i + ‖row i of W_x‖²`.
    pub fn sigma_x_diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.p_x(), |i, _| {
            self.psi_x[i] + self.w_xu.row(i).norm_squared() + self.w_xv.row(i).norm_squared()
        })
    }

    fn sigma_x(&self) -> DMatrix<f64> {
        let mut s = symmetrized(
            &(&self.w_xu * self.w_xu.transpose() + &self.w_xv * self.w_xv.transpose()),
        );
        for i in 0..self.p_x() {
            s[(i, i)] += self.psi_x[i];
        }
        s
    }

    fn sigma_y(&self) -> DMatrix<f64> {
        let mut s = symmetrized(&(&self.w_yu * self.w_yu.transpose()));
        for i in 0..self.p_y() {
            s[(i, i)] += self.psi_y[i];
        }
        s
    }

    fn check_x_dim(&self, got: usize) -> Result<()> {
        if got != self.p_x() {
            return Err(PplsError::DimensionMismatch {
                what: "x vector",
                expected: self.p_x(),
                actual: got,
            });
        }
        Ok(())
    }

    fn check_y_dim(&self, got: usize) -> Result<()> {
        if got != self.p_y() {
            return Err(PplsError::DimensionMismatch {
                what: "y vector",
                expected: self.p_y(),
                actual: got,
            });
        }
        Ok(())
    }
}

/// Posterior `N(M⁻¹ Wᵀ diag(psi)⁻¹ centered, M⁻¹)` with
/// `M = I + Wᵀ diag(psi)⁻¹ W`.
fn precision_form_posterior(
    w: &DMatrix<f64>,
    psi: &DVector<f64>,
    centered: &DVector<f64>,
) -> Result<GaussianDist> {
    let k = w.ncols();
    let mut psi_inv_w = w.clone();
    for i in 0..w.nrows() {
        let s = 1.0 / psi[i];
        psi_inv_w.row_mut(i).scale_mut(s);
    }
    let m = symmetrized(&(DMatrix::identity(k, k) + w.transpose() * &psi_inv_w));
    let chol = cholesky(&m, "latent posterior precision")?;
    let mean = chol.solve(&(psi_inv_w.transpose() * centered));
    let cov = symmetrized(&chol.inverse());
    Ok(GaussianDist::new_unchecked(mean, cov))
}

/// Factor scores for a batch of fully observed rows: posterior means of `z`
/// given `(x, y)` and given `x` alone, one row per observation, plus the
/// shared posterior covariances (constant across rows when nothing is
/// missing).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorScores {
    /// Posterior means given both blocks, `n × (p_u + p_v)`.
    pub m_xy: DMatrix<f64>,
    /// Posterior means given the input block alone, `n × (p_u + p_v)`.
    pub m_x: DMatrix<f64>,
    /// Posterior covariance of `z` given `(x, y)`.
    pub cov_z_given_xy: DMatrix<f64>,
    /// Posterior covariance of `z` given `x`.
    pub cov_z_given_x: DMatrix<f64>,
}

/// Computes [`FactorScores`] for row-major data matrices `x` (`n × p_x`) and
/// `y` (`n × p_y`) with no missing entries.
pub fn factor_scores(
    params: &PlsParams,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<FactorScores> {
    if x.ncols() != params.p_x() {
        return Err(PplsError::DimensionMismatch {
            what: "x columns",
            expected: params.p_x(),
            actual: x.ncols(),
        });
    }
    if y.ncols() != params.p_y() {
        return Err(PplsError::DimensionMismatch {
            what: "y columns",
            expected: params.p_y(),
            actual: y.ncols(),
        });
    }
    if x.nrows() != y.nrows() {
        return Err(PplsError::DimensionMismatch {
            what: "y rows",
            expected: x.nrows(),
            actual: y.nrows(),
        });
    }
    let n = x.nrows();
    let k = params.dims().total();
    let mut m_xy = DMatrix::zeros(n, k);
    let mut m_x = DMatrix::zeros(n, k);
    let mut cov_xy = DMatrix::identity(k, k);
    let mut cov_x = DMatrix::identity(k, k);
    for r in 0..n {
        let xr = x.row(r).transpose();
        let yr = y.row(r).transpose();
        let post_xy = params.posterior_z_given_xy(&xr, &yr)?;
        let post_x = params.posterior_z_given_x(&xr)?;
        m_xy.row_mut(r).copy_from(&post_xy.mean().transpose());
        m_x.row_mut(r).copy_from(&post_x.mean().transpose());
        if r == 0 {
            cov_xy = post_xy.cov().clone();
            cov_x = post_x.cov().clone();
        }
    }
    Ok(FactorScores {
        m_xy,
        m_x,
        cov_z_given_xy: cov_xy,
        cov_z_given_x: cov_x,
    })
}
