//! Constrained maximum-likelihood fitting with native per-entry missing
//! data.
//!
//! The optimizer works in a reparametrized space where the constraint is
//! exact at every iterate: free coordinates are the means, the loading
//! blocks, and `log c`, with the unique variances derived as
//! `psi_i = ‖W row i‖² / c²`. No iterate can drive a unique variance to
//! zero while its loading row stays away from zero, so improper solutions
//! are structurally excluded. Column orthogonality is rotation gauge and is
//! restored afterwards by canonicalization, never enforced during ascent.
//!
//! The observed-data log-likelihood sums, over missingness buckets, the
//! Gaussian log-density of each observed sub-vector under the matching
//! sub-covariance. Buckets carry their sufficient statistics, so one
//! evaluation costs one factorization per distinct pattern regardless of
//! the number of rows.
//!
//! A diagnostic worth knowing when reading likelihood grids: with `p_y`
//! output features, cells `(p_u, p_v) = (p_y, k)` and `(p_y + 1, k − 1)`
//! reach essentially the same maximum, because a shared factor beyond the
//! `p_y`-th cannot load on the outputs identifiably and behaves like an
//! input-specific one. Expect near-equal values on such anti-diagonal
//! pairs rather than treating them as convergence failures.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::canonical::{canonicalize, check_identifiability, enforce_constraint, CanonicalForm};
use crate::dataset::Dataset;
use crate::error::{PplsError, Result};
use crate::gaussian::{cholesky, select_square, select_vector, symmetrized};
use crate::model::{LatentDims, PlsParams};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Fit settings. `Default`-like construction via [`FitConfig::new`] supplies
/// the standard optimizer budget.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub dims: LatentDims,
    /// Iteration cap per restart.
    pub max_iters: usize,
    /// Relative log-likelihood change under which an iteration counts as
    /// stalled; three consecutive stalled iterations mean convergence.
    pub rel_tol: f64,
    /// Independent optimizer starts; the best final log-likelihood wins.
    pub n_restarts: usize,
    pub seed: u64,
    /// Diagonal ridge added to every observed-subset covariance during
    /// optimization only; the reported log-likelihood is always ridge-free.
    pub ridge: f64,
    /// Diagnostic mode: drop the constraint and optimize `log psi` freely.
    /// Improper solutions (unique variances collapsing to zero) become
    /// possible again; no canonicalization is attempted.
    pub unconstrained_psi: bool,
    /// Permit fitting dimension combinations that fail the identifiability
    /// conditions (for likelihood-surface studies); the result is flagged
    /// and not canonicalized.
    pub allow_nonidentifiable: bool,
    /// Record `(min psi, min ‖W row‖²/c²)` at every accepted iterate of the
    /// winning restart.
    pub track_psi_floor: bool,
}

impl FitConfig {
    pub fn new(dims: LatentDims) -> Self {
        Self {
            dims,
            max_iters: 2000,
            rel_tol: 1e-8,
            n_restarts: 8,
            seed: 0,
            ridge: 0.0,
            unconstrained_psi: false,
            allow_nonidentifiable: false,
            track_psi_floor: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, n: usize) -> Self {
        self.n_restarts = n;
        self
    }

    /// Checks the numeric knobs for obviously impossible values.
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(PplsError::param("rel_tol", "must lie in (0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(PplsError::param("max_iters", "must be positive"));
        }
        if self.n_restarts == 0 {
            return Err(PplsError::param("n_restarts", "must be positive"));
        }
        if !(self.ridge >= 0.0) {
            return Err(PplsError::param("ridge", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Outcome of a fit: the estimate (canonical whenever the dimensions are
/// identifiable and the constraint is active), the observed-data
/// log-likelihood, BIC, and the per-restart trace.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// The estimate; equals `canonical.params` when `canonical` is present.
    pub params: PlsParams,
    /// Canonical representative; absent for non-identifiable dimensions and
    /// in the unconstrained-psi diagnostic mode.
    pub canonical: Option<CanonicalForm>,
    pub identifiable: bool,
    /// Observed-data log-likelihood at the optimum (best across restarts).
    pub loglik: f64,
    /// `−2·loglik + n_params·ln(n)`.
    pub bic: f64,
    pub n_params: usize,
    /// Accepted iterations of the winning restart.
    pub iterations: usize,
    pub converged: bool,
    /// Final log-likelihood of every restart, by restart index; abandoned
    /// restarts hold `-inf`.
    pub restart_logliks: Vec<f64>,
    /// Per accepted iterate of the winning restart:
    /// `(min psi_ii, min ‖W row‖²/c²)`. Populated when requested.
    pub psi_floor_trace: Vec<(f64, f64)>,
}

/// Count of free parameters under the constraint and the canonical gauge:
/// means, loading entries, minus the fixed rotations, plus the scalar `c`
/// (the unique variances are bound to the loadings).
pub fn count_free_params(p_x: usize, p_y: usize, dims: LatentDims) -> usize {
    let (p_u, p_v) = (dims.p_u(), dims.p_v());
    let rotations = p_u * (p_u - 1) / 2 + p_v * p_v.saturating_sub(1) / 2;
    (p_x + p_y) + ((p_x + p_y) * p_u + p_x * p_v) - rotations + 1
}

/// Observed-data log-likelihood: the sum over rows of the log-density of the
/// observed sub-vector under the corresponding sub-covariance, computed per
/// missingness bucket from cached sufficient statistics.
pub fn log_likelihood(params: &PlsParams, data: &Dataset) -> Result<f64> {
    check_data_dims(params.p_x(), params.p_y(), data)?;
    let sigma = params.joint_covariance();
    let mu = params.mu_joint();
    let evals = pattern_evals(data, sigma.cov(), &mu, 0.0, false)?;
    Ok(evals.iter().map(|e| e.loglik).sum())
}

/// Observed-data log-likelihood together with its analytic gradient in the
/// free constrained coordinates
/// `[mu_x; mu_y; vec W_xu; vec W_xv; vec W_yu; ln c]`
/// (loading blocks column-major). The unique variances are not independent
/// coordinates: the constraint ties `psi_i = ‖W row i‖² / c²`, and the
/// gradient accounts for that dependence, so entries match finite
/// differences of [`log_likelihood`] taken through
/// [`enforce_constraint`](crate::canonical::enforce_constraint).
pub fn log_likelihood_gradient(
    params: &PlsParams,
    data: &Dataset,
) -> Result<(f64, DVector<f64>)> {
    check_data_dims(params.p_x(), params.p_y(), data)?;
    let dims = params.dims();
    let layout = ThetaLayout {
        p_x: params.p_x(),
        p_y: params.p_y(),
        p_u: dims.p_u(),
        p_v: dims.p_v(),
        unconstrained_psi: false,
    };
    let sigma = params.joint_covariance();
    let mu = params.mu_joint();
    let dense = dense_gradient(data, sigma.cov(), &mu, 0.0)?;
    Ok((dense.loglik, layout.chain(params, &dense)))
}

fn check_data_dims(p_x: usize, p_y: usize, data: &Dataset) -> Result<()> {
    if data.p_x() != p_x {
        return Err(PplsError::DimensionMismatch {
            what: "data x columns",
            expected: p_x,
            actual: data.p_x(),
        });
    }
    if data.p_y() != p_y {
        return Err(PplsError::DimensionMismatch {
            what: "data y columns",
            expected: p_y,
            actual: data.p_y(),
        });
    }
    Ok(())
}

struct PatternEval {
    loglik: f64,
    /// `½(Σ_g⁻¹ S_g Σ_g⁻¹ − n_g Σ_g⁻¹)` on the observed subset; present only
    /// when gradients were requested.
    h: Option<DMatrix<f64>>,
    /// `Σ_g⁻¹ (s1 − n_g μ_O)`; present only when gradients were requested.
    mu_part: Option<DVector<f64>>,
}

/// Evaluates every missingness bucket: log-likelihood contributions and,
/// optionally, the dense derivative pieces to scatter.
fn pattern_evals(
    data: &Dataset,
    sigma: &DMatrix<f64>,
    mu: &DVector<f64>,
    ridge: f64,
    want_grad: bool,
) -> Result<Vec<PatternEval>> {
    let eval_one = |(g, pat): (usize, &crate::dataset::Pattern)| -> Result<PatternEval> {
        let k = pat.indices.len();
        let mut sigma_oo = select_square(sigma, &pat.indices);
        if ridge > 0.0 {
            for i in 0..k {
                sigma_oo[(i, i)] += ridge;
            }
        }
        let chol = cholesky(&sigma_oo, "").map_err(|e| match e {
            PplsError::SingularCovariance {
                smallest_eigenvalue,
                ..
            } => PplsError::SingularCovariance {
                context: format!("observed-subset covariance of pattern {g} ({k} coords)"),
                smallest_eigenvalue,
            },
            other => other,
        })?;
        let mu_o = select_vector(mu, &pat.indices);
        // S_g(μ) = M2 − μ s1ᵀ − s1 μᵀ + n_g μ μᵀ
        let mut s_g = pat.m2.clone();
        s_g.syger(-1.0, &mu_o, &pat.s1, 1.0);
        s_g.syger(-1.0, &pat.s1, &mu_o, 1.0);
        s_g.syger(pat.weight, &mu_o, &mu_o, 1.0);
        let s_g = {
            // syger touched the lower triangle only; rebuild symmetry
            let mut full = s_g;
            for i in 0..k {
                for j in (i + 1)..k {
                    full[(i, j)] = full[(j, i)];
                }
            }
            full
        };
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        let b = chol.solve(&s_g); // Σ⁻¹ S
        let loglik =
            -0.5 * (pat.weight * (k as f64 * LN_2PI + log_det) + b.trace());
        if !loglik.is_finite() {
            return Err(PplsError::FitFailed {
                reason: format!("non-finite likelihood contribution in pattern {g}"),
            });
        }
        let (h, mu_part) = if want_grad {
            let sigma_inv = chol.inverse();
            let c = chol.solve(&b.transpose()); // Σ⁻¹ S Σ⁻¹
            let h = symmetrized(&((c - &sigma_inv * pat.weight) * 0.5));
            let mu_part = chol.solve(&(&pat.s1 - &mu_o * pat.weight));
            (Some(h), Some(mu_part))
        } else {
            (None, None)
        };
        Ok(PatternEval {
            loglik,
            h,
            mu_part,
        })
    };

    let pats = data.patterns();
    if pats.len() >= 8 {
        pats.par_iter().enumerate().map(eval_one).collect()
    } else {
        pats.iter().enumerate().map(eval_one).collect()
    }
}

/// Derivative of the log-likelihood with respect to the joint covariance
/// (`g_sigma`, symmetric, scattered over all coordinates) and the joint mean
/// (`g_mu`), plus the log-likelihood value itself.
struct DenseGrad {
    loglik: f64,
    g_sigma: DMatrix<f64>,
    g_mu: DVector<f64>,
}

fn dense_gradient(
    data: &Dataset,
    sigma: &DMatrix<f64>,
    mu: &DVector<f64>,
    ridge: f64,
) -> Result<DenseGrad> {
    let d = sigma.nrows();
    let evals = pattern_evals(data, sigma, mu, ridge, true)?;
    let mut g_sigma = DMatrix::zeros(d, d);
    let mut g_mu = DVector::zeros(d);
    let mut loglik = 0.0;
    for (pat, eval) in data.patterns().iter().zip(&evals) {
        loglik += eval.loglik;
        let h = eval.h.as_ref().expect("gradient piece requested");
        let mu_part = eval.mu_part.as_ref().expect("gradient piece requested");
        for (a, &ia) in pat.indices.iter().enumerate() {
            g_mu[ia] += mu_part[a];
            for (b, &ib) in pat.indices.iter().enumerate() {
                g_sigma[(ia, ib)] += h[(a, b)];
            }
        }
    }
    Ok(DenseGrad {
        loglik,
        g_sigma,
        g_mu,
    })
}

/// Free-coordinate layout of the optimization space.
///
/// Constrained mode: `[mu_x; mu_y; vec W_xu; vec W_xv; vec W_yu; log c]`.
/// Unconstrained mode swaps the trailing scalar for `[log psi_x; log psi_y]`.
/// Loading blocks are packed column-major.
#[derive(Debug, Clone, Copy)]
struct ThetaLayout {
    p_x: usize,
    p_y: usize,
    p_u: usize,
    p_v: usize,
    unconstrained_psi: bool,
}

impl ThetaLayout {
    fn len(&self) -> usize {
        let (p_x, p_y, p_u, p_v) = (self.p_x, self.p_y, self.p_u, self.p_v);
        let base = (p_x + p_y) + p_x * p_u + p_x * p_v + p_y * p_u;
        if self.unconstrained_psi {
            base + p_x + p_y
        } else {
            base + 1
        }
    }

    fn pack(&self, params: &PlsParams, c: f64) -> DVector<f64> {
        let mut theta = Vec::with_capacity(self.len());
        theta.extend(params.mu_x().iter());
        theta.extend(params.mu_y().iter());
        theta.extend(params.w_xu().iter());
        theta.extend(params.w_xv().iter());
        theta.extend(params.w_yu().iter());
        if self.unconstrained_psi {
            theta.extend(params.psi_x().iter().map(|p| p.ln()));
            theta.extend(params.psi_y().iter().map(|p| p.ln()));
        } else {
            theta.push(c.ln());
        }
        DVector::from_vec(theta)
    }

    fn unpack(&self, theta: &DVector<f64>) -> Result<PlsParams> {
        let (p_x, p_y, p_u, p_v) = (self.p_x, self.p_y, self.p_u, self.p_v);
        let mut at = 0usize;
        let mut take = |n: usize| -> &[f64] {
            let s = &theta.as_slice()[at..at + n];
            at += n;
            s
        };
        let mu_x = DVector::from_row_slice(take(p_x));
        let mu_y = DVector::from_row_slice(take(p_y));
        let w_xu = DMatrix::from_column_slice(p_x, p_u, take(p_x * p_u));
        let w_xv = DMatrix::from_column_slice(p_x, p_v, take(p_x * p_v));
        let w_yu = DMatrix::from_column_slice(p_y, p_u, take(p_y * p_u));
        if self.unconstrained_psi {
            let psi_x = DVector::from_iterator(p_x, take(p_x).iter().map(|l| l.exp()));
            let psi_y = DVector::from_iterator(p_y, take(p_y).iter().map(|l| l.exp()));
            PlsParams::new(mu_x, mu_y, w_xu, w_xv, w_yu, psi_x, psi_y)
        } else {
            let c = take(1)[0].exp();
            enforce_constraint(mu_x, mu_y, w_xu, w_xv, w_yu, c)
        }
    }

    /// Chains the dense (μ, Σ) gradient into free coordinates.
    fn chain(&self, params: &PlsParams, dense: &DenseGrad) -> DVector<f64> {
        let (p_x, p_y, p_u, p_v) = (self.p_x, self.p_y, self.p_u, self.p_v);
        let w = params.w_joint();
        let g = &dense.g_sigma;
        // ∂L/∂W through Σ = diag(psi) + W Wᵀ is 2 G W; the constraint adds
        // (2/c²) diag(G) W through psi_i = ‖W row i‖²/c².
        let mut grad_w = g * &w * 2.0;
        if !self.unconstrained_psi {
            let c2 = {
                let c = params.constraint_level();
                c * c
            };
            for i in 0..(p_x + p_y) {
                let gim = 2.0 * g[(i, i)] / c2;
                for j in 0..(p_u + p_v) {
                    grad_w[(i, j)] += gim * w[(i, j)];
                }
            }
        }

        let mut out = Vec::with_capacity(self.len());
        out.extend(dense.g_mu.iter().take(p_x + p_y));
        // blocks in pack order, column-major; the y–v block is structural
        for j in 0..p_u {
            for i in 0..p_x {
                out.push(grad_w[(i, j)]);
            }
        }
        for j in 0..p_v {
            for i in 0..p_x {
                out.push(grad_w[(i, p_u + j)]);
            }
        }
        for j in 0..p_u {
            for i in 0..p_y {
                out.push(grad_w[(p_x + i, j)]);
            }
        }
        if self.unconstrained_psi {
            let psi = params.psi_joint();
            for i in 0..(p_x + p_y) {
                out.push(g[(i, i)] * psi[i]);
            }
        } else {
            // ∂psi_i/∂ log c = −2 psi_i
            let psi = params.psi_joint();
            let mut g_logc = 0.0;
            for i in 0..(p_x + p_y) {
                g_logc += g[(i, i)] * (-2.0 * psi[i]);
            }
            out.push(g_logc);
        }
        DVector::from_vec(out)
    }
}

struct Objective<'a> {
    data: &'a Dataset,
    layout: ThetaLayout,
    ridge: f64,
}

impl Objective<'_> {
    /// Negative log-likelihood, `None` where the parameter map or the
    /// likelihood is undefined (the line search treats that as a rejected
    /// step).
    fn value(&self, theta: &DVector<f64>) -> Option<f64> {
        let params = self.layout.unpack(theta).ok()?;
        let sigma = params.joint_covariance();
        let mu = params.mu_joint();
        let evals = pattern_evals(self.data, sigma.cov(), &mu, self.ridge, false).ok()?;
        let ll: f64 = evals.iter().map(|e| e.loglik).sum();
        ll.is_finite().then_some(-ll)
    }

    /// Negative log-likelihood with its gradient.
    fn value_grad(&self, theta: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let params = self.layout.unpack(theta).ok()?;
        let sigma = params.joint_covariance();
        let mu = params.mu_joint();
        let dense = dense_gradient(self.data, sigma.cov(), &mu, self.ridge).ok()?;
        if !dense.loglik.is_finite() {
            return None;
        }
        let grad = self.layout.chain(&params, &dense);
        if grad.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((-dense.loglik, -grad))
    }
}

/// Limited-memory BFGS history with two-loop recursion.
struct LbfgsHistory {
    capacity: usize,
    s: VecDeque<DVector<f64>>,
    y: VecDeque<DVector<f64>>,
    rho: VecDeque<f64>,
}

impl LbfgsHistory {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            s: VecDeque::new(),
            y: VecDeque::new(),
            rho: VecDeque::new(),
        }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        let sy = s.dot(&y);
        // skip updates that would break positive curvature
        if sy <= 1e-10 * s.norm() * y.norm() {
            return;
        }
        if self.s.len() == self.capacity {
            self.s.pop_front();
            self.y.pop_front();
            self.rho.pop_front();
        }
        self.rho.push_back(1.0 / sy);
        self.s.push_back(s);
        self.y.push_back(y);
    }

    /// Approximates `H⁻¹ g`; with empty history this is `g` itself.
    fn apply(&self, g: &DVector<f64>) -> DVector<f64> {
        let m = self.s.len();
        let mut q = g.clone();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = self.rho[i] * self.s[i].dot(&q);
            q.axpy(-alpha[i], &self.y[i], 1.0);
        }
        if m > 0 {
            let last = m - 1;
            let gamma = self.s[last].dot(&self.y[last]) / self.y[last].norm_squared();
            q *= gamma;
        }
        for i in 0..m {
            let beta = self.rho[i] * self.y[i].dot(&q);
            q.axpy(alpha[i] - beta, &self.s[i], 1.0);
        }
        q
    }
}

struct RestartOutcome {
    theta: DVector<f64>,
    neg_loglik: f64,
    iterations: usize,
    converged: bool,
    psi_floor: Vec<(f64, f64)>,
    abandoned: Option<String>,
}

/// Quasi-Newton descent on the negative log-likelihood from one start.
fn optimize_restart(
    objective: &Objective,
    theta0: DVector<f64>,
    config: &FitConfig,
) -> RestartOutcome {
    let abandoned = |reason: String| RestartOutcome {
        theta: theta0.clone(),
        neg_loglik: f64::INFINITY,
        iterations: 0,
        converged: false,
        psi_floor: Vec::new(),
        abandoned: Some(reason),
    };
    let mut theta = theta0.clone();
    let (mut f, mut g) = match objective.value_grad(&theta) {
        Some(fg) => fg,
        None => return abandoned("objective undefined at the starting point".into()),
    };
    let mut history = LbfgsHistory::new(10);
    let mut stall_count = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut psi_floor = Vec::new();
    let record_floor = |theta: &DVector<f64>, out: &mut Vec<(f64, f64)>| {
        if !config.track_psi_floor {
            return;
        }
        if let Ok(params) = objective.layout.unpack(theta) {
            let psi = params.psi_joint();
            let min_psi = psi.iter().fold(f64::INFINITY, |a, &v| a.min(v));
            let bound = if config.unconstrained_psi {
                f64::NEG_INFINITY
            } else {
                let w = params.w_joint();
                let c = params.constraint_level();
                let min_row = (0..w.nrows())
                    .map(|i| w.row(i).norm_squared())
                    .fold(f64::INFINITY, f64::min);
                min_row / (c * c)
            };
            out.push((min_psi, bound));
        }
    };
    record_floor(&theta, &mut psi_floor);

    for _ in 0..config.max_iters {
        let gnorm = g.amax();
        if gnorm < 1e-9 * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        let mut direction = -history.apply(&g);
        let mut slope = direction.dot(&g);
        if slope >= 0.0 {
            history.clear();
            direction = -g.clone();
            slope = direction.dot(&g);
        }

        // Armijo backtracking
        let mut step = 1.0f64;
        let mut accepted: Option<(DVector<f64>, f64)> = None;
        for _ in 0..60 {
            let candidate = &theta + &direction * step;
            if let Some(f_new) = objective.value(&candidate) {
                if f_new <= f + 1e-4 * step * slope {
                    accepted = Some((candidate, f_new));
                    break;
                }
            }
            step *= 0.5;
        }
        let (theta_new, f_new) = match accepted {
            Some(a) => a,
            None => {
                // no admissible step along this direction; one retry along
                // the raw gradient before giving up
                if history.s.is_empty() {
                    break;
                }
                history.clear();
                continue;
            }
        };
        let (f_chk, g_new) = match objective.value_grad(&theta_new) {
            Some(fg) => fg,
            None => break,
        };
        history.push(&theta_new - &theta, &g_new - &g);
        theta = theta_new;
        let f_prev = f;
        f = f_chk.min(f_new);
        g = g_new;
        iterations += 1;
        record_floor(&theta, &mut psi_floor);

        if (f_prev - f).abs() / (1.0 + f.abs()) < config.rel_tol {
            stall_count += 1;
            if stall_count >= 3 {
                converged = true;
                break;
            }
        } else {
            stall_count = 0;
        }
    }

    RestartOutcome {
        theta,
        neg_loglik: f,
        iterations,
        converged,
        psi_floor,
        abandoned: None,
    }
}

/// Deterministic stream splitting for seeds.
pub(crate) fn child_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Empirical first and second moments used to seed the optimizer; reusable
/// across fits on the same data (grid cells share one).
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl EmpiricalMoments {
    pub fn from_data(data: &Dataset) -> Result<Self> {
        let (mean, cov) = data.empirical_moments()?;
        Ok(Self { mean, cov })
    }
}

/// Deterministic, moment-based starting point: the objective-block
/// covariance eigenstructure seeds the shared loadings, cross-covariance
/// regression transfers them to the input block, the input residual seeds
/// the specific loadings, and `c` starts at 1.
pub fn initialize(data: &Dataset, dims: LatentDims, seed: u64) -> Result<PlsParams> {
    let moments = EmpiricalMoments::from_data(data)?;
    initialize_from_moments(&moments, data, dims, seed)
}

fn initialize_from_moments(
    moments: &EmpiricalMoments,
    data: &Dataset,
    dims: LatentDims,
    seed: u64,
) -> Result<PlsParams> {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_distr::StandardNormal;

    let needed = dims.total() + 1;
    if data.n() < needed {
        return Err(PplsError::InsufficientData {
            needed,
            got: data.n(),
        });
    }
    let (p_x, p_y) = (data.p_x(), data.p_y());
    let (p_u, p_v) = (dims.p_u(), dims.p_v());
    let mean = &moments.mean;
    let cov = &moments.cov;
    let scale = (cov.diagonal().sum() / (p_x + p_y) as f64).sqrt().max(1e-6);

    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut noise = |s: f64| -> f64 { s * rng.sample::<f64, _>(StandardNormal) };

    // objective block first
    let cov_yy = cov.view((p_x, p_x), (p_y, p_y)).into_owned();
    let (eigs_y, vecs_y) = crate::canonical::eigen_sorted_desc(&cov_yy);
    let floor_y = (cov_yy.trace() / p_y as f64).max(1e-12);
    let mut w_yu = DMatrix::zeros(p_y, p_u);
    for j in 0..p_u {
        if j < p_y {
            let strength = (eigs_y[j].max(0.05 * floor_y) * 0.6).sqrt();
            w_yu.column_mut(j)
                .copy_from(&(vecs_y.column(j) * strength));
        } else {
            // beyond the output rank: small random seed column
            for i in 0..p_y {
                w_yu[(i, j)] = noise(0.1 * scale);
            }
        }
    }

    // transfer to the input block by cross-covariance regression
    let cov_xy = cov.view((0, p_x), (p_x, p_y)).into_owned();
    let mut gram = w_yu.transpose() * &w_yu;
    for j in 0..p_u {
        gram[(j, j)] += 1e-10 * floor_y;
    }
    let w_xu = &cov_xy
        * &w_yu
        * gram
            .try_inverse()
            .ok_or_else(|| PplsError::RankDeficient {
                context: "initialization: shared-loading Gram matrix".into(),
            })?;

    // input-specific block from the residual input covariance
    let cov_xx = cov.view((0, 0), (p_x, p_x)).into_owned();
    let residual = &cov_xx - &w_xu * w_xu.transpose();
    let (eigs_x, vecs_x) = crate::canonical::eigen_sorted_desc(&residual);
    let floor_x = (cov_xx.trace() / p_x as f64).max(1e-12);
    let mut w_xv = DMatrix::zeros(p_x, p_v);
    for j in 0..p_v {
        if j < p_x {
            let strength = (eigs_x[j].max(0.05 * floor_x) * 0.6).sqrt();
            w_xv.column_mut(j)
                .copy_from(&(vecs_x.column(j) * strength));
        } else {
            for i in 0..p_x {
                w_xv[(i, j)] = noise(0.1 * scale);
            }
        }
    }

    // deterministic jitter keeps every loading row away from exact zero
    let mut w_xu = w_xu;
    for v in w_xu.iter_mut() {
        *v += noise(1e-3 * scale);
    }
    for v in w_xv.iter_mut() {
        *v += noise(1e-3 * scale);
    }
    for v in w_yu.iter_mut() {
        *v += noise(1e-3 * scale);
    }

    enforce_constraint(
        mean.rows(0, p_x).into_owned(),
        mean.rows(p_x, p_y).into_owned(),
        w_xu,
        w_xv,
        w_yu,
        1.0,
    )
}

/// Multiplicative perturbation of a starting point for restarts beyond the
/// first.
fn perturb_start(params: &PlsParams, seed: u64) -> Result<PlsParams> {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut kick = |m: &DMatrix<f64>| -> DMatrix<f64> {
        m.map(|v| v * (1.0 + 0.4 * rng.sample::<f64, _>(StandardNormal)))
    };
    let w_xu = kick(params.w_xu());
    let w_xv = kick(params.w_xv());
    let w_yu = kick(params.w_yu());
    let c = params.constraint_level() * (0.25 * rng.sample::<f64, _>(StandardNormal)).exp();
    enforce_constraint(
        params.mu_x().clone(),
        params.mu_y().clone(),
        w_xu,
        w_xv,
        w_yu,
        c,
    )
}

/// Maximum-likelihood fit with restarts; see the module docs for the
/// parametrization. Deterministic given `config.seed`, regardless of how
/// restarts are scheduled across threads.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    let moments = EmpiricalMoments::from_data(data)?;
    fit_with_moments(data, config, &moments)
}

/// [`fit`] with precomputed empirical moments, so grid searches pay the
/// moment pass once.
pub fn fit_with_moments(
    data: &Dataset,
    config: &FitConfig,
    moments: &EmpiricalMoments,
) -> Result<FitResult> {
    config.validate()?;
    let dims = config.dims;
    let identifiability = check_identifiability(data.p_x(), data.p_y(), dims);
    let identifiable = identifiability.identifiable;
    if !identifiable && !config.allow_nonidentifiable {
        return identifiability.into_result().map(|_| unreachable!());
    }

    let base = initialize_from_moments(moments, data, dims, child_seed(config.seed, 0))?;
    let layout = ThetaLayout {
        p_x: data.p_x(),
        p_y: data.p_y(),
        p_u: dims.p_u(),
        p_v: dims.p_v(),
        unconstrained_psi: config.unconstrained_psi,
    };
    let objective = Objective {
        data,
        layout,
        ridge: config.ridge,
    };

    let starts: Vec<Result<DVector<f64>>> = (0..config.n_restarts)
        .map(|i| {
            let params = if i == 0 {
                base.clone()
            } else {
                perturb_start(&base, child_seed(config.seed, i as u64))?
            };
            let c = params.constraint_level();
            Ok(layout.pack(&params, c))
        })
        .collect();

    let outcomes: Vec<RestartOutcome> = starts
        .into_par_iter()
        .map(|start| match start {
            Ok(theta0) => optimize_restart(&objective, theta0, config),
            Err(e) => RestartOutcome {
                theta: DVector::zeros(layout.len()),
                neg_loglik: f64::INFINITY,
                iterations: 0,
                converged: false,
                psi_floor: Vec::new(),
                abandoned: Some(e.to_string()),
            },
        })
        .collect();

    let restart_logliks: Vec<f64> = outcomes.iter().map(|o| -o.neg_loglik).collect();
    let best = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| o.abandoned.is_none() && o.neg_loglik.is_finite())
        .min_by(|(ia, a), (ib, b)| a.neg_loglik.total_cmp(&b.neg_loglik).then(ia.cmp(ib)))
        .map(|(i, _)| i);
    let Some(best_idx) = best else {
        let traces: Vec<String> = outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| {
                format!(
                    "restart {i}: {}",
                    o.abandoned.as_deref().unwrap_or("non-finite optimum")
                )
            })
            .collect();
        return Err(PplsError::FitFailed {
            reason: format!("all restarts diverged: {}", traces.join("; ")),
        });
    };
    let winner = &outcomes[best_idx];
    let params_raw = layout.unpack(&winner.theta)?;

    // reported log-likelihood is ridge-free even when the optimizer used one
    let loglik = log_likelihood(&params_raw, data)?;
    let n_params = count_free_params(data.p_x(), data.p_y(), dims);
    let bic = -2.0 * loglik + n_params as f64 * (data.n() as f64).ln();

    let canonical = if identifiable && !config.unconstrained_psi {
        Some(canonicalize(&params_raw)?)
    } else {
        None
    };
    let params = canonical
        .as_ref()
        .map(|c| c.params.clone())
        .unwrap_or(params_raw);

    Ok(FitResult {
        params,
        canonical,
        identifiable,
        loglik,
        bic,
        n_params,
        iterations: winner.iterations,
        converged: winner.converged,
        restart_logliks,
        psi_floor_trace: winner.psi_floor.clone(),
    })
}
