//! Interpretation and model-quality quantities: contribution ratios of the
//! latent axes, coefficient of determination, and BIC grids over latent
//! dimension pairs.

use nalgebra::DMatrix;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::canonical::CanonicalForm;
use crate::dataset::Dataset;
use crate::error::{PplsError, Result};
use crate::estimation::{
    count_free_params, fit_with_moments, EmpiricalMoments, FitConfig, FitResult,
};
use crate::model::LatentDims;

/// Which latent subspace a contribution report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subspace {
    /// Axes loading on both blocks, ranked by explained noise-scaled
    /// objective-variable variance.
    Shared,
    /// Input-specific axes, ranked by explained noise-scaled explanatory
    /// variance.
    InputSpecific,
}

/// Per-axis explained variance of one latent subspace.
#[derive(Debug, Clone)]
pub struct ContributionReport {
    /// Descending squared scale of each axis on the noise-scaled loadings.
    pub omega2: DVector<f64>,
    /// `omega2` normalized to sum to 1.
    pub p_ratio: DVector<f64>,
    /// Prefix sums of `p_ratio`, ending at 1.
    pub c_ratio: DVector<f64>,
}

/// Contribution ratios of a canonical form's latent axes. The squared axis
/// scales come from the canonicalization eigenvalues, lifted from the
/// correlation scale to the noise scale by `1 + c²`.
pub fn contribution_ratios(canon: &CanonicalForm, subspace: Subspace) -> Result<ContributionReport> {
    let c = canon.constraint.c();
    let lift = 1.0 + c * c;
    let hat = match subspace {
        Subspace::Shared => &canon.omega2_yu,
        Subspace::InputSpecific => &canon.omega2_xv,
    };
    let omega2 = hat * lift;
    let total: f64 = omega2.sum();
    if !(total > 0.0) {
        return Err(PplsError::NoSignal {
            context: format!(
                "{subspace:?} subspace has no explained variance (all omega2 zero)"
            ),
        });
    }
    let p_ratio = &omega2 / total;
    let mut acc = 0.0;
    let c_ratio = DVector::from_iterator(
        p_ratio.len(),
        p_ratio.iter().map(|p| {
            acc += p;
            acc
        }),
    );
    Ok(ContributionReport {
        omega2,
        p_ratio,
        c_ratio,
    })
}

/// Coefficient of determination per objective column over observed rows:
/// `1 − Σ(y−ŷ)² / Σ(y−ȳ)²`. Columns with no variation among observed
/// values have no defined value and are reported as `None`. Every column
/// must have at least two observed values.
pub fn r_squared(
    y_true: &DMatrix<f64>,
    y_present: &DMatrix<bool>,
    y_pred: &DMatrix<f64>,
) -> Result<Vec<Option<f64>>> {
    if y_true.shape() != y_pred.shape() || y_true.shape() != y_present.shape() {
        return Err(PplsError::DimensionMismatch {
            what: "prediction/mask shape",
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    let (n, p) = y_true.shape();
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let rows: Vec<usize> = (0..n).filter(|&i| y_present[(i, j)]).collect();
        if rows.len() < 2 {
            return Err(PplsError::InsufficientData {
                needed: 2,
                got: rows.len(),
            });
        }
        let mean: f64 = rows.iter().map(|&i| y_true[(i, j)]).sum::<f64>() / rows.len() as f64;
        let sst: f64 = rows.iter().map(|&i| (y_true[(i, j)] - mean).powi(2)).sum();
        let sse: f64 = rows
            .iter()
            .map(|&i| (y_true[(i, j)] - y_pred[(i, j)]).powi(2))
            .sum();
        out.push((sst > 0.0).then(|| 1.0 - sse / sst));
    }
    Ok(out)
}

/// One latent-dimension combination in a BIC sweep.
#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub p_u: usize,
    pub p_v: usize,
    /// `NaN` when the cell's fit failed.
    pub loglik: f64,
    pub n_params: usize,
    pub bic: f64,
    pub identifiable: bool,
    pub converged: bool,
    /// Failure message when the fit did not produce an estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GridCell {
    pub fn dims(&self) -> LatentDims {
        LatentDims::new(self.p_u, self.p_v).expect("grid cells hold valid dims")
    }
}

/// A completed sweep: cells in input order, the retained fit per cell, and
/// the index of the BIC-minimizing identifiable converged cell.
#[derive(Debug)]
pub struct BicGrid {
    pub cells: Vec<GridCell>,
    /// Fit results aligned with `cells`; `None` where the fit failed.
    pub fits: Vec<Option<FitResult>>,
    /// Index of the selected cell, if any cell is eligible.
    pub best: Option<usize>,
}

/// Fits every (p_u, p_v) combination. Non-identifiable cells are fitted for
/// the likelihood surface but flagged and never selected; cell-level fit
/// failures are recorded in their cell. All cells share one moment pass;
/// `config.dims` is ignored in favour of each cell's dimensions.
pub fn bic_grid(
    data: &Dataset,
    p_u_values: &[usize],
    p_v_values: &[usize],
    config: &FitConfig,
) -> Result<BicGrid> {
    if p_u_values.is_empty() || p_v_values.is_empty() {
        return Err(PplsError::param("grid ranges", "must be nonempty"));
    }
    let mut combos = Vec::new();
    for &p_u in p_u_values {
        for &p_v in p_v_values {
            combos.push(LatentDims::new(p_u, p_v)?);
        }
    }
    let moments = EmpiricalMoments::from_data(data)?;

    let results: Vec<(GridCell, Option<FitResult>)> = combos
        .par_iter()
        .enumerate()
        .map(|(idx, &dims)| {
            let mut cell_config = config.clone();
            cell_config.dims = dims;
            cell_config.allow_nonidentifiable = true;
            cell_config.seed = crate::estimation::child_seed(config.seed, idx as u64);
            let n_params = count_free_params(data.p_x(), data.p_y(), dims);
            match fit_with_moments(data, &cell_config, &moments) {
                Ok(result) => (
                    GridCell {
                        p_u: dims.p_u(),
                        p_v: dims.p_v(),
                        loglik: result.loglik,
                        n_params: result.n_params,
                        bic: result.bic,
                        identifiable: result.identifiable,
                        converged: result.converged,
                        error: None,
                    },
                    Some(result),
                ),
                Err(e) => (
                    GridCell {
                        p_u: dims.p_u(),
                        p_v: dims.p_v(),
                        loglik: f64::NAN,
                        n_params,
                        bic: f64::NAN,
                        identifiable: crate::canonical::check_identifiability(
                            data.p_x(),
                            data.p_y(),
                            dims,
                        )
                        .identifiable,
                        converged: false,
                        error: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();

    let (cells, fits): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let best = argmin_bic(&cells);
    Ok(BicGrid { cells, fits, best })
}

/// BIC argmin over identifiable, converged, finite cells. Ties within 1e-6
/// resolve to the smaller total dimension, then the smaller shared
/// dimension, then input order.
pub(crate) fn argmin_bic(cells: &[GridCell]) -> Option<usize> {
    let eligible: Vec<usize> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.identifiable && c.converged && c.bic.is_finite())
        .map(|(i, _)| i)
        .collect();
    let min_bic = eligible
        .iter()
        .map(|&i| cells[i].bic)
        .fold(f64::INFINITY, f64::min);
    eligible
        .into_iter()
        .filter(|&i| cells[i].bic <= min_bic + 1e-6)
        .min_by_key(|&i| (cells[i].p_u + cells[i].p_v, cells[i].p_u, i))
}

impl BicGrid {
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.best.map(|i| &self.cells[i])
    }

    pub fn best_fit(&self) -> Option<&FitResult> {
        self.best.and_then(|i| self.fits[i].as_ref())
    }

    /// `p_u,p_v,loglik,n_params,bic,identifiable,converged` per cell, with
    /// floats at 17 significant digits.
    pub fn to_csv(&self) -> String {
        use crate::persistence::fmt_float;
        let mut out = String::from("p_u,p_v,loglik,n_params,bic,identifiable,converged\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.p_u,
                c.p_v,
                fmt_float(c.loglik),
                c.n_params,
                fmt_float(c.bic),
                c.identifiable,
                c.converged
            ));
        }
        out
    }

    /// Cells plus the selected dimensions as JSON (failed cells carry null
    /// statistics and their error message).
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Export<'a> {
            cells: &'a [GridCell],
            best: Option<&'a GridCell>,
        }
        crate::persistence::json_string(&Export {
            cells: &self.cells,
            best: self.best_cell(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::{canonicalize, enforce_constraint, NormConstraint};
    use crate::model::PlsParams;
    use crate::simulate::sample;
    use crate::testutil::{rng, standard_matrix, standard_vector};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn toy_canonical(omega2_yu: Vec<f64>, omega2_xv: Vec<f64>) -> CanonicalForm {
        let p_u = omega2_yu.len().max(1);
        let p_v = omega2_xv.len();
        let mut r = rng(1);
        let params = enforce_constraint(
            standard_vector(&mut r, 3),
            standard_vector(&mut r, 2),
            standard_matrix(&mut r, 3, p_u),
            standard_matrix(&mut r, 3, p_v),
            standard_matrix(&mut r, 2, p_u),
            1.0,
        )
        .unwrap();
        CanonicalForm {
            params,
            omega2_yu: DVector::from_vec(omega2_yu),
            omega2_xv: DVector::from_vec(omega2_xv),
            constraint: NormConstraint::from_c(1.0).unwrap(),
            degenerate: false,
        }
    }

    #[test]
    fn single_axis_contribution_is_total() {
        let canon = toy_canonical(vec![2.7], vec![]);
        let report = contribution_ratios(&canon, Subspace::Shared).unwrap();
        assert_eq!(report.p_ratio.len(), 1);
        assert_relative_eq!(report.p_ratio[0], 1.0);
        assert_relative_eq!(report.c_ratio[0], 1.0);
    }

    #[test]
    fn four_one_split_gives_eighty_twenty() {
        let canon = toy_canonical(vec![4.0, 1.0], vec![]);
        let report = contribution_ratios(&canon, Subspace::Shared).unwrap();
        assert_relative_eq!(report.p_ratio[0], 0.8, epsilon = 1e-15);
        assert_relative_eq!(report.p_ratio[1], 0.2, epsilon = 1e-15);
        assert_relative_eq!(report.c_ratio[0], 0.8, epsilon = 1e-15);
        assert_relative_eq!(report.c_ratio[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_signal_is_an_error() {
        let canon = toy_canonical(vec![0.0, 0.0], vec![]);
        assert!(matches!(
            contribution_ratios(&canon, Subspace::Shared).unwrap_err(),
            PplsError::NoSignal { .. }
        ));
        // empty specific subspace has no signal either
        assert!(contribution_ratios(&canon, Subspace::InputSpecific).is_err());
    }

    /// Trace oracle: the reported omega2 sum equals the trace of the
    /// noise-scaled objective loading Gram matrix.
    #[test]
    fn omega2_sum_matches_scaled_gram_trace() {
        let mut r = rng(7);
        for _ in 0..25 {
            let params = enforce_constraint(
                standard_vector(&mut r, 4),
                standard_vector(&mut r, 3),
                standard_matrix(&mut r, 4, 2),
                standard_matrix(&mut r, 4, 2),
                standard_matrix(&mut r, 3, 2),
                0.5 + 2.0 * r.random::<f64>(),
            )
            .unwrap();
            let canon = canonicalize(&params).unwrap();
            let report = contribution_ratios(&canon, Subspace::Shared).unwrap();
            let psi_scaled = DMatrix::from_fn(3, 2, |i, j| {
                canon.params.w_yu()[(i, j)] / canon.params.psi_y()[i].sqrt()
            });
            let trace = (psi_scaled.transpose() * &psi_scaled).trace();
            assert_relative_eq!(report.omega2.sum(), trace, epsilon = 1e-10, max_relative = 1e-10);
            assert_relative_eq!(report.p_ratio.sum(), 1.0, epsilon = 1e-12);
            for w in report.c_ratio.as_slice().windows(2) {
                assert!(w[1] >= w[0] - 1e-15);
            }
            assert_relative_eq!(report.c_ratio[report.c_ratio.len() - 1], 1.0, epsilon = 1e-12);
        }
    }

    /// The omega2 total equals the variance of the noise-scaled objective
    /// signal under latent draws.
    #[test]
    fn omega2_total_matches_monte_carlo_signal_variance() {
        let mut r = rng(11);
        let params = enforce_constraint(
            standard_vector(&mut r, 3),
            standard_vector(&mut r, 2),
            standard_matrix(&mut r, 3, 2),
            standard_matrix(&mut r, 3, 1),
            standard_matrix(&mut r, 2, 2),
            1.2,
        )
        .unwrap();
        let canon = canonicalize(&params).unwrap();
        let report = contribution_ratios(&canon, Subspace::Shared).unwrap();
        let n = 1_000_000usize;
        use rand_distr::StandardNormal;
        let w_bar = DMatrix::from_fn(2, 2, |i, j| {
            canon.params.w_yu()[(i, j)] / canon.params.psi_y()[i].sqrt()
        });
        let mut sq = Vec::with_capacity(n);
        let mut u = DVector::zeros(2);
        for _ in 0..n {
            u[0] = r.sample::<f64, _>(StandardNormal);
            u[1] = r.sample::<f64, _>(StandardNormal);
            sq.push((&w_bar * &u).norm_squared());
        }
        let mean = sq.iter().sum::<f64>() / n as f64;
        let var = sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let total = report.omega2.sum();
        assert!(
            (mean - total).abs() < 3.0 * se,
            "monte carlo {mean} vs trace {total} (se {se})"
        );
    }

    #[test]
    fn r_squared_trivial_cases() {
        let y = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let mask = DMatrix::from_element(4, 1, true);
        let exact = r_squared(&y, &mask, &y.clone()).unwrap();
        assert_relative_eq!(exact[0].unwrap(), 1.0);

        let mean_pred = DMatrix::from_element(4, 1, 2.5);
        let zero = r_squared(&y, &mask, &mean_pred).unwrap();
        assert_relative_eq!(zero[0].unwrap(), 0.0, epsilon = 1e-15);

        // worse than the mean goes negative
        let bad = DMatrix::from_column_slice(4, 1, &[4.0, 3.0, 2.0, 1.0]);
        assert!(r_squared(&y, &mask, &bad).unwrap()[0].unwrap() < 0.0);
    }

    #[test]
    fn r_squared_masking_and_degeneracies() {
        let y = DMatrix::from_column_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 5.0, 5.0, 5.0]);
        let mut mask = DMatrix::from_element(4, 2, true);
        mask[(3, 0)] = false;
        let mut pred = y.clone();
        pred[(3, 0)] = 100.0; // ignored through the mask
        let out = r_squared(&y, &mask, &pred).unwrap();
        assert_relative_eq!(out[0].unwrap(), 1.0);
        assert!(out[1].is_none(), "constant column has undefined R²");

        let mut sparse = DMatrix::from_element(4, 2, false);
        sparse[(0, 0)] = true;
        sparse[(0, 1)] = true;
        sparse[(1, 1)] = true;
        assert!(matches!(
            r_squared(&y, &sparse, &pred).unwrap_err(),
            PplsError::InsufficientData { needed: 2, got: 1 }
        ));

        let small = DMatrix::zeros(3, 2);
        assert!(r_squared(&y, &mask, &small).is_err());
    }

    #[test]
    fn bic_increases_with_params_at_fixed_loglik() {
        let ll = -512.3;
        let n = 400f64;
        let bic = |k: usize| -2.0 * ll + k as f64 * n.ln();
        assert!(bic(10) < bic(11));
        assert!(bic(11) < bic(25));
    }

    fn stub_cell(p_u: usize, p_v: usize, bic: f64) -> GridCell {
        GridCell {
            p_u,
            p_v,
            loglik: -bic / 2.0,
            n_params: 0,
            bic,
            identifiable: true,
            converged: true,
            error: None,
        }
    }

    #[test]
    fn argmin_handles_ties_and_eligibility() {
        // tie within 1e-6 resolves to the smaller total, then smaller p_u
        let cells = vec![
            stub_cell(2, 2, 100.0),
            stub_cell(1, 2, 100.0 + 5e-7),
            stub_cell(2, 1, 100.0 + 2e-7),
        ];
        assert_eq!(argmin_bic(&cells), Some(1));

        let mut with_flags = cells.clone();
        with_flags[1].identifiable = false;
        with_flags[2].converged = false;
        assert_eq!(argmin_bic(&with_flags), Some(0));

        let mut all_bad = cells;
        for c in &mut all_bad {
            c.bic = f64::NAN;
            c.converged = false;
        }
        assert_eq!(argmin_bic(&all_bad), None);
    }

    fn grid_truth() -> PlsParams {
        enforce_constraint(
            DVector::zeros(3),
            DVector::zeros(2),
            DMatrix::from_column_slice(3, 1, &[1.0, 0.8, -0.6]),
            DMatrix::from_column_slice(3, 1, &[0.4, -0.9, 0.7]),
            DMatrix::from_column_slice(2, 1, &[0.9, 0.7]),
            1.4,
        )
        .unwrap()
    }

    #[test]
    fn single_cell_grid_returns_it() {
        let data = sample(&grid_truth(), 300, 3).unwrap();
        let config = FitConfig::new(LatentDims::new(1, 1).unwrap()).with_restarts(2);
        let grid = bic_grid(&data, &[1], &[1], &config).unwrap();
        assert_eq!(grid.cells.len(), 1);
        assert_eq!(grid.best, Some(0));
        assert!(grid.best_fit().is_some());
        let cell = grid.best_cell().unwrap();
        assert_relative_eq!(
            cell.bic,
            -2.0 * cell.loglik + cell.n_params as f64 * (data.n() as f64).ln(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn grid_recovers_truth_and_flags_nonidentifiable() {
        let data = sample(&grid_truth(), 2500, 17).unwrap();
        let config = FitConfig::new(LatentDims::new(1, 1).unwrap())
            .with_restarts(3)
            .with_seed(4);
        let grid = bic_grid(&data, &[1, 2, 3], &[0, 1, 2], &config).unwrap();
        assert_eq!(grid.cells.len(), 9);
        let best = grid.best_cell().unwrap();
        assert_eq!((best.p_u, best.p_v), (1, 1));
        // p_u = 3 > p_y = 2 cells must be flagged and never selected
        for cell in grid.cells.iter().filter(|c| c.p_u == 3) {
            assert!(!cell.identifiable);
        }

        let csv = grid.to_csv();
        assert!(csv.starts_with("p_u,p_v,loglik,n_params,bic,identifiable,converged\n"));
        assert_eq!(csv.lines().count(), 10);
        let json = grid.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["cells"].as_array().unwrap().len(), 9);
        assert_eq!(value["best"]["p_u"], 1);
    }

    #[test]
    fn grid_rejects_empty_ranges() {
        let data = sample(&grid_truth(), 50, 1).unwrap();
        let config = FitConfig::new(LatentDims::new(1, 1).unwrap());
        assert!(bic_grid(&data, &[], &[1], &config).is_err());
        assert!(bic_grid(&data, &[1], &[], &config).is_err());
        assert!(bic_grid(&data, &[0], &[1], &config).is_err());
    }
}
