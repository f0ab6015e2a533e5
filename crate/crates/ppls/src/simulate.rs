//! Generative sampling and the sampling-distribution study harness.
//!
//! The study repeatedly samples from a canonical truth, refits, and
//! canonicalizes, producing per-parameter bias, spread, and shape summaries
//! across sample sizes. Because every replicate is canonicalized, parameter
//! histograms concentrate around the truth instead of splitting across
//! sign or ordering relabelings.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::canonical::{check_identifiability, CanonicalForm};
use crate::dataset::Dataset;
use crate::error::{PplsError, Result};
use crate::estimation::{child_seed, fit, FitConfig};
use crate::model::PlsParams;

/// Draws `n` i.i.d. rows from the generative model (latent draws pushed
/// through the loadings plus per-feature noise), as a complete dataset.
/// Deterministic given `seed`.
pub fn sample(params: &PlsParams, n: usize, seed: u64) -> Result<Dataset> {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_distr::StandardNormal;

    let (p_x, p_y) = (params.p_x(), params.p_y());
    let dims = params.dims();
    let total = dims.total();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, p_x);
    let mut y = DMatrix::zeros(n, p_y);
    let sqrt_psi_x: Vec<f64> = params.psi_x().iter().map(|p| p.sqrt()).collect();
    let sqrt_psi_y: Vec<f64> = params.psi_y().iter().map(|p| p.sqrt()).collect();
    let w_x = params.w_x();
    let mut z = DVector::zeros(total);
    for r in 0..n {
        for k in 0..total {
            z[k] = rng.sample::<f64, _>(StandardNormal);
        }
        let x_mean = params.mu_x() + &w_x * &z;
        for j in 0..p_x {
            x[(r, j)] = x_mean[j] + sqrt_psi_x[j] * rng.sample::<f64, _>(StandardNormal);
        }
        let u = z.rows(0, dims.p_u());
        let y_mean = params.mu_y() + params.w_yu() * u;
        for j in 0..p_y {
            y[(r, j)] = y_mean[j] + sqrt_psi_y[j] * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Dataset::complete(x, y)
}

/// Masks a fraction of the entries uniformly at random: exactly
/// `floor(fraction · n · (p_x + p_y))` cells are chosen without replacement
/// among all cells; already-missing cells stay missing, so the realized
/// newly-masked count can be lower on incomplete input. Rows left with no
/// observed entry are dropped by dataset construction.
pub fn inject_missing(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    use rand::Rng;
    use rand::SeedableRng;

    if !(0.0..1.0).contains(&fraction) {
        return Err(PplsError::param("fraction", "must lie in [0, 1)"));
    }
    let (n, p_x, p_y) = (data.n(), data.p_x(), data.p_y());
    let d = p_x + p_y;
    let total = n * d;
    let k = (fraction * total as f64).floor() as usize;
    let mut cells: Vec<usize> = (0..total).collect();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    // partial Fisher-Yates: the first k entries become the masked cells
    for i in 0..k.min(total.saturating_sub(1)) {
        let j = rng.random_range(i..total);
        cells.swap(i, j);
    }
    let mut x_present = data.x_present().clone();
    let mut y_present = data.y_present().clone();
    for &cell in &cells[..k] {
        let (r, c) = (cell / d, cell % d);
        if c < p_x {
            x_present[(r, c)] = false;
        } else {
            y_present[(r, c - p_x)] = false;
        }
    }
    Dataset::new(
        data.x().clone(),
        x_present,
        data.y().clone(),
        y_present,
        None,
    )
}

/// Flat view of a canonical parameter set with stable names, used as the
/// replicate record of the sampling study.
pub fn parameter_vector(canon: &CanonicalForm) -> (Vec<String>, DVector<f64>) {
    let p = &canon.params;
    let mut names = Vec::new();
    let mut values = Vec::new();
    let mut push_vec = |label: &str, v: &DVector<f64>, names: &mut Vec<String>| {
        for (i, &val) in v.iter().enumerate() {
            names.push(format!("{label}[{i}]"));
            values.push(val);
        }
    };
    push_vec("mu_x", p.mu_x(), &mut names);
    push_vec("mu_y", p.mu_y(), &mut names);
    let mut push_mat = |label: &str, m: &DMatrix<f64>, names: &mut Vec<String>| {
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                names.push(format!("{label}[{i},{j}]"));
                values.push(m[(i, j)]);
            }
        }
    };
    push_mat("w_xu", p.w_xu(), &mut names);
    push_mat("w_xv", p.w_xv(), &mut names);
    push_mat("w_yu", p.w_yu(), &mut names);
    let mut push_vec = |label: &str, v: &DVector<f64>, names: &mut Vec<String>| {
        for (i, &val) in v.iter().enumerate() {
            names.push(format!("{label}[{i}]"));
            values.push(val);
        }
    };
    push_vec("psi_x", p.psi_x(), &mut names);
    push_vec("psi_y", p.psi_y(), &mut names);
    names.push("c".into());
    values.push(canon.constraint.c());
    (names, DVector::from_vec(values))
}

/// Per-parameter sampling-distribution summary across sizes.
#[derive(Debug, Clone, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub truth: f64,
    /// Mean estimate minus truth, one entry per sample size.
    pub bias: Vec<f64>,
    /// Sample standard deviation of the estimates, per size.
    pub sd: Vec<f64>,
    /// Standardized third central moment, per size.
    pub skewness: Vec<f64>,
    /// Standardized fourth central moment minus 3, per size.
    pub excess_kurtosis: Vec<f64>,
    /// `sd[i+1] / sd[i]` per consecutive size step.
    pub sd_ratios: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudySummary {
    pub parameters: Vec<ParameterSummary>,
}

/// Replicated sample-fit-canonicalize experiment around a known truth.
#[derive(Debug, Clone)]
pub struct SamplingStudy {
    pub truth: CanonicalForm,
    pub sample_sizes: Vec<usize>,
    pub n_replicates: usize,
    pub seed: u64,
    pub parameter_names: Vec<String>,
    /// `estimates[size_idx][replicate]`; `None` marks a failed replicate.
    pub estimates: Vec<Vec<Option<DVector<f64>>>>,
    /// Count of failed replicates across all sizes.
    pub n_failures: usize,
    pub summary: StudySummary,
}

/// Samples, fits, and canonicalizes `n_replicates` times per size.
/// Replicate seeds derive from (master seed, size index, replicate index),
/// so the study is reproducible bit-identically regardless of scheduling.
/// Fit failures are excluded from the summaries and counted.
pub fn run_sampling_study(
    truth: &CanonicalForm,
    sizes: &[usize],
    n_replicates: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<SamplingStudy> {
    if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
        return Err(PplsError::param("sizes", "must be nonempty and positive"));
    }
    if n_replicates == 0 {
        return Err(PplsError::param("n_replicates", "must be positive"));
    }
    let dims = truth.params.dims();
    if config.dims != dims {
        return Err(PplsError::param(
            "config.dims",
            "must match the truth's latent dimensions",
        ));
    }
    check_identifiability(truth.params.p_x(), truth.params.p_y(), dims).into_result()?;
    let (names, truth_vec) = parameter_vector(truth);

    let jobs: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|s| (0..n_replicates).map(move |r| (s, r)))
        .collect();
    let results: Vec<Option<DVector<f64>>> = jobs
        .par_iter()
        .map(|&(size_idx, rep)| {
            let rep_seed = child_seed(child_seed(seed, size_idx as u64), rep as u64);
            let data = sample(&truth.params, sizes[size_idx], rep_seed).ok()?;
            let mut cfg = config.clone();
            cfg.seed = child_seed(rep_seed, 1);
            let result = fit(&data, &cfg).ok()?;
            let canon = result.canonical?;
            Some(parameter_vector(&canon).1)
        })
        .collect();

    let mut estimates: Vec<Vec<Option<DVector<f64>>>> =
        vec![Vec::with_capacity(n_replicates); sizes.len()];
    for (&(size_idx, _), est) in jobs.iter().zip(results) {
        estimates[size_idx].push(est);
    }
    let n_failures = estimates
        .iter()
        .flatten()
        .filter(|e| e.is_none())
        .count();

    let summary = summarize(&names, &truth_vec, &estimates);
    Ok(SamplingStudy {
        truth: truth.clone(),
        sample_sizes: sizes.to_vec(),
        n_replicates,
        seed,
        parameter_names: names,
        estimates,
        n_failures,
        summary,
    })
}

fn summarize(
    names: &[String],
    truth: &DVector<f64>,
    estimates: &[Vec<Option<DVector<f64>>>],
) -> StudySummary {
    let n_params = truth.len();
    let n_sizes = estimates.len();
    let mut parameters = Vec::with_capacity(n_params);
    for j in 0..n_params {
        let mut bias = Vec::with_capacity(n_sizes);
        let mut sd = Vec::with_capacity(n_sizes);
        let mut skewness = Vec::with_capacity(n_sizes);
        let mut excess_kurtosis = Vec::with_capacity(n_sizes);
        for per_size in estimates {
            let vals: Vec<f64> = per_size
                .iter()
                .filter_map(|e| e.as_ref().map(|v| v[j]))
                .collect();
            let (b, s, sk, ku) = moments(&vals, truth[j]);
            bias.push(b);
            sd.push(s);
            skewness.push(sk);
            excess_kurtosis.push(ku);
        }
        let sd_ratios = sd.windows(2).map(|w| w[1] / w[0]).collect();
        parameters.push(ParameterSummary {
            name: names[j].clone(),
            truth: truth[j],
            bias,
            sd,
            skewness,
            excess_kurtosis,
            sd_ratios,
        });
    }
    StudySummary { parameters }
}

/// (bias, sample sd, skewness, excess kurtosis) of one parameter's
/// replicate estimates; shape statistics are 0 when undefined.
fn moments(vals: &[f64], truth: f64) -> (f64, f64, f64, f64) {
    let n = vals.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0.0, 0.0);
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    let bias = mean - truth;
    if n == 1 {
        return (bias, 0.0, 0.0, 0.0);
    }
    let m2 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = (m2 * n as f64 / (n - 1) as f64).sqrt();
    if m2 <= 0.0 {
        return (bias, 0.0, 0.0, 0.0);
    }
    let m3 = vals.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n as f64;
    let m4 = vals.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
    (bias, sd, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Quotes a CSV field when it contains a delimiter, quote, or line break,
/// doubling any embedded quotes. Matrix parameter names such as `w_xu[0,1]`
/// carry commas and would otherwise split into extra columns.
fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_owned()
    }
}

impl SamplingStudy {
    /// Raw estimates as CSV: `size,replicate,parameter,value`, one row per
    /// successful replicate and parameter, floats at 17 significant digits.
    pub fn estimates_csv(&self) -> String {
        let mut out = String::from("size,replicate,parameter,value\n");
        for (size_idx, per_size) in self.estimates.iter().enumerate() {
            let size = self.sample_sizes[size_idx];
            for (rep, est) in per_size.iter().enumerate() {
                let Some(vec) = est else { continue };
                for (name, value) in self.parameter_names.iter().zip(vec.iter()) {
                    let value = crate::persistence::fmt_float(*value);
                    let name = csv_quote(name);
                    out.push_str(&format!("{size},{rep},{name},{value}\n"));
                }
            }
        }
        out
    }

    /// Summary (sizes, failure count, per-parameter statistics) as JSON.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Export<'a> {
            sample_sizes: &'a [usize],
            n_replicates: usize,
            n_failures: usize,
            parameters: &'a [ParameterSummary],
        }
        crate::persistence::json_string(&Export {
            sample_sizes: &self.sample_sizes,
            n_replicates: self.n_replicates,
            n_failures: self.n_failures,
            parameters: &self.summary.parameters,
        })
    }
}
