//! Subcommand implementations: thin orchestration over the library.

use crate::ingest::{load_blocks, preprocess, to_dataset, Block, IngestReport, PrepOptions};
use crate::output::{csv_line, fmt_float, sibling, write_atomic};
use crate::{classify_compute, data_err, CliError, CliResult};
use crate::{BiplotArgs, FitArgs, OptimArgs, PredictArgs, ScoresArgs, SelectArgs, SimulateArgs};
use nalgebra::DVector;
use ppls::persistence::json_string;
use ppls::{
    bic_grid, contribution_ratios, from_json, sample, FitConfig, FitResult, LatentDims,
    StoredModel, Subspace,
};
use serde::Serialize;
use std::path::Path;

fn build_config(dims: LatentDims, optim: &OptimArgs) -> CliResult<FitConfig> {
    let mut cfg = FitConfig::new(dims);
    cfg.seed = optim.seed;
    if let Some(r) = optim.restarts {
        cfg.n_restarts = r;
    }
    if let Some(t) = optim.tol {
        cfg.rel_tol = t;
    }
    if let Some(m) = optim.max_iters {
        cfg.max_iters = m;
    }
    cfg.validate().map_err(classify_compute)?;
    Ok(cfg)
}

fn load_model(path: &Path) -> CliResult<StoredModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn model_json(result: &FitResult) -> CliResult<String> {
    match &result.canonical {
        Some(canon) => ppls::canonical_to_json(canon),
        None => ppls::to_json(&result.params),
    }
    .map_err(classify_compute)
}

fn require_y(y: Option<Block>) -> CliResult<Block> {
    y.ok_or_else(|| CliError::Usage("this command needs a y block: pass --y or --y-cols".into()))
}

fn check_width(block: &Block, expected: usize, what: &str) -> CliResult<()> {
    if block.width() != expected {
        return Err(CliError::Data(format!(
            "the model expects {expected} {what} columns, the data has {}",
            block.width()
        )));
    }
    Ok(())
}

/// Names of the latent axes, shared first: `u0..`, then `v0..`.
fn axis_names(dims: LatentDims) -> Vec<String> {
    (0..dims.p_u())
        .map(|j| format!("u{j}"))
        .chain((0..dims.p_v()).map(|j| format!("v{j}")))
        .collect()
}

#[derive(Serialize)]
struct FitReport<'a> {
    n_rows_used: usize,
    p_x: usize,
    p_y: usize,
    p_u: usize,
    p_v: usize,
    loglik: f64,
    bic: f64,
    n_params: usize,
    iterations: usize,
    converged: bool,
    identifiable: bool,
    restart_logliks: &'a [f64],
    /// Rows dropped by the dataset because every cell was missing.
    rows_dropped_all_missing: usize,
    ingest: &'a IngestReport,
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let (x_raw, y_raw) = load_blocks(&args.data)?;
    let opts = PrepOptions {
        binarize: args.prep.binarize,
        rate_min: args.prep.rate_min,
        log_y: args.prep.log_y,
        require_y: args.prep.require_y,
    };
    let (x, y, report) = preprocess(x_raw, y_raw, &opts)?;
    let y = require_y(y)?;
    println!("{}", report.describe(x.width(), y.width()));
    let data = to_dataset(&x, &y)?;

    let dims = LatentDims::new(args.pu, args.pv).map_err(classify_compute)?;
    let cfg = build_config(dims, &args.optim)?;
    let result = ppls::fit(&data, &cfg).map_err(classify_compute)?;

    write_atomic(&args.out, &model_json(&result)?)?;
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "report.json"));
    let fit_report = FitReport {
        n_rows_used: data.n(),
        p_x: x.width(),
        p_y: y.width(),
        p_u: dims.p_u(),
        p_v: dims.p_v(),
        loglik: result.loglik,
        bic: result.bic,
        n_params: result.n_params,
        iterations: result.iterations,
        converged: result.converged,
        identifiable: result.identifiable,
        restart_logliks: &result.restart_logliks,
        rows_dropped_all_missing: data.dropped_rows(),
        ingest: &report,
    };
    write_atomic(&report_path, &json_string(&fit_report).map_err(data_err)?)?;

    println!(
        "log-likelihood {:.6}, BIC {:.6}, {} parameters, {} iterations, converged: {}",
        result.loglik, result.bic, result.n_params, result.iterations, result.converged
    );
    println!("wrote model JSON to {}", args.out.display());
    println!("wrote fit report to {}", report_path.display());
    Ok(())
}

pub fn select(args: &SelectArgs) -> CliResult<()> {
    if args.pu_max == 0 {
        return Err(CliError::Usage(
            "--pu-max must be at least 1 (the grid runs over p_u = 1..=pu-max)".into(),
        ));
    }
    let (x_raw, y_raw) = load_blocks(&args.data)?;
    let opts = PrepOptions {
        binarize: args.prep.binarize,
        rate_min: args.prep.rate_min,
        log_y: args.prep.log_y,
        require_y: args.prep.require_y,
    };
    let (x, y, report) = preprocess(x_raw, y_raw, &opts)?;
    let y = require_y(y)?;
    println!("{}", report.describe(x.width(), y.width()));
    let data = to_dataset(&x, &y)?;

    let p_u_values: Vec<usize> = (1..=args.pu_max).collect();
    let p_v_values: Vec<usize> = (0..=args.pv_max).collect();
    // dims in the config are a placeholder; the grid sets each cell's own
    let cfg = build_config(LatentDims::new(1, 0).map_err(classify_compute)?, &args.optim)?;
    let grid = bic_grid(&data, &p_u_values, &p_v_values, &cfg).map_err(classify_compute)?;

    let grid_path = args
        .grid_out
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "grid.csv"));
    write_atomic(&grid_path, &grid.to_csv())?;
    println!("wrote grid CSV to {}", grid_path.display());

    for cell in &grid.cells {
        if !cell.identifiable {
            println!(
                "warning: grid cell p_u={}, p_v={} fails the identifiability conditions; \
                 it is reported but cannot be selected",
                cell.p_u, cell.p_v
            );
        } else if let Some(err) = &cell.error {
            println!(
                "warning: grid cell p_u={}, p_v={} failed: {err}",
                cell.p_u, cell.p_v
            );
        }
    }

    let best_cell = grid.best_cell().ok_or_else(|| {
        CliError::Numeric(format!(
            "no grid cell produced an eligible fit; see {}",
            grid_path.display()
        ))
    })?;
    println!(
        "selected p_u={}, p_v={} (BIC {:.6})",
        best_cell.p_u, best_cell.p_v, best_cell.bic
    );
    let best = grid
        .best_fit()
        .expect("the selected cell retains its fit");
    write_atomic(&args.out, &model_json(best)?)?;
    println!("wrote best model JSON to {}", args.out.display());
    Ok(())
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let stored = load_model(&args.model)?;
    let params = stored.params;
    let table = read_x_only(&args.x, args.binarize)?;
    check_width(&table, params.p_x(), "x")?;

    let p_y = params.p_y();
    let mut out = String::new();
    let header = (0..p_y)
        .map(|j| format!("mean_y{j}"))
        .chain((0..p_y).map(|j| format!("var_y{j}")))
        .collect::<Vec<_>>();
    out.push_str(&csv_line(header));
    for r in 0..table.n() {
        let (mask, obs) = table.row_observed(r);
        let pred = params
            .predict_y_given_partial_x(&DVector::from_vec(obs), &mask)
            .map_err(classify_compute)?;
        let fields = (0..p_y)
            .map(|j| fmt_float(pred.mean()[j]))
            .chain((0..p_y).map(|j| fmt_float(pred.cov()[(j, j)])))
            .collect::<Vec<_>>();
        out.push_str(&csv_line(fields));
    }
    write_atomic(&args.out, &out)?;
    println!(
        "wrote predictions for {} rows to {}",
        table.n(),
        args.out.display()
    );
    Ok(())
}

fn read_x_only(path: &Path, binarize: bool) -> CliResult<Block> {
    let data = crate::DataArgs {
        x: path.to_path_buf(),
        y: None,
        y_cols: Vec::new(),
    };
    let (x, _none) = load_blocks(&data)?;
    let opts = PrepOptions {
        binarize,
        rate_min: None,
        log_y: false,
        require_y: false,
    };
    let (x, _, _) = preprocess(x, None, &opts)?;
    Ok(x)
}

pub fn scores(args: &ScoresArgs) -> CliResult<()> {
    let stored = load_model(&args.model)?;
    let params = stored.params;
    let (x_raw, y_raw) = load_blocks(&args.data)?;
    let opts = PrepOptions {
        binarize: args.binarize,
        rate_min: None,
        log_y: args.log_y,
        require_y: false,
    };
    let (x, y, _report) = preprocess(x_raw, y_raw, &opts)?;
    check_width(&x, params.p_x(), "x")?;
    if let Some(y_block) = &y {
        check_width(y_block, params.p_y(), "y")?;
    }
    if args.with_y_scores && y.is_none() {
        return Err(CliError::Usage(
            "--with-y-scores needs a y block (--y or --y-cols)".into(),
        ));
    }

    let dims = params.dims();
    let axes = axis_names(dims);
    let (p_x, p_y) = (params.p_x(), params.p_y());

    let mut header = Vec::new();
    if y.is_some() {
        header.extend(axes.iter().map(|a| format!("mxy_{a}")));
    }
    header.extend(axes.iter().map(|a| format!("mx_{a}")));
    if args.with_y_scores {
        header.extend(axes.iter().map(|a| format!("my_{a}")));
    }
    let mut out = String::new();
    out.push_str(&csv_line(header));

    for r in 0..x.n() {
        let (x_mask, x_obs) = x.row_observed(r);
        let mut fields = Vec::new();
        if let Some(y_block) = &y {
            let (y_mask, y_obs) = y_block.row_observed(r);
            let mut mask = x_mask.clone();
            mask.extend(&y_mask);
            let mut obs = x_obs.clone();
            obs.extend(&y_obs);
            let post = params
                .posterior_z_given_partial(&DVector::from_vec(obs), &mask)
                .map_err(classify_compute)?;
            fields.extend(post.mean().iter().map(|&v| fmt_float(v)));
        }
        let mut mask = x_mask.clone();
        mask.extend(std::iter::repeat(false).take(p_y));
        let post = params
            .posterior_z_given_partial(&DVector::from_vec(x_obs.clone()), &mask)
            .map_err(classify_compute)?;
        fields.extend(post.mean().iter().map(|&v| fmt_float(v)));
        if args.with_y_scores {
            let y_block = y.as_ref().expect("checked above");
            let (y_mask, y_obs) = y_block.row_observed(r);
            let mut mask = vec![false; p_x];
            mask.extend(&y_mask);
            let post = params
                .posterior_z_given_partial(&DVector::from_vec(y_obs), &mask)
                .map_err(classify_compute)?;
            fields.extend(post.mean().iter().map(|&v| fmt_float(v)));
        }
        out.push_str(&csv_line(fields));
    }
    write_atomic(&args.out, &out)?;
    println!(
        "wrote factor scores for {} rows to {}",
        x.n(),
        args.out.display()
    );
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let stored = load_model(&args.model)?;
    if args.study {
        return simulate_study(args, stored);
    }
    if !args.sizes.is_empty() || args.reps.is_some() || args.summary.is_some() {
        return Err(CliError::Usage(
            "--sizes, --reps, and --summary apply to study mode; add --study".into(),
        ));
    }
    let n = args
        .n
        .ok_or_else(|| CliError::Usage("--n is required when drawing a dataset".into()))?;
    let mut data = sample(&stored.params, n, args.optim.seed).map_err(classify_compute)?;
    if let Some(frac) = args.missing_frac {
        data = ppls::inject_missing(&data, frac, args.optim.seed.wrapping_add(1))
            .map_err(classify_compute)?;
    }
    let (p_x, p_y) = (data.p_x(), data.p_y());
    let header = (0..p_x)
        .map(|j| format!("x{j}"))
        .chain((0..p_y).map(|j| format!("y{j}")))
        .collect::<Vec<_>>();
    let mut out = String::new();
    out.push_str(&csv_line(header));
    for r in 0..data.n() {
        let fields = (0..p_x)
            .map(|j| {
                if data.x_present()[(r, j)] {
                    fmt_float(data.x()[(r, j)])
                } else {
                    String::new()
                }
            })
            .chain((0..p_y).map(|j| {
                if data.y_present()[(r, j)] {
                    fmt_float(data.y()[(r, j)])
                } else {
                    String::new()
                }
            }))
            .collect::<Vec<_>>();
        out.push_str(&csv_line(fields));
    }
    write_atomic(&args.out, &out)?;
    println!("wrote {} rows to {}", data.n(), args.out.display());
    Ok(())
}

fn simulate_study(args: &SimulateArgs, stored: StoredModel) -> CliResult<()> {
    if args.n.is_some() || args.missing_frac.is_some() {
        return Err(CliError::Usage(
            "--n and --missing-frac apply to data mode; drop --study".into(),
        ));
    }
    if args.sizes.is_empty() {
        return Err(CliError::Usage(
            "--sizes is required in study mode, e.g. --sizes 500,2000".into(),
        ));
    }
    let reps = args
        .reps
        .ok_or_else(|| CliError::Usage("--reps is required in study mode".into()))?;
    let truth = stored
        .into_canonical()
        .map_err(classify_compute)?
        .ok_or_else(|| {
            CliError::Usage(
                "the sampling study needs a canonical model document \
                 (fit writes one when the dimensions are identifiable)"
                    .into(),
            )
        })?;
    let cfg = build_config(truth.params.dims(), &args.optim)?;
    let study = ppls::run_sampling_study(&truth, &args.sizes, reps, &cfg, args.optim.seed)
        .map_err(classify_compute)?;

    write_atomic(&args.out, &study.estimates_csv())?;
    let summary_path = args
        .summary
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "summary.json"));
    write_atomic(&summary_path, &study.summary_json().map_err(data_err)?)?;
    println!(
        "study finished: {} sizes x {} replicates, {} failed fits",
        args.sizes.len(),
        reps,
        study.n_failures
    );
    println!("wrote estimates to {}", args.out.display());
    println!("wrote summary to {}", summary_path.display());
    Ok(())
}

/// Quotes a CSV field when it contains a delimiter, quote, or newline.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Serialize)]
struct BiplotMeta {
    /// Zero-based indices of the plotted shared axes.
    axes: [usize; 2],
    /// Contribution-ratio percentages of the plotted axes.
    axis_labels: [String; 2],
    /// Largest possible arrow length (the common row norm of the scaled
    /// loading matrix).
    unit_circle_radius: f64,
    /// Contribution ratios of every shared axis, in percent.
    shared_contribution_percent: Vec<f64>,
    /// Which conditioning produced the scores: "x,y" or "x".
    scores_conditioned_on: &'static str,
    n_rows: usize,
}

pub fn biplot(args: &BiplotArgs) -> CliResult<()> {
    let stored = load_model(&args.model)?;
    let canon = if stored.canonical {
        stored
            .into_canonical()
            .map_err(classify_compute)?
            .expect("canonical documents rebuild their canonical form")
    } else {
        ppls::canonical::canonicalize(&stored.params).map_err(classify_compute)?
    };
    let params = &canon.params;
    let dims = params.dims();
    let p_u = dims.p_u();

    let axes: [usize; 2] = match &args.axes {
        None => {
            if p_u < 2 {
                return Err(CliError::Usage(format!(
                    "a biplot needs two shared axes; the model has p_u={p_u}"
                )));
            }
            [0, 1]
        }
        Some(pair) => {
            let (a, b) = (pair[0], pair[1]);
            if a == b || a >= p_u || b >= p_u {
                return Err(CliError::Usage(format!(
                    "--axes must name two distinct shared axes below p_u={p_u}, got {a},{b}"
                )));
            }
            [a, b]
        }
    };

    let (x_raw, y_raw) = load_blocks(&args.data)?;
    let opts = PrepOptions {
        binarize: args.binarize,
        rate_min: None,
        log_y: args.log_y,
        require_y: false,
    };
    let (x, y, _report) = preprocess(x_raw, y_raw, &opts)?;
    check_width(&x, params.p_x(), "x")?;
    if let Some(y_block) = &y {
        check_width(y_block, params.p_y(), "y")?;
    }

    // scores on the chosen axis pair
    let p_y = params.p_y();
    let mut scores_csv = String::new();
    scores_csv.push_str(&csv_line(axes.iter().map(|a| format!("u{a}")).collect::<Vec<_>>()));
    for r in 0..x.n() {
        let (x_mask, x_obs) = x.row_observed(r);
        let (mut mask, mut obs) = (x_mask, x_obs);
        if let Some(y_block) = &y {
            let (y_mask, y_obs) = y_block.row_observed(r);
            mask.extend(&y_mask);
            obs.extend(&y_obs);
        } else {
            mask.extend(std::iter::repeat(false).take(p_y));
        }
        let post = params
            .posterior_z_given_partial(&DVector::from_vec(obs), &mask)
            .map_err(classify_compute)?;
        scores_csv.push_str(&csv_line(
            axes.iter().map(|&a| fmt_float(post.mean()[a])).collect::<Vec<_>>(),
        ));
    }

    // arrows: rows of the scaled loading matrix restricted to the axis pair
    let sigma_x_diag = params.sigma_x_diagonal();
    let mut arrows_csv = String::new();
    arrows_csv.push_str(&csv_line(vec![
        "feature".to_string(),
        "block".to_string(),
        format!("u{}", axes[0]),
        format!("u{}", axes[1]),
    ]));
    let mut max_arrow: f64 = 0.0;
    for i in 0..params.p_x() {
        let s = 1.0 / sigma_x_diag[i].sqrt();
        let (a0, a1) = (params.w_xu()[(i, axes[0])] * s, params.w_xu()[(i, axes[1])] * s);
        max_arrow = max_arrow.max((a0 * a0 + a1 * a1).sqrt());
        arrows_csv.push_str(&csv_line(vec![
            csv_field(&x.names[i]),
            "x".to_string(),
            fmt_float(a0),
            fmt_float(a1),
        ]));
    }
    let y_fallback_names: Vec<String> = (0..p_y).map(|j| format!("y{j}")).collect();
    let y_names: &[String] = y.as_ref().map_or(&y_fallback_names, |b| &b.names);
    for i in 0..p_y {
        let sii = params.psi_y()[i] + params.w_yu().row(i).norm_squared();
        let s = 1.0 / sii.sqrt();
        let (a0, a1) = (params.w_yu()[(i, axes[0])] * s, params.w_yu()[(i, axes[1])] * s);
        max_arrow = max_arrow.max((a0 * a0 + a1 * a1).sqrt());
        arrows_csv.push_str(&csv_line(vec![
            csv_field(&y_names[i]),
            "y".to_string(),
            fmt_float(a0),
            fmt_float(a1),
        ]));
    }

    let contribution =
        contribution_ratios(&canon, Subspace::Shared).map_err(classify_compute)?;
    let label = |a: usize| format!("{:.1}%", contribution.p_ratio[a] * 100.0);
    let meta = BiplotMeta {
        axes,
        axis_labels: [label(axes[0]), label(axes[1])],
        unit_circle_radius: canon.constraint.h(),
        shared_contribution_percent: contribution.p_ratio.iter().map(|p| p * 100.0).collect(),
        scores_conditioned_on: if y.is_some() { "x,y" } else { "x" },
        n_rows: x.n(),
    };
    debug_assert!(max_arrow <= meta.unit_circle_radius * (1.0 + 1e-8));

    let scores_path = sibling(&args.out, "scores.csv");
    let arrows_path = sibling(&args.out, "arrows.csv");
    let meta_path = sibling(&args.out, "meta.json");
    write_atomic(&scores_path, &scores_csv)?;
    write_atomic(&arrows_path, &arrows_csv)?;
    write_atomic(&meta_path, &json_string(&meta).map_err(data_err)?)?;
    println!(
        "wrote biplot data to {}, {}, {}",
        scores_path.display(),
        arrows_path.display(),
        meta_path.display()
    );
    Ok(())
}
