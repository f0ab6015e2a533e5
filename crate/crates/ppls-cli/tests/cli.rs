//! End-to-end tests of the `ppls` binary: every subcommand, the exit-code
//! contract, preprocessing behavior, and agreement with the library's exact
//! conditioning paths.

use nalgebra::{DMatrix, DVector};
use ppls::canonical::{canonicalize, enforce_constraint};
use ppls::{Dataset, PlsParams};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ppls")
}

fn dir(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run_with_threads(threads: &str, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("PPLS_THREADS", threads)
        .output()
        .expect("the binary should be runnable")
}

fn run(args: &[&str]) -> Output {
    run_with_threads("2", args)
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// p_x=2, p_y=1, one shared axis, no input-specific axis.
fn tiny_truth() -> PlsParams {
    enforce_constraint(
        DVector::from_vec(vec![0.3, -0.2]),
        DVector::from_vec(vec![0.5]),
        DMatrix::from_column_slice(2, 1, &[1.0, 0.7]),
        DMatrix::zeros(2, 0),
        DMatrix::from_column_slice(1, 1, &[0.9]),
        1.0,
    )
    .unwrap()
}

/// p_x=4, p_y=2, one shared and one input-specific axis.
fn mid_truth() -> PlsParams {
    enforce_constraint(
        DVector::zeros(4),
        DVector::zeros(2),
        DMatrix::from_column_slice(4, 1, &[1.0, 0.8, -0.6, 0.4]),
        DMatrix::from_column_slice(4, 1, &[0.3, -0.7, 0.5, 0.9]),
        DMatrix::from_column_slice(2, 1, &[1.1, 0.7]),
        1.2,
    )
    .unwrap()
}

fn write_model(path: &Path, params: &PlsParams, canonical: bool) {
    let json = if canonical {
        ppls::canonical_to_json(&canonicalize(params).unwrap()).unwrap()
    } else {
        ppls::to_json(params).unwrap()
    };
    std::fs::write(path, json).unwrap();
}

/// Writes a dataset as `x0..,y0..` CSV; absent cells become empty fields.
/// `transform_y` maps observed y values before writing (for log-scale data).
fn write_data_csv(path: &Path, data: &Dataset, transform_y: impl Fn(f64) -> f64) {
    let (p_x, p_y) = (data.p_x(), data.p_y());
    let mut text = String::new();
    let header: Vec<String> = (0..p_x)
        .map(|j| format!("x{j}"))
        .chain((0..p_y).map(|j| format!("y{j}")))
        .collect();
    text.push_str(&header.join(","));
    text.push('\n');
    for r in 0..data.n() {
        let fields: Vec<String> = (0..p_x)
            .map(|j| {
                if data.x_present()[(r, j)] {
                    format!("{:.17e}", data.x()[(r, j)])
                } else {
                    String::new()
                }
            })
            .chain((0..p_y).map(|j| {
                if data.y_present()[(r, j)] {
                    format!("{:.17e}", transform_y(data.y()[(r, j)]))
                } else {
                    String::new()
                }
            }))
            .collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

fn parse_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr
        .headers()
        .unwrap()
        .iter()
        .map(str::to_owned)
        .collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(str::to_owned).collect())
        .collect();
    (header, rows)
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn fit_writes_byte_stable_roundtripping_model_and_report() {
    let d = dir("fit_roundtrip");
    let data_path = d.join("data.csv");
    write_data_csv(&data_path, &ppls::sample(&tiny_truth(), 300, 7).unwrap(), |v| v);
    let model = d.join("model.json");

    let out = run(&[
        "fit", "--x", &s(&data_path), "--y-cols", "y0", "--pu", "1", "--pv", "0",
        "--restarts", "3", "--seed", "5", "--out", &s(&model),
    ]);
    assert_ok(&out);

    // read -> write -> byte-equal (floats carry 17 significant digits)
    let text = std::fs::read_to_string(&model).unwrap();
    let stored = ppls::from_json(&text).unwrap();
    assert!(stored.canonical, "identifiable fits store canonical models");
    assert_eq!(ppls::stored_to_json(&stored).unwrap(), text);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("model.report.json")).unwrap())
            .unwrap();
    assert_eq!(report["p_x"], 2);
    assert_eq!(report["p_y"], 1);
    assert_eq!(report["n_rows_used"], 300);
    assert!(report["loglik"].is_f64());
    assert!(report["converged"].as_bool().unwrap());
}

#[test]
fn identical_inputs_and_seed_give_identical_outputs_across_thread_counts() {
    let d = dir("fit_determinism");
    let data_path = d.join("data.csv");
    write_data_csv(&data_path, &ppls::sample(&tiny_truth(), 250, 11).unwrap(), |v| v);

    let mut outputs = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let model = d.join(format!("model_{tag}.json"));
        let out = run_with_threads(
            threads,
            &[
                "fit", "--x", &s(&data_path), "--y-cols", "y0", "--pu", "1", "--pv", "0",
                "--restarts", "4", "--seed", "21", "--out", &s(&model),
            ],
        );
        assert_ok(&out);
        outputs.push(std::fs::read_to_string(&model).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "serial reruns must agree byte for byte");
    assert_eq!(outputs[0], outputs[2], "thread count must not change the result");
}

#[test]
fn predict_agrees_with_exact_observed_subset_conditioning() {
    let d = dir("predict_exact");
    let params = enforce_constraint(
        DVector::from_vec(vec![0.1, -0.3, 0.2]),
        DVector::from_vec(vec![0.4, -0.1]),
        DMatrix::from_column_slice(3, 1, &[0.9, 0.6, -0.5]),
        DMatrix::from_column_slice(3, 1, &[0.4, -0.8, 0.3]),
        DMatrix::from_column_slice(2, 1, &[1.0, 0.5]),
        1.1,
    )
    .unwrap();
    let model = d.join("model.json");
    write_model(&model, &params, false);

    let x_path = d.join("x.csv");
    std::fs::write(
        &x_path,
        "x0,x1,x2\n0.5,-0.2,0.9\n0.5,,0.9\nNaN,-0.2,NaN\n,,\n",
    )
    .unwrap();
    let pred_path = d.join("pred.csv");
    let out = run(&[
        "predict", "--model", &s(&model), "--x", &s(&x_path), "--out", &s(&pred_path),
    ]);
    assert_ok(&out);

    let (header, rows) = parse_csv(&pred_path);
    assert_eq!(header, vec!["mean_y0", "mean_y1", "var_y0", "var_y1"]);
    assert_eq!(rows.len(), 4);

    let cases: Vec<(Vec<bool>, Vec<f64>)> = vec![
        (vec![true, true, true], vec![0.5, -0.2, 0.9]),
        (vec![true, false, true], vec![0.5, 0.9]),
        (vec![false, true, false], vec![-0.2]),
        (vec![false, false, false], vec![]),
    ];
    for (row, (mask, obs)) in rows.iter().zip(&cases) {
        let expected = params
            .predict_y_given_partial_x(&DVector::from_vec(obs.clone()), mask)
            .unwrap();
        for j in 0..2 {
            let mean: f64 = row[j].parse().unwrap();
            let var: f64 = row[j + 2].parse().unwrap();
            assert!((mean - expected.mean()[j]).abs() <= 1e-10);
            assert!((var - expected.cov()[(j, j)]).abs() <= 1e-10);
        }
    }

    // degenerate mask: the all-present row equals the dense conditioning path
    let dense = params
        .predict_y_given_x(&DVector::from_vec(vec![0.5, -0.2, 0.9]))
        .unwrap();
    for j in 0..2 {
        let mean: f64 = rows[0][j].parse().unwrap();
        assert!((mean - dense.mean()[j]).abs() <= 1e-10);
    }
}

#[test]
fn scores_match_library_posteriors_row_by_row() {
    let d = dir("scores_exact");
    let params = enforce_constraint(
        DVector::zeros(3),
        DVector::zeros(2),
        DMatrix::from_column_slice(3, 1, &[0.8, -0.6, 0.4]),
        DMatrix::from_column_slice(3, 1, &[0.5, 0.3, -0.7]),
        DMatrix::from_column_slice(2, 1, &[0.9, 0.7]),
        0.9,
    )
    .unwrap();
    let model = d.join("model.json");
    write_model(&model, &params, false);

    let data_path = d.join("data.csv");
    std::fs::write(
        &data_path,
        "x0,x1,x2,y0,y1\n0.4,0.1,-0.2,1.0,0.3\n0.4,,-0.2,1.0,\n,,,0.7,0.1\n",
    )
    .unwrap();
    let scores_path = d.join("scores.csv");
    let out = run(&[
        "scores", "--model", &s(&model), "--x", &s(&data_path), "--y-cols", "y0,y1",
        "--with-y-scores", "--out", &s(&scores_path),
    ]);
    assert_ok(&out);

    let (header, rows) = parse_csv(&scores_path);
    assert_eq!(
        header,
        vec!["mxy_u0", "mxy_v0", "mx_u0", "mx_v0", "my_u0", "my_v0"]
    );
    assert_eq!(rows.len(), 3);

    let raw: Vec<(Vec<Option<f64>>, Vec<Option<f64>>)> = vec![
        (
            vec![Some(0.4), Some(0.1), Some(-0.2)],
            vec![Some(1.0), Some(0.3)],
        ),
        (vec![Some(0.4), None, Some(-0.2)], vec![Some(1.0), None]),
        (vec![None, None, None], vec![Some(0.7), Some(0.1)]),
    ];
    for (row, (x_cells, y_cells)) in rows.iter().zip(&raw) {
        let posterior = |mask: Vec<bool>, obs: Vec<f64>| {
            params
                .posterior_z_given_partial(&DVector::from_vec(obs), &mask)
                .unwrap()
        };
        let collect = |cells: &[Option<f64>]| -> (Vec<bool>, Vec<f64>) {
            (
                cells.iter().map(Option::is_some).collect(),
                cells.iter().flatten().copied().collect(),
            )
        };
        let (x_mask, x_obs) = collect(x_cells);
        let (y_mask, y_obs) = collect(y_cells);

        let joint_mask: Vec<bool> = x_mask.iter().chain(&y_mask).copied().collect();
        let joint_obs: Vec<f64> = x_obs.iter().chain(&y_obs).copied().collect();
        let m_xy = posterior(joint_mask, joint_obs);
        let m_x = posterior(
            x_mask.iter().copied().chain([false, false]).collect(),
            x_obs.clone(),
        );
        let m_y = posterior(
            [false; 3].into_iter().chain(y_mask.iter().copied()).collect(),
            y_obs.clone(),
        );
        let expected = [
            m_xy.mean()[0],
            m_xy.mean()[1],
            m_x.mean()[0],
            m_x.mean()[1],
            m_y.mean()[0],
            m_y.mean()[1],
        ];
        for (cell, want) in row.iter().zip(expected) {
            let got: f64 = cell.parse().unwrap();
            assert!((got - want).abs() <= 1e-10, "got {got}, want {want}");
        }
    }
}

#[test]
fn select_writes_grid_flags_excess_shared_dims_and_picks_a_model() {
    let d = dir("select_grid");
    let data_path = d.join("data.csv");
    write_data_csv(&data_path, &ppls::sample(&mid_truth(), 600, 3).unwrap(), |v| v);
    let model = d.join("best.json");

    let out = run(&[
        "select", "--x", &s(&data_path), "--y-cols", "y0,y1", "--pu-max", "3",
        "--pv-max", "2", "--restarts", "2", "--seed", "11", "--out", &s(&model),
    ]);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(
        text.contains("warning: grid cell p_u=3"),
        "p_u above the response dimension must be flagged: {text}"
    );
    assert!(text.contains("selected p_u="), "missing selection line: {text}");

    let (header, rows) = parse_csv(&d.join("best.grid.csv"));
    assert_eq!(
        header,
        vec!["p_u", "p_v", "loglik", "n_params", "bic", "identifiable", "converged"]
    );
    assert_eq!(rows.len(), 9, "3 shared x 3 specific dimensions");

    // the written model matches the eligible-BIC argmin of the grid
    let stored = ppls::from_json(&std::fs::read_to_string(&model).unwrap()).unwrap();
    let best = rows
        .iter()
        .filter(|r| r[5] == "true" && r[6] == "true")
        .min_by(|a, b| {
            a[4].parse::<f64>()
                .unwrap()
                .total_cmp(&b[4].parse::<f64>().unwrap())
        })
        .unwrap();
    assert_eq!(stored.params.dims().p_u().to_string(), best[0]);
    assert_eq!(stored.params.dims().p_v().to_string(), best[1]);
}

#[test]
fn simulate_draws_deterministic_data_with_exact_missing_count() {
    let d = dir("simulate_data");
    let model = d.join("model.json");
    write_model(&model, &tiny_truth(), false);

    let sim = d.join("sim.csv");
    let out = run(&[
        "simulate", "--model", &s(&model), "--n", "40", "--seed", "9", "--out", &s(&sim),
    ]);
    assert_ok(&out);
    let (header, rows) = parse_csv(&sim);
    assert_eq!(header, vec!["x0", "x1", "y0"]);
    assert_eq!(rows.len(), 40);
    assert!(rows
        .iter()
        .all(|r| r.iter().all(|cell| cell.parse::<f64>().is_ok())));

    // same seed, same bytes
    let sim2 = d.join("sim2.csv");
    let out2 = run(&[
        "simulate", "--model", &s(&model), "--n", "40", "--seed", "9", "--out", &s(&sim2),
    ]);
    assert_ok(&out2);
    assert_eq!(
        std::fs::read_to_string(&sim).unwrap(),
        std::fs::read_to_string(&sim2).unwrap()
    );

    // masked cells: floor(0.25 * 40 * 3), counting cells of dropped rows
    let gappy = d.join("gappy.csv");
    let out3 = run(&[
        "simulate", "--model", &s(&model), "--n", "40", "--missing-frac", "0.25",
        "--seed", "9", "--out", &s(&gappy),
    ]);
    assert_ok(&out3);
    let (_, rows3) = parse_csv(&gappy);
    let empty_cells: usize = rows3
        .iter()
        .map(|r| r.iter().filter(|c| c.is_empty()).count())
        .sum();
    let dropped = 40 - rows3.len();
    assert_eq!(empty_cells + 3 * dropped, (0.25f64 * 40.0 * 3.0) as usize);
}

#[test]
fn simulate_study_exports_estimates_and_summary() {
    let d = dir("simulate_study");
    let model = d.join("truth.json");
    write_model(&model, &tiny_truth(), true);

    let est = d.join("estimates.csv");
    let out = run(&[
        "simulate", "--model", &s(&model), "--study", "--sizes", "120,240", "--reps", "2",
        "--restarts", "2", "--seed", "13", "--out", &s(&est),
    ]);
    assert_ok(&out);

    let (header, rows) = parse_csv(&est);
    assert_eq!(header, vec!["size", "replicate", "parameter", "value"]);
    assert!(!rows.is_empty());

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("estimates.summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["sample_sizes"][0], 120);
    assert_eq!(summary["n_failures"], 0);
    assert!(summary["parameters"].as_array().unwrap().len() > 0);
}

#[test]
fn biplot_reports_contribution_labels_and_bounded_arrows() {
    let d = dir("biplot");
    // two response rows at angle cos = 0.6 make the shared-axis strengths
    // split 80/20 exactly
    let params = enforce_constraint(
        DVector::zeros(3),
        DVector::zeros(2),
        DMatrix::from_column_slice(3, 2, &[0.8, 0.3, -0.4, 0.2, -0.6, 0.5]),
        DMatrix::from_column_slice(3, 1, &[0.5, -0.4, 0.6]),
        DMatrix::from_column_slice(2, 2, &[1.0, 0.6, 0.0, 0.8]),
        1.3,
    )
    .unwrap();
    let model = d.join("model.json");
    write_model(&model, &params, true);

    let data_path = d.join("data.csv");
    write_data_csv(&data_path, &ppls::sample(&params, 12, 5).unwrap(), |v| v);

    let prefix = d.join("plot");
    let out = run(&[
        "biplot", "--model", &s(&model), "--x", &s(&data_path), "--y-cols", "y0,y1",
        "--out", &s(&prefix),
    ]);
    assert_ok(&out);

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("plot.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["axis_labels"][0], "80.0%");
    assert_eq!(meta["axis_labels"][1], "20.0%");
    assert_eq!(meta["axes"][0], 0);
    assert_eq!(meta["axes"][1], 1);
    assert_eq!(meta["scores_conditioned_on"], "x,y");
    let radius = meta["unit_circle_radius"].as_f64().unwrap();
    let c = 1.3f64;
    assert!((radius - c / (1.0 + c * c).sqrt()).abs() <= 1e-12);

    let (header, rows) = parse_csv(&d.join("plot.scores.csv"));
    assert_eq!(header, vec!["u0", "u1"]);
    assert_eq!(rows.len(), 12);

    let (aheader, arows) = parse_csv(&d.join("plot.arrows.csv"));
    assert_eq!(aheader, vec!["feature", "block", "u0", "u1"]);
    assert_eq!(arows.len(), 5, "three input and two response features");
    for row in &arows {
        let (a0, a1): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());
        let len = (a0 * a0 + a1 * a1).sqrt();
        assert!(len <= radius * (1.0 + 1e-8), "arrow {len} exceeds {radius}");
    }
    // response features load on the shared axes alone, so their arrows
    // reach the circle exactly
    for row in arows.iter().filter(|r| r[1] == "y") {
        let (a0, a1): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());
        assert!(((a0 * a0 + a1 * a1).sqrt() - radius).abs() <= 1e-10);
    }
}

#[test]
fn preprocessing_applies_in_order_and_reports() {
    let d = dir("preprocess");
    let mut text = String::from("always,rare,site,y0\n");
    let mut seed = 41u64;
    for i in 0..30 {
        // crude deterministic pseudo-noise, good enough for a smoke fit
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let noise = ((seed >> 33) as f64 / 2f64.powi(31)) - 0.5;
        let site = f64::from(i % 2 == 0);
        let y = (0.8 * site + 0.3 * noise).exp();
        let rare = f64::from(i == 3);
        text.push_str(&format!("7,{rare},{site},{y:.6}\n"));
    }
    let data_path = d.join("data.csv");
    std::fs::write(&data_path, text).unwrap();

    let model = d.join("model.json");
    let out = run(&[
        "fit", "--x", &s(&data_path), "--y-cols", "y0", "--binarize", "--rate-min",
        "--log-y", "--require-y", "--pu", "1", "--pv", "0", "--restarts", "2",
        "--out", &s(&model),
    ]);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(
        text.contains("rate filter dropped 2: always, rare"),
        "constant and near-constant columns must be dropped: {text}"
    );

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("model.report.json")).unwrap())
            .unwrap();
    assert_eq!(report["p_x"], 1, "only the informative column survives");
    assert_eq!(report["ingest"]["dropped_x_columns"][0], "always");
}

#[test]
fn paper_shaped_run_has_expected_dimensions() {
    let d = dir("paper_shape");
    let truth = enforce_constraint(
        DVector::zeros(7),
        DVector::zeros(3),
        DMatrix::from_fn(7, 1, |i, _| 0.5 + 0.1 * i as f64),
        DMatrix::from_fn(7, 1, |i, _| if i % 2 == 0 { 0.4 } else { -0.5 }),
        DMatrix::from_column_slice(3, 1, &[1.0, 0.8, 0.6]),
        1.0,
    )
    .unwrap();
    let data_path = d.join("data.csv");
    // write y on its natural-log scale inverted, so --log-y undoes it
    write_data_csv(&data_path, &ppls::sample(&truth, 400, 17).unwrap(), f64::exp);

    let model = d.join("model.json");
    let out = run(&[
        "fit", "--x", &s(&data_path), "--y-cols", "y0,y1,y2", "--log-y", "--pu", "1",
        "--pv", "1", "--restarts", "2", "--seed", "2", "--out", &s(&model),
    ]);
    assert_ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("model.report.json")).unwrap())
            .unwrap();
    assert_eq!(report["p_x"], 7);
    assert_eq!(report["p_y"], 3);
    assert_eq!(report["n_rows_used"], 400);
}

#[test]
fn missing_tokens_are_handled_and_reported() {
    let d = dir("missing_tokens");
    let data_path = d.join("data.csv");
    std::fs::write(
        &data_path,
        "x0,x1,y0\n0.5,NaN,1.2\n-0.3,0.8,\n0.1,,0.4\n0.9,0.2,-0.3\n0.7,-0.1,0.8\n\
         0.2,0.3,0.1\n-0.5,0.6,0.9\n0.4,-0.7,-0.2\n0.0,0.5,0.3\n0.8,0.1,0.6\n",
    )
    .unwrap();
    let model = d.join("model.json");
    let out = run(&[
        "fit", "--x", &s(&data_path), "--y-cols", "y0", "--pu", "1", "--pv", "0",
        "--restarts", "2", "--out", &s(&model),
    ]);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("missing rates:"), "report missing rates: {text}");
    assert!(text.contains("x1="), "x1 has missing cells: {text}");
}

#[test]
fn exit_codes_follow_the_contract() {
    let d = dir("exit_codes");
    let data_path = d.join("data.csv");
    write_data_csv(&data_path, &ppls::sample(&tiny_truth(), 60, 23).unwrap(), |v| v);
    let model = d.join("model.json");
    write_model(&model, &tiny_truth(), false);

    // 2: clap usage error (missing required flag)
    let out = run(&["fit", "--x", &s(&data_path), "--y-cols", "y0", "--pv", "0"]);
    assert_eq!(exit_code(&out), 2);

    // 2: impossible dimensions for the data shape
    let out = run(&[
        "fit", "--x", &s(&data_path), "--y-cols", "y0", "--pu", "2", "--pv", "0",
        "--out", &s(&d.join("m2.json")),
    ]);
    assert_eq!(exit_code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("not identifiable"));

    // 2: bad thread cap
    let out = run_with_threads(
        "abc",
        &[
            "simulate", "--model", &s(&model), "--n", "5", "--out", &s(&d.join("s.csv")),
        ],
    );
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("PPLS_THREADS"));

    // 2: study mode without --reps
    let out = run(&[
        "simulate", "--model", &s(&model), "--study", "--sizes", "100",
        "--out", &s(&d.join("e.csv")),
    ]);
    assert_eq!(exit_code(&out), 2);

    // 2: biplot on a single shared axis
    let out = run(&[
        "biplot", "--model", &s(&model), "--x", &s(&data_path), "--y-cols", "y0",
        "--out", &s(&d.join("plot")),
    ]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("two shared axes"));

    // 3: unreadable input
    let out = run(&[
        "predict", "--model", &s(&model), "--x", &s(&d.join("nope.csv")),
        "--out", &s(&d.join("p.csv")),
    ]);
    assert_eq!(exit_code(&out), 3);

    // 3: malformed cell, reported with position
    let bad = d.join("bad.csv");
    std::fs::write(&bad, "x0,x1\n0.5,0.2\n0.1,abc\n").unwrap();
    let out = run(&[
        "predict", "--model", &s(&model), "--x", &s(&bad), "--out", &s(&d.join("p.csv")),
    ]);
    assert_eq!(exit_code(&out), 3);
    let err = stderr(&out);
    assert!(err.contains("line 3") && err.contains("'x1'") && err.contains("'abc'"), "{err}");

    // 3: shape conflict between model and data
    let wide = d.join("wide.csv");
    std::fs::write(&wide, "a,b,c\n1,2,3\n").unwrap();
    let out = run(&[
        "predict", "--model", &s(&model), "--x", &s(&wide), "--out", &s(&d.join("p.csv")),
    ]);
    assert_eq!(exit_code(&out), 3);

    // 3: log of a non-positive response, listing the offending line
    let nonpos = d.join("nonpos.csv");
    std::fs::write(&nonpos, "x0,x1,y0\n0.5,0.2,1.0\n0.1,0.3,0.0\n").unwrap();
    let out = run(&[
        "fit", "--x", &s(&nonpos), "--y-cols", "y0", "--log-y", "--pu", "1", "--pv", "0",
        "--out", &s(&d.join("m3.json")),
    ]);
    assert_eq!(exit_code(&out), 3);
    assert!(stderr(&out).contains("offending lines: 3"), "{}", stderr(&out));
}
