//! CSV ingestion and preprocessing.
//!
//! Tables are RFC-4180-style CSV with a required header row, UTF-8 text,
//! and `.` as the decimal separator. An empty field or the token `NaN`
//! denotes a missing value; anything else must parse as a finite number.
//!
//! Preprocessing applies, in order and only when enabled: binarize-nonzero
//! on x, the mutation-rate column filter on x, the natural-log transform on
//! y, and the drop of rows with a fully missing y block.

use crate::{data_err, CliError, CliResult, DataArgs};
use nalgebra::DMatrix;
use ppls::Dataset;
use std::fmt::Write as _;
use std::path::Path;

/// One named block of observations: values with a presence mask.
/// Absent cells hold 0.0 and are identified solely by the mask.
pub struct Block {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
    pub present: DMatrix<bool>,
}

impl Block {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    /// Fraction of missing cells per column.
    pub fn missing_rates(&self) -> Vec<(String, f64)> {
        let n = self.n().max(1) as f64;
        (0..self.width())
            .map(|j| {
                let missing = (0..self.n()).filter(|&i| !self.present[(i, j)]).count();
                (self.names[j].clone(), missing as f64 / n)
            })
            .collect()
    }

    /// Mask and observed values of one row, in index order.
    pub fn row_observed(&self, r: usize) -> (Vec<bool>, Vec<f64>) {
        let mask: Vec<bool> = (0..self.width()).map(|j| self.present[(r, j)]).collect();
        let obs: Vec<f64> = (0..self.width())
            .filter(|&j| self.present[(r, j)])
            .map(|j| self.values[(r, j)])
            .collect();
        (mask, obs)
    }
}

/// What ingestion did to the data, for reports and logs.
#[derive(Default, serde::Serialize)]
pub struct IngestReport {
    /// Rows in the input file(s).
    pub n_rows_read: usize,
    /// Rows dropped because their y block was fully missing (only with the
    /// require-y switch).
    pub rows_dropped_missing_y: usize,
    /// x columns removed by the rate filter.
    pub dropped_x_columns: Vec<String>,
    /// Per-column missing fraction after preprocessing.
    pub x_missing_rates: Vec<(String, f64)>,
    pub y_missing_rates: Vec<(String, f64)>,
}

impl IngestReport {
    /// Short human-readable account for stdout.
    pub fn describe(&self, p_x: usize, p_y: usize) -> String {
        let mut s = format!("read {} rows: p_x={p_x}, p_y={p_y}", self.n_rows_read);
        if !self.dropped_x_columns.is_empty() {
            let _ = write!(
                s,
                "; rate filter dropped {}: {}",
                self.dropped_x_columns.len(),
                self.dropped_x_columns.join(", ")
            );
        }
        if self.rows_dropped_missing_y > 0 {
            let _ = write!(s, "; {} rows dropped (no y)", self.rows_dropped_missing_y);
        }
        let worst = self
            .x_missing_rates
            .iter()
            .chain(self.y_missing_rates.iter())
            .filter(|(_, r)| *r > 0.0)
            .collect::<Vec<_>>();
        if worst.is_empty() {
            s.push_str("; no missing values");
        } else {
            s.push_str("; missing rates:");
            for (name, rate) in worst {
                let _ = write!(s, " {name}={:.1}%", rate * 100.0);
            }
        }
        s
    }
}

/// Preprocessing switches.
pub struct PrepOptions {
    pub binarize: bool,
    /// `Some(rate)` enables the column filter at that threshold.
    pub rate_min: Option<f64>,
    pub log_y: bool,
    pub require_y: bool,
}

fn parse_cell(cell: &str) -> Result<Option<f64>, ()> {
    if cell.is_empty() || cell == "NaN" {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(()),
    }
}

struct RawTable {
    names: Vec<String>,
    /// Row-major cells; `None` is missing.
    rows: Vec<Vec<Option<f64>>>,
}

fn read_table(path: &Path) -> CliResult<RawTable> {
    let shown = path.display();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{shown}: {e}")))?;
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{shown}: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    if names.is_empty() {
        return Err(CliError::Data(format!("{shown}: header row is empty")));
    }
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{shown}: {e}")))?;
        let mut row = Vec::with_capacity(names.len());
        for (j, cell) in record.iter().enumerate() {
            let value = parse_cell(cell).map_err(|()| {
                CliError::Data(format!(
                    "{shown}: line {}, column '{}': cannot parse '{}' as a number",
                    r + 2,
                    names[j],
                    cell
                ))
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    Ok(RawTable { names, rows })
}

fn block_from(names: Vec<String>, rows: Vec<Vec<Option<f64>>>) -> Block {
    let n = rows.len();
    let p = names.len();
    let values = DMatrix::from_fn(n, p, |i, j| rows[i][j].unwrap_or(0.0));
    let present = DMatrix::from_fn(n, p, |i, j| rows[i][j].is_some());
    Block {
        names,
        values,
        present,
    }
}

/// Loads the x block and, when a source for it is given, the y block:
/// either a second file or a set of columns carved out of the first.
pub fn load_blocks(data: &DataArgs) -> CliResult<(Block, Option<Block>)> {
    let table = read_table(&data.x)?;
    if let Some(y_path) = &data.y {
        let y_table = read_table(y_path)?;
        if y_table.rows.len() != table.rows.len() {
            return Err(CliError::Data(format!(
                "{} has {} data rows but {} has {}; the blocks must align row by row",
                data.x.display(),
                table.rows.len(),
                y_path.display(),
                y_table.rows.len()
            )));
        }
        let x = block_from(table.names, table.rows);
        let y = block_from(y_table.names, y_table.rows);
        return Ok((x, Some(y)));
    }
    if data.y_cols.is_empty() {
        return Ok((block_from(table.names, table.rows), None));
    }

    let mut y_idx = Vec::with_capacity(data.y_cols.len());
    for name in &data.y_cols {
        let j = table
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| {
                CliError::Data(format!(
                    "{}: no column named '{name}' (available: {})",
                    data.x.display(),
                    table.names.join(", ")
                ))
            })?;
        if y_idx.contains(&j) {
            return Err(CliError::Usage(format!(
                "--y-cols lists column '{name}' more than once"
            )));
        }
        y_idx.push(j);
    }
    let x_idx: Vec<usize> = (0..table.names.len())
        .filter(|j| !y_idx.contains(j))
        .collect();
    if x_idx.is_empty() {
        return Err(CliError::Usage(
            "--y-cols consumes every column; nothing is left for the x block".into(),
        ));
    }
    let take = |idx: &[usize]| -> (Vec<String>, Vec<Vec<Option<f64>>>) {
        let names = idx.iter().map(|&j| table.names[j].clone()).collect();
        let rows = table
            .rows
            .iter()
            .map(|row| idx.iter().map(|&j| row[j]).collect())
            .collect();
        (names, rows)
    };
    let (x_names, x_rows) = take(&x_idx);
    let (y_names, y_rows) = take(&y_idx);
    Ok((
        block_from(x_names, x_rows),
        Some(block_from(y_names, y_rows)),
    ))
}

/// Applies the enabled preprocessing steps in their fixed order and reports
/// what happened.
pub fn preprocess(
    mut x: Block,
    mut y: Option<Block>,
    opt: &PrepOptions,
) -> CliResult<(Block, Option<Block>, IngestReport)> {
    let mut report = IngestReport {
        n_rows_read: x.n(),
        ..IngestReport::default()
    };

    if opt.binarize {
        for i in 0..x.n() {
            for j in 0..x.width() {
                if x.present[(i, j)] {
                    x.values[(i, j)] = f64::from(x.values[(i, j)] != 0.0);
                }
            }
        }
    }

    if let Some(rate) = opt.rate_min {
        if !(0.0..0.5).contains(&rate) || rate <= 0.0 {
            return Err(CliError::Usage(format!(
                "--rate-min must lie strictly between 0 and 0.5, got {rate}"
            )));
        }
        let mut keep = Vec::new();
        for j in 0..x.width() {
            let observed: Vec<f64> = (0..x.n())
                .filter(|&i| x.present[(i, j)])
                .map(|i| x.values[(i, j)])
                .collect();
            let dropped = if observed.is_empty() {
                true
            } else {
                let mean = observed.iter().sum::<f64>() / observed.len() as f64;
                mean < rate || mean > 1.0 - rate
            };
            if dropped {
                report.dropped_x_columns.push(x.names[j].clone());
            } else {
                keep.push(j);
            }
        }
        if keep.is_empty() {
            return Err(CliError::Data(format!(
                "the rate filter at threshold {rate} dropped every x column"
            )));
        }
        if keep.len() < x.width() {
            x = Block {
                names: keep.iter().map(|&j| x.names[j].clone()).collect(),
                values: DMatrix::from_fn(x.n(), keep.len(), |i, k| x.values[(i, keep[k])]),
                present: DMatrix::from_fn(x.n(), keep.len(), |i, k| x.present[(i, keep[k])]),
            };
        }
    }

    if opt.log_y {
        let Some(y_block) = y.as_mut() else {
            return Err(CliError::Usage(
                "--log-y needs a y block (--y or --y-cols)".into(),
            ));
        };
        let mut offending = Vec::new();
        for i in 0..y_block.n() {
            if (0..y_block.width())
                .any(|j| y_block.present[(i, j)] && y_block.values[(i, j)] <= 0.0)
            {
                offending.push(i + 2); // 1-based file line, after the header
            }
        }
        if !offending.is_empty() {
            let shown: Vec<String> = offending.iter().take(8).map(usize::to_string).collect();
            let more = offending.len().saturating_sub(8);
            let tail = if more > 0 {
                format!(" and {more} more")
            } else {
                String::new()
            };
            return Err(CliError::Data(format!(
                "--log-y requires strictly positive y values; offending lines: {}{tail}",
                shown.join(", ")
            )));
        }
        for i in 0..y_block.n() {
            for j in 0..y_block.width() {
                if y_block.present[(i, j)] {
                    y_block.values[(i, j)] = y_block.values[(i, j)].ln();
                }
            }
        }
    }

    if opt.require_y {
        let Some(y_block) = y.as_mut() else {
            return Err(CliError::Usage(
                "--require-y needs a y block (--y or --y-cols)".into(),
            ));
        };
        let keep: Vec<usize> = (0..y_block.n())
            .filter(|&i| (0..y_block.width()).any(|j| y_block.present[(i, j)]))
            .collect();
        report.rows_dropped_missing_y = y_block.n() - keep.len();
        if report.rows_dropped_missing_y > 0 {
            let shrink = |b: &Block| Block {
                names: b.names.clone(),
                values: DMatrix::from_fn(keep.len(), b.width(), |i, j| b.values[(keep[i], j)]),
                present: DMatrix::from_fn(keep.len(), b.width(), |i, j| b.present[(keep[i], j)]),
            };
            x = shrink(&x);
            *y_block = shrink(y_block);
        }
    }

    report.x_missing_rates = x.missing_rates();
    if let Some(y_block) = &y {
        report.y_missing_rates = y_block.missing_rates();
    }
    Ok((x, y, report))
}

/// Builds the estimation dataset from preprocessed blocks.
pub fn to_dataset(x: &Block, y: &Block) -> CliResult<Dataset> {
    Dataset::new(
        x.values.clone(),
        x.present.clone(),
        y.values.clone(),
        y.present.clone(),
        None,
    )
    .map_err(data_err)
}
