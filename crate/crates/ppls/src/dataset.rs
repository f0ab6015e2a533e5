//! Observation storage with per-entry missingness and pattern grouping.
//!
//! Rows are bucketed by their exact missingness bitmask over the joint
//! `(x, y)` vector. Each bucket carries the sufficient statistics of its
//! observed sub-vectors (`Σ w_r o_r`, `Σ w_r o_r o_rᵀ`, `Σ w_r`), so a
//! likelihood or gradient evaluation factorizes one observed-subset
//! covariance per bucket and never touches individual rows. Evaluation cost
//! is driven by the number of distinct patterns, not the number of rows.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{PplsError, Result};

/// One missingness bucket with its observed-subset sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    /// Presence mask over the joint `(x, y)` coordinates.
    pub mask: Vec<bool>,
    /// Observed joint indices, strictly increasing.
    pub indices: Vec<usize>,
    /// Dataset row ids belonging to this bucket, in row order.
    pub rows: Vec<usize>,
    /// Total row weight `Σ w_r`.
    pub weight: f64,
    /// Weighted sum of observed sub-vectors `Σ w_r o_r`.
    pub s1: DVector<f64>,
    /// Weighted second moment `Σ w_r o_r o_rᵀ`.
    pub m2: DMatrix<f64>,
}

/// Rows of explanatory (`x`) and objective (`y`) observations with
/// per-entry presence masks and optional positive row weights.
///
/// Rows that are entirely missing across both blocks are dropped at
/// construction; [`Dataset::dropped_rows`] reports how many. Missing cells
/// are stored as 0 and never read.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    x_present: DMatrix<bool>,
    y_present: DMatrix<bool>,
    weights: DVector<f64>,
    patterns: Vec<Pattern>,
    dropped_rows: usize,
}

impl Dataset {
    /// Builds a dataset from value matrices and matching presence masks.
    /// Cells flagged absent may hold any value (NaN included); they are
    /// zeroed. Present cells must be finite. `weights`, when given, must be
    /// strictly positive and finite.
    pub fn new(
        x: DMatrix<f64>,
        x_present: DMatrix<bool>,
        y: DMatrix<f64>,
        y_present: DMatrix<bool>,
        weights: Option<DVector<f64>>,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.nrows() != n {
            return Err(PplsError::DimensionMismatch {
                what: "y rows",
                expected: n,
                actual: y.nrows(),
            });
        }
        if x_present.shape() != x.shape() {
            return Err(PplsError::DimensionMismatch {
                what: "x presence mask rows",
                expected: n,
                actual: x_present.nrows(),
            });
        }
        if y_present.shape() != y.shape() {
            return Err(PplsError::DimensionMismatch {
                what: "y presence mask rows",
                expected: n,
                actual: y_present.nrows(),
            });
        }
        let weights = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(PplsError::DimensionMismatch {
                        what: "row weights",
                        expected: n,
                        actual: w.len(),
                    });
                }
                if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(PplsError::param(
                        "row_weights",
                        "weights must be strictly positive and finite",
                    ));
                }
                w
            }
            None => DVector::from_element(n, 1.0),
        };

        let (p_x, p_y) = (x.ncols(), y.ncols());
        let keep: Vec<usize> = (0..n)
            .filter(|&r| {
                (0..p_x).any(|j| x_present[(r, j)]) || (0..p_y).any(|j| y_present[(r, j)])
            })
            .collect();
        let dropped_rows = n - keep.len();

        let gather = |m: &DMatrix<f64>, mask: &DMatrix<bool>| -> Result<DMatrix<f64>> {
            let mut out = DMatrix::zeros(keep.len(), m.ncols());
            for (ri, &r) in keep.iter().enumerate() {
                for j in 0..m.ncols() {
                    if mask[(r, j)] {
                        let v = m[(r, j)];
                        if !v.is_finite() {
                            return Err(PplsError::Data {
                                reason: format!("non-finite value at row {r}, column {j}"),
                            });
                        }
                        out[(ri, j)] = v;
                    }
                }
            }
            Ok(out)
        };
        let x_kept = gather(&x, &x_present)?;
        let y_kept = gather(&y, &y_present)?;
        let gather_mask = |mask: &DMatrix<bool>| {
            DMatrix::from_fn(keep.len(), mask.ncols(), |ri, j| mask[(keep[ri], j)])
        };
        let x_present = gather_mask(&x_present);
        let y_present = gather_mask(&y_present);
        let weights = DVector::from_iterator(keep.len(), keep.iter().map(|&r| weights[r]));

        let patterns = group_patterns(&x_kept, &x_present, &y_kept, &y_present, &weights);
        Ok(Self {
            x: x_kept,
            y: y_kept,
            x_present,
            y_present,
            weights,
            patterns,
            dropped_rows,
        })
    }

    /// Fully observed data, unit weights.
    pub fn complete(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        let x_present = DMatrix::from_element(x.nrows(), x.ncols(), true);
        let y_present = DMatrix::from_element(y.nrows(), y.ncols(), true);
        Self::new(x, x_present, y, y_present, None)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p_x(&self) -> usize {
        self.x.ncols()
    }

    pub fn p_y(&self) -> usize {
        self.y.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x_present(&self) -> &DMatrix<bool> {
        &self.x_present
    }

    pub fn y_present(&self) -> &DMatrix<bool> {
        &self.y_present
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Total row weight `Σ w_r`.
    pub fn total_weight(&self) -> f64 {
        self.weights.sum()
    }

    /// Rows dropped at construction for being entirely missing.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    /// Missingness buckets in first-appearance order.
    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    /// True when every cell of both blocks is present.
    pub fn is_complete(&self) -> bool {
        self.x_present.iter().all(|&m| m) && self.y_present.iter().all(|&m| m)
    }

    /// Joint presence mask of one row, `x` coordinates first.
    pub fn row_mask(&self, r: usize) -> Vec<bool> {
        let (p_x, p_y) = (self.p_x(), self.p_y());
        let mut mask = Vec::with_capacity(p_x + p_y);
        mask.extend((0..p_x).map(|j| self.x_present[(r, j)]));
        mask.extend((0..p_y).map(|j| self.y_present[(r, j)]));
        mask
    }

    /// Observed joint values of one row, in increasing index order.
    pub fn row_observed(&self, r: usize) -> DVector<f64> {
        let (p_x, p_y) = (self.p_x(), self.p_y());
        let vals: Vec<f64> = (0..p_x)
            .filter(|&j| self.x_present[(r, j)])
            .map(|j| self.x[(r, j)])
            .chain(
                (0..p_y)
                    .filter(|&j| self.y_present[(r, j)])
                    .map(|j| self.y[(r, j)]),
            )
            .collect();
        DVector::from_vec(vals)
    }

    /// Per-coordinate observed means and pairwise-complete covariance of the
    /// joint vector, weighted. Coordinates with no observations and pairs
    /// that never co-occur are errors. The pairwise matrix is symmetric but
    /// not guaranteed positive semidefinite; callers doing algebra on it
    /// must clip or regularize.
    pub fn empirical_moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let d = self.p_x() + self.p_y();
        let n = self.n();
        let joint = |r: usize, j: usize| -> Option<f64> {
            if j < self.p_x() {
                self.x_present[(r, j)].then(|| self.x[(r, j)])
            } else {
                self.y_present[(r, j - self.p_x())].then(|| self.y[(r, j - self.p_x())])
            }
        };

        let mut mean = DVector::zeros(d);
        for j in 0..d {
            let (mut s, mut w) = (0.0, 0.0);
            for r in 0..n {
                if let Some(v) = joint(r, j) {
                    s += self.weights[r] * v;
                    w += self.weights[r];
                }
            }
            if w == 0.0 {
                return Err(PplsError::Data {
                    reason: format!("joint coordinate {j} has no observed values"),
                });
            }
            mean[j] = s / w;
        }

        let mut cov = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let (mut s, mut w) = (0.0, 0.0);
                for r in 0..n {
                    if let (Some(a), Some(b)) = (joint(r, i), joint(r, j)) {
                        s += self.weights[r] * (a - mean[i]) * (b - mean[j]);
                        w += self.weights[r];
                    }
                }
                if w == 0.0 {
                    return Err(PplsError::Data {
                        reason: format!("joint coordinates {i} and {j} are never observed together"),
                    });
                }
                let v = s / w;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok((mean, cov))
    }
}

fn group_patterns(
    x: &DMatrix<f64>,
    x_present: &DMatrix<bool>,
    y: &DMatrix<f64>,
    y_present: &DMatrix<bool>,
    weights: &DVector<f64>,
) -> Vec<Pattern> {
    let n = x.nrows();
    let (p_x, p_y) = (x.ncols(), y.ncols());
    let mut index_of: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut patterns: Vec<Pattern> = Vec::new();

    for r in 0..n {
        let mut mask = Vec::with_capacity(p_x + p_y);
        mask.extend((0..p_x).map(|j| x_present[(r, j)]));
        mask.extend((0..p_y).map(|j| y_present[(r, j)]));
        let pid = *index_of.entry(mask.clone()).or_insert_with(|| {
            let indices: Vec<usize> = mask
                .iter()
                .enumerate()
                .filter_map(|(i, &m)| m.then_some(i))
                .collect();
            let k = indices.len();
            patterns.push(Pattern {
                mask,
                indices,
                rows: Vec::new(),
                weight: 0.0,
                s1: DVector::zeros(k),
                m2: DMatrix::zeros(k, k),
            });
            patterns.len() - 1
        });
        let pat = &mut patterns[pid];
        let w = weights[r];
        let obs = DVector::from_iterator(
            pat.indices.len(),
            pat.indices.iter().map(|&j| {
                if j < p_x {
                    x[(r, j)]
                } else {
                    y[(r, j - p_x)]
                }
            }),
        );
        pat.rows.push(r);
        pat.weight += w;
        pat.s1.axpy(w, &obs, 1.0);
        pat.m2.syger(w, &obs, &obs, 1.0);
    }
    // syger fills only the lower triangle; mirror it
    for pat in &mut patterns {
        let k = pat.m2.nrows();
        for i in 0..k {
            for j in (i + 1)..k {
                pat.m2[(i, j)] = pat.m2[(j, i)];
            }
        }
    }
    patterns
}
