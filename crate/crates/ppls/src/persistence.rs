//! Model state as a JSON document.
//!
//! One schema serves plain and canonical parameter sets: dimensions, means,
//! loading blocks (row-major nested arrays), unique variances, the noise-
//! scaled norm level `c`, and a `canonical` flag; canonical documents add
//! the squared singular-structure arrays `omega2_yu` / `omega2_xv`. Every
//! float is written with 17 significant digits, enough to reproduce the
//! original bit pattern, so write → read → write is byte-identical.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::canonical::{canonicalize, scale_loadings, CanonicalForm};
use crate::error::{PplsError, Result};
use crate::model::PlsParams;

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    p_x: usize,
    p_y: usize,
    p_u: usize,
    p_v: usize,
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    #[serde(rename = "W_xu")]
    w_xu: Vec<Vec<f64>>,
    #[serde(rename = "W_xv")]
    w_xv: Vec<Vec<f64>>,
    #[serde(rename = "W_yu")]
    w_yu: Vec<Vec<f64>>,
    psi_x: Vec<f64>,
    psi_y: Vec<f64>,
    c: f64,
    canonical: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    omega2_yu: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    omega2_xv: Option<Vec<f64>>,
}

/// A model read back from JSON: the parameters plus canonical metadata.
#[derive(Debug, Clone)]
pub struct StoredModel {
    pub params: PlsParams,
    /// The norm level exactly as stored in the document.
    pub c: f64,
    pub canonical: bool,
    pub omega2_yu: Option<DVector<f64>>,
    pub omega2_xv: Option<DVector<f64>>,
}

impl StoredModel {
    /// Rebuilds the canonical form for documents flagged canonical (the
    /// stored parameters already are canonical, so this is an identity up
    /// to re-derived metadata); `None` for plain documents.
    pub fn into_canonical(self) -> Result<Option<CanonicalForm>> {
        if !self.canonical {
            return Ok(None);
        }
        canonicalize(&self.params).map(Some)
    }
}

/// Re-serializes a stored model exactly as it was read: every field,
/// including the recorded norm level and canonical metadata, is written
/// back verbatim, so `from_json` → `stored_to_json` is byte-identical.
pub fn stored_to_json(stored: &StoredModel) -> Result<String> {
    doc_to_json(&make_doc(
        &stored.params,
        stored.c,
        stored.canonical,
        stored.omega2_yu.as_ref().map(|v| v.iter().copied().collect()),
        stored.omega2_xv.as_ref().map(|v| v.iter().copied().collect()),
    ))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn matrix_from_rows(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    what: &'static str,
) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(PplsError::DimensionMismatch {
            what,
            expected: nrows * ncols,
            actual: rows.iter().map(|r| r.len()).sum(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Formats one float with 17 significant digits — the representation used
/// in every text output of the crate, chosen because it round-trips any
/// finite `f64` exactly.
pub fn fmt_float(value: f64) -> String {
    format!("{value:.16e}")
}

/// Serializes any value to JSON with every finite float at 17 significant
/// digits (non-finite values become `null`, serde_json's convention).
pub fn json_string<T: Serialize>(value: &T) -> Result<String> {
    struct SigDigits;
    impl serde_json::ser::Formatter for SigDigits {
        fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
        where
            W: ?Sized + std::io::Write,
        {
            write!(writer, "{value:.16e}")
        }
    }
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits);
    value
        .serialize(&mut ser)
        .map_err(|e| PplsError::Serde(e.to_string()))?;
    String::from_utf8(out).map_err(|e| PplsError::Serde(e.to_string()))
}

/// Serializes a model document with 17-significant-digit floats.
fn doc_to_json(doc: &ModelDoc) -> Result<String> {
    json_string(doc)
}

/// Writes a plain (not necessarily canonical) parameter set; `c` records
/// the root-mean-square noise-scaled loading row norm.
pub fn to_json(params: &PlsParams) -> Result<String> {
    doc_to_json(&make_doc(params, params.constraint_level(), false, None, None))
}

/// Writes a canonical form: `canonical` is set and the squared
/// singular-structure arrays are included.
pub fn canonical_to_json(canon: &CanonicalForm) -> Result<String> {
    doc_to_json(&make_doc(
        &canon.params,
        canon.constraint.c(),
        true,
        Some(canon.omega2_yu.iter().copied().collect()),
        Some(canon.omega2_xv.iter().copied().collect()),
    ))
}

fn make_doc(
    params: &PlsParams,
    c: f64,
    canonical: bool,
    omega2_yu: Option<Vec<f64>>,
    omega2_xv: Option<Vec<f64>>,
) -> ModelDoc {
    ModelDoc {
        p_x: params.p_x(),
        p_y: params.p_y(),
        p_u: params.dims().p_u(),
        p_v: params.dims().p_v(),
        mu_x: params.mu_x().iter().copied().collect(),
        mu_y: params.mu_y().iter().copied().collect(),
        w_xu: rows_of(params.w_xu()),
        w_xv: rows_of(params.w_xv()),
        w_yu: rows_of(params.w_yu()),
        psi_x: params.psi_x().iter().copied().collect(),
        psi_y: params.psi_y().iter().copied().collect(),
        c,
        canonical,
        omega2_yu,
        omega2_xv,
    }
}

/// Parses a model document. Unique variances must be strictly positive and
/// `c` positive and finite; canonical documents must actually satisfy the
/// norm constraint at level `c`.
pub fn from_json(text: &str) -> Result<StoredModel> {
    let doc: ModelDoc =
        serde_json::from_str(text).map_err(|e| PplsError::Serde(e.to_string()))?;
    if doc.psi_x.iter().chain(doc.psi_y.iter()).any(|&p| !(p > 0.0)) {
        return Err(PplsError::data(
            "psi entries must be strictly positive".to_string(),
        ));
    }
    if !(doc.c > 0.0 && doc.c.is_finite()) {
        return Err(PplsError::param("c", "must be positive and finite"));
    }
    if doc.mu_x.len() != doc.p_x || doc.mu_y.len() != doc.p_y {
        return Err(PplsError::DimensionMismatch {
            what: "mean length",
            expected: doc.p_x + doc.p_y,
            actual: doc.mu_x.len() + doc.mu_y.len(),
        });
    }
    let w_xu = matrix_from_rows(&doc.w_xu, doc.p_x, doc.p_u, "W_xu entries")?;
    let w_xv = matrix_from_rows(&doc.w_xv, doc.p_x, doc.p_v, "W_xv entries")?;
    let w_yu = matrix_from_rows(&doc.w_yu, doc.p_y, doc.p_u, "W_yu entries")?;
    let params = PlsParams::new(
        DVector::from_vec(doc.mu_x),
        DVector::from_vec(doc.mu_y),
        w_xu,
        w_xv,
        w_yu,
        DVector::from_vec(doc.psi_x),
        DVector::from_vec(doc.psi_y),
    )?;
    if doc.canonical {
        let scaled = scale_loadings(&params)?;
        let derived = scaled.constraint.c();
        if (derived - doc.c).abs() > 1e-6 * doc.c {
            return Err(PplsError::param(
                "c",
                "stored norm level disagrees with the loadings",
            ));
        }
    }
    let vec_opt = |o: Option<Vec<f64>>| o.map(DVector::from_vec);
    Ok(StoredModel {
        params,
        c: doc.c,
        canonical: doc.canonical,
        omega2_yu: vec_opt(doc.omega2_yu),
        omega2_xv: vec_opt(doc.omega2_xv),
    })
}
