//! JSON form specifications and report output.
//!
//! A form file looks like
//!
//! ```json
//! {
//!   "dim": 3,
//!   "A": [[1, -1, 0], [-1, 2, -1], [0, -1, 1]],
//!   "M": "identity",
//!   "J": {"restrict": [0, 2]},
//!   "W": {"diag": [1.0, 2.0]}
//! }
//! ```
//!
//! Every matrix field accepts dense rows or COO triplets `[{"i": 0, "j": 1, "v": -1.0}, …]`
//! (duplicates are summed). `M` and `W` also accept `"identity"` and `{"diag": […]}`;
//! `J` also accepts `{"restrict": […]}`. Indices are 0-based and unknown keys are errors.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use crate::error::Error;
use crate::form::{AuxSpace, QuadraticForm, TraceKind, TraceMap, DENSE_LIMIT};
use crate::linalg::{Mat, Vector};
use crate::mosco::FormSequence;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("field `{field}`: {source}")]
    Validation {
        field: &'static str,
        #[source]
        source: Error,
    },
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
    #[error("report has no matrix field to write as CSV")]
    NoMatrix,
}

impl IoError {
    /// Whether the error concerns the input rather than the environment.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            IoError::Parse { .. } | IoError::Schema { .. } | IoError::Validation { .. }
        )
    }
}

type IoResult<T> = std::result::Result<T, IoError>;

fn schema(field: &str, message: impl Into<String>) -> IoError {
    IoError::Schema {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormSpecRaw {
    dim: usize,
    #[serde(rename = "A")]
    a: Value,
    #[serde(rename = "M")]
    m: Value,
    #[serde(rename = "J")]
    j: Value,
    #[serde(rename = "W")]
    w: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceSpecRaw {
    dim: usize,
    #[serde(rename = "M")]
    m: Value,
    #[serde(rename = "A_list")]
    a_list: Vec<Value>,
    #[serde(rename = "A_inf")]
    a_inf: Value,
    #[serde(rename = "J")]
    j: Value,
    #[serde(rename = "W")]
    w: Value,
    #[serde(rename = "reference_A")]
    reference_a: Value,
    #[serde(default)]
    labels: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Triplet {
    i: usize,
    j: usize,
    v: f64,
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> IoResult<T> {
    serde_json::from_str(text).map_err(|e| IoError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn read(path: &Path) -> IoResult<String> {
    std::fs::read_to_string(path).map_err(|e| IoError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Which shorthands a matrix field accepts.
#[derive(Clone, Copy)]
struct Shorthands {
    identity: bool,
    diag: bool,
}

/// Parsed `J` field.
enum TraceSpec {
    Matrix(Mat),
    Restrict(Vec<usize>),
}

fn matrix_from_value(field: &str, v: &Value, rows: usize, cols: usize, allowed: Shorthands) -> IoResult<Mat> {
    match v {
        Value::String(s) if s == "identity" => {
            if !allowed.identity {
                return Err(schema(field, "\"identity\" is not accepted here"));
            }
            if rows != cols {
                return Err(schema(field, "\"identity\" needs a square shape"));
            }
            Ok(Mat::identity(rows, cols))
        }
        Value::String(s) => Err(schema(field, format!("unknown shorthand \"{s}\""))),
        Value::Object(map) => {
            if !allowed.diag {
                return Err(schema(field, "object form is not accepted here"));
            }
            if map.len() != 1 || !map.contains_key("diag") {
                return Err(schema(field, "expected {\"diag\": [...]}"));
            }
            let d: Vec<f64> = serde_json::from_value(map["diag"].clone())
                .map_err(|e| schema(field, format!("diag: {e}")))?;
            if d.len() != rows || rows != cols {
                return Err(schema(field, format!("diag has {} entries, expected {rows}", d.len())));
            }
            Ok(Mat::from_diagonal(&Vector::from_vec(d)))
        }
        Value::Array(items) if items.iter().all(Value::is_object) && !items.is_empty() => {
            let mut m = Mat::zeros(rows, cols);
            for (n, item) in items.iter().enumerate() {
                let t: Triplet =
                    serde_json::from_value(item.clone()).map_err(|e| schema(field, format!("entry {n}: {e}")))?;
                if t.i >= rows || t.j >= cols {
                    return Err(schema(
                        field,
                        format!("entry {n}: index ({}, {}) outside {rows}x{cols}", t.i, t.j),
                    ));
                }
                m[(t.i, t.j)] += t.v;
            }
            Ok(m)
        }
        Value::Array(items) => {
            let data: Vec<Vec<f64>> = items
                .iter()
                .enumerate()
                .map(|(r, row)| serde_json::from_value(row.clone()).map_err(|e| schema(field, format!("row {r}: {e}"))))
                .collect::<IoResult<_>>()?;
            if data.len() != rows || data.iter().any(|r| r.len() != cols) {
                return Err(schema(field, format!("expected {rows}x{cols} dense rows")));
            }
            Ok(Mat::from_fn(rows, cols, |r, c| data[r][c]))
        }
        _ => Err(schema(field, "expected a matrix")),
    }
}

fn trace_from_value(v: &Value, dim: usize) -> IoResult<TraceSpec> {
    if let Value::Object(map) = v {
        if map.len() != 1 || !map.contains_key("restrict") {
            return Err(schema("J", "expected {\"restrict\": [...]}"));
        }
        let idx: Vec<usize> =
            serde_json::from_value(map["restrict"].clone()).map_err(|e| schema("J", format!("restrict: {e}")))?;
        return Ok(TraceSpec::Restrict(idx));
    }
    let Value::Array(items) = v else {
        return Err(schema("J", "expected a matrix or {\"restrict\": [...]}"));
    };
    let rows = if items.iter().all(Value::is_object) {
        items
            .iter()
            .filter_map(|t| t.get("i").and_then(Value::as_u64))
            .max()
            .map_or(0, |m| m as usize + 1)
    } else {
        items.len()
    };
    let no_shorthands = Shorthands {
        identity: false,
        diag: false,
    };
    Ok(TraceSpec::Matrix(matrix_from_value("J", v, rows, dim, no_shorthands)?))
}

fn check_dim(dim: usize) -> IoResult<()> {
    if dim == 0 {
        return Err(schema("dim", "must be positive"));
    }
    if dim > DENSE_LIMIT {
        return Err(IoError::Validation {
            field: "dim",
            source: Error::SizeLimit {
                dim,
                limit: DENSE_LIMIT,
            },
        });
    }
    Ok(())
}

const FULL: Shorthands = Shorthands {
    identity: true,
    diag: true,
};
const DENSE_ONLY: Shorthands = Shorthands {
    identity: false,
    diag: false,
};

fn build_trace(jv: &Value, wv: &Value, dim: usize) -> IoResult<TraceMap> {
    let spec = trace_from_value(jv, dim)?;
    let k = match &spec {
        TraceSpec::Matrix(m) => m.nrows(),
        TraceSpec::Restrict(idx) => idx.len(),
    };
    let w = matrix_from_value("W", wv, k, k, FULL)?;
    let aux = AuxSpace::new(w).map_err(|source| IoError::Validation { field: "W", source })?;
    let kind = match spec {
        TraceSpec::Matrix(m) => TraceKind::Matrix(m),
        TraceSpec::Restrict(idx) => TraceKind::Restriction(idx),
    };
    TraceMap::new(kind, aux, dim).map_err(|source| IoError::Validation { field: "J", source })
}

/// Parses and validates a form file held in a string.
pub fn parse_form_spec_str(text: &str) -> IoResult<(QuadraticForm, TraceMap)> {
    let raw: FormSpecRaw = parse_json(text)?;
    check_dim(raw.dim)?;
    let a = matrix_from_value("A", &raw.a, raw.dim, raw.dim, DENSE_ONLY)?;
    let m = matrix_from_value("M", &raw.m, raw.dim, raw.dim, FULL)?;
    let form = QuadraticForm::new(a, m).map_err(|source| IoError::Validation {
        field: match source {
            Error::MassNotPd { .. } => "M",
            _ => "A",
        },
        source,
    })?;
    let trace = build_trace(&raw.j, &raw.w, raw.dim)?;
    Ok((form, trace))
}

/// Reads a form file.
pub fn parse_form_spec(path: &Path) -> IoResult<(QuadraticForm, TraceMap)> {
    parse_form_spec_str(&read(path)?)
}

/// Parses a sequence file `{dim, M, A_list, A_inf, J, W, reference_A}`.
pub fn parse_sequence_spec_str(text: &str) -> IoResult<FormSequence> {
    let raw: SequenceSpecRaw = parse_json(text)?;
    check_dim(raw.dim)?;
    let n = raw.dim;
    let m = matrix_from_value("M", &raw.m, n, n, FULL)?;
    let terms = raw
        .a_list
        .iter()
        .map(|v| matrix_from_value("A_list", v, n, n, DENSE_ONLY))
        .collect::<IoResult<Vec<_>>>()?;
    let a_inf = matrix_from_value("A_inf", &raw.a_inf, n, n, DENSE_ONLY)?;
    let reference = matrix_from_value("reference_A", &raw.reference_a, n, n, DENSE_ONLY)?;
    let trace = build_trace(&raw.j, &raw.w, n)?;
    let labels = raw.labels.unwrap_or_else(|| (1..=terms.len()).collect());
    FormSequence::new(terms, labels, m, a_inf, reference, trace)
        .map_err(|source| IoError::Validation { field: "A_list", source })
}

pub fn parse_sequence_spec(path: &Path) -> IoResult<FormSequence> {
    parse_sequence_spec_str(&read(path)?)
}

/// Output format of [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format `{other}` (expected json or csv)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        })
    }
}

/// Pretty JSON with every float printed to 17 significant digits.
struct PreciseFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for PreciseFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn end_object_key<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_key(w)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes a report as JSON with 17-significant-digit floats. Non-finite values become `null`.
pub fn to_json<R: Serialize>(report: &R) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter(PrettyFormatter::new()));
    report.serialize(&mut ser).expect("reports serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

fn as_matrix(v: &Value) -> Option<Vec<Vec<f64>>> {
    let rows = v.as_array()?;
    if rows.is_empty() {
        return None;
    }
    rows.iter()
        .map(|r| r.as_array()?.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
        .collect()
}

/// `i,j,value` rows of the first matrix-valued field of the report (row-major).
pub fn to_csv<R: Serialize>(report: &R) -> IoResult<String> {
    let value = serde_json::to_value(report).expect("reports serialize");
    let matrix = match &value {
        Value::Object(map) => map.values().find_map(as_matrix),
        other => as_matrix(other),
    }
    .ok_or(IoError::NoMatrix)?;
    let mut out = String::from("i,j,value\n");
    for (i, row) in matrix.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            out.push_str(&format!("{i},{j},{x:.16e}\n"));
        }
    }
    Ok(out)
}

pub fn render_report<R: Serialize>(report: &R, format: ReportFormat) -> IoResult<String> {
    match format {
        ReportFormat::Json => Ok(to_json(report)),
        ReportFormat::Csv => to_csv(report),
    }
}

/// Writes the report to `path`, or to standard output when `path` is `None`.
pub fn emit_report<R: Serialize>(report: &R, path: Option<&Path>, format: ReportFormat) -> IoResult<()> {
    let text = render_report(report, format)?;
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| IoError::Write {
            path: p.display().to_string(),
            message: e.to_string(),
        }),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| IoError::Write {
            path: "<stdout>".into(),
            message: e.to_string(),
        }),
    }
}
