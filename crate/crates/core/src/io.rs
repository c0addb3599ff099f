//! Readers and writers for design matrices, canonical problems,
//! observations and prediction points.
//!
//! Floating-point output always carries 17 significant digits, which is
//! enough to reproduce every `f64` exactly when read back.

use std::io;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::canonical::{CanonicalObservation, CanonicalProblem, CaseTag, Transform};
use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows};

/// Format a float with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON formatter that prints every float with 17 significant
/// digits.
struct FullPrecision<'a>(PrettyFormatter<'a>);

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(format_f64(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serialize `value` as pretty JSON with full-precision floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| Error::Parse(e.to_string()))?;
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| Error::Parse(e.to_string()))
}

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Parse(format!("{what} is empty")));
    }
    from_rows(rows)
}

/// Dense row-major matrix from CSV text: one row per line, no header.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(parse_err)?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("not a number: {field:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let m = matrix(&rows, "matrix")?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    Ok(m)
}

/// `{"X": [[...]], "Xtilde": [[...]], "y": [...]}`; `y` is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionFile {
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    #[serde(rename = "Xtilde")]
    pub xtilde: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionInput {
    pub x: DMatrix<f64>,
    pub xtilde: DMatrix<f64>,
    pub y: Option<DVector<f64>>,
}

pub fn parse_regression_json(text: &str) -> Result<RegressionInput> {
    let file: RegressionFile = serde_json::from_str(text).map_err(parse_err)?;
    let x = matrix(&file.x, "X")?;
    let xtilde = matrix(&file.xtilde, "Xtilde")?;
    if x.ncols() != xtilde.ncols() {
        return Err(Error::Dimension(format!(
            "X has {} columns, Xtilde has {}",
            x.ncols(),
            xtilde.ncols()
        )));
    }
    let y = file.y.map(DVector::from_vec);
    if let Some(y) = &y {
        if y.len() != x.nrows() {
            return Err(Error::Dimension(format!(
                "y has {} entries, X has {} rows",
                y.len(),
                x.nrows()
            )));
        }
    }
    Ok(RegressionInput { x, xtilde, y })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", deny_unknown_fields)]
pub enum TransformFile {
    I {
        #[serde(rename = "M")]
        m: Vec<Vec<f64>>,
    },
    II {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        #[serde(rename = "P_star")]
        p_star: Vec<Vec<f64>>,
        #[serde(rename = "Xtilde_star")]
        xtilde_star: Vec<Vec<f64>>,
    },
}

/// On-disk form of a [`CanonicalProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub l: usize,
    pub case: CaseTag,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformFile>,
    #[serde(default, rename = "Xtilde", skip_serializing_if = "Option::is_none")]
    pub xtilde: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "XtX_inv", skip_serializing_if = "Option::is_none")]
    pub xtx_inv: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_number: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl From<&CanonicalProblem> for ProblemFile {
    fn from(p: &CanonicalProblem) -> Self {
        ProblemFile {
            n: p.n,
            k: p.k,
            m: p.m,
            l: p.l,
            case: p.case(),
            d: p.d.iter().copied().collect(),
            q: to_rows(&p.q),
            transform: p.transform.as_ref().map(|t| match t {
                Transform::CaseI { m } => TransformFile::I { m: to_rows(m) },
                Transform::CaseII { p, p_star, xtilde_star } => TransformFile::II {
                    p: to_rows(p),
                    p_star: to_rows(p_star),
                    xtilde_star: to_rows(xtilde_star),
                },
            }),
            xtilde: p.xtilde.as_ref().map(to_rows),
            xtx_inv: p.xtx_inv.as_ref().map(to_rows),
            condition_number: p.condition_number.is_finite().then_some(p.condition_number),
            warnings: p.warnings.clone(),
        }
    }
}

fn shaped(rows: &[Vec<f64>], shape: (usize, usize), what: &str) -> Result<DMatrix<f64>> {
    // zero-sized blocks appear in case II when k − m rows are absent
    let m = if shape.0 == 0 || shape.1 == 0 {
        if rows.iter().any(|r| !r.is_empty()) && shape.0 == 0 {
            return Err(Error::Dimension(format!("{what} should be empty")));
        }
        DMatrix::zeros(shape.0, shape.1)
    } else {
        from_rows(rows)?
    };
    if m.shape() != shape {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            shape.0,
            shape.1
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parse(format!("{what} has non-finite entries")));
    }
    Ok(m)
}

impl TryFrom<ProblemFile> for CanonicalProblem {
    type Error = Error;

    fn try_from(f: ProblemFile) -> Result<Self> {
        let (n, k, m) = (f.n, f.k, f.m);
        if k == 0 || n <= k || m == 0 {
            return Err(Error::Dimension(format!(
                "need n > k >= 1 and m >= 1, got n = {n}, k = {k}, m = {m}"
            )));
        }
        let l = k.min(m);
        if f.l != l {
            return Err(Error::Dimension(format!("l must be min(k, m) = {l}, got {}", f.l)));
        }
        let expected_case = if m >= k { CaseTag::I } else { CaseTag::II };
        if f.case != expected_case {
            return Err(Error::InvalidParameter("case tag does not match m and k".into()));
        }
        let q = shaped(&f.q, (m, l), "Q")?;
        let xtilde = f.xtilde.as_deref().map(|r| shaped(r, (m, k), "Xtilde")).transpose()?;
        let xtx_inv = f.xtx_inv.as_deref().map(|r| shaped(r, (k, k), "XtX_inv")).transpose()?;
        let transform = match f.transform {
            None => None,
            Some(TransformFile::I { m: mm }) => {
                if expected_case != CaseTag::I {
                    return Err(Error::InvalidParameter("case I transform for a case II problem".into()));
                }
                Some(Transform::CaseI {
                    m: shaped(&mm, (k, k), "M")?,
                })
            }
            Some(TransformFile::II { p, p_star, xtilde_star }) => {
                if expected_case != CaseTag::II {
                    return Err(Error::InvalidParameter("case II transform for a case I problem".into()));
                }
                if xtilde.is_none() {
                    return Err(Error::InvalidParameter("case II transform needs Xtilde".into()));
                }
                Some(Transform::CaseII {
                    p: shaped(&p, (m, m), "P")?,
                    p_star: shaped(&p_star, (k - m, k - m), "P_star")?,
                    xtilde_star: shaped(&xtilde_star, (k - m, k), "Xtilde_star")?,
                })
            }
        };
        let problem = CanonicalProblem {
            n,
            k,
            m,
            l,
            d: DVector::from_vec(f.d),
            q,
            transform,
            xtilde,
            xtx_inv,
            condition_number: f.condition_number.unwrap_or(f64::NAN),
            warnings: f.warnings,
        };
        problem.validate_geometry()?;
        Ok(problem)
    }
}

pub fn problem_to_json(problem: &CanonicalProblem) -> Result<String> {
    to_json_string(&ProblemFile::from(problem))
}

pub fn parse_problem_json(text: &str) -> Result<CanonicalProblem> {
    let file: ProblemFile = serde_json::from_str(text).map_err(parse_err)?;
    CanonicalProblem::try_from(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationFile {
    #[serde(rename = "V")]
    pub v: Vec<f64>,
    #[serde(rename = "V_star", default)]
    pub v_star: Vec<f64>,
    #[serde(rename = "S")]
    pub s: f64,
}

pub fn observation_to_json(obs: &CanonicalObservation) -> Result<String> {
    to_json_string(&ObservationFile {
        v: obs.v.iter().copied().collect(),
        v_star: obs.v_star.iter().copied().collect(),
        s: obs.s,
    })
}

pub fn parse_observation_json(text: &str) -> Result<CanonicalObservation> {
    let file: ObservationFile = serde_json::from_str(text).map_err(parse_err)?;
    CanonicalObservation::new(DVector::from_vec(file.v), DVector::from_vec(file.v_star), file.s)
}

/// Prediction points, one per CSV row. A first row that does not parse
/// as numbers is taken as a header. With `dim` given every row must have
/// that many fields; otherwise all rows must match the first.
pub fn parse_points_csv(text: &str, dim: Option<usize>) -> Result<Vec<DVector<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    let mut width = dim;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(parse_err)?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::Parse(format!("row {} is not numeric", i + 1))),
        };
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("prediction point"));
        }
        match width {
            Some(w) if w != row.len() => {
                return Err(Error::Dimension(format!(
                    "row {} has {} fields, expected {w}",
                    i + 1,
                    row.len()
                )))
            }
            None => width = Some(row.len()),
            _ => {}
        }
        points.push(DVector::from_vec(row));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_csv_round_trip() {
        let m = parse_matrix_csv("1, 2\n# note\n3,4.5e-1\n\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 0.45]));
        assert!(parse_matrix_csv("1,2\n3\n").is_err());
        assert!(parse_matrix_csv("").is_err());
        assert!(parse_matrix_csv("1,x\n").is_err());
        assert!(parse_matrix_csv("1,inf\n").is_err());
    }

    #[test]
    fn problem_round_trip_is_exact() {
        let x = DMatrix::from_fn(9, 3, |i, j| {
            ((i * 5 + j * 3) % 7) as f64 + if i == j { 2.0 } else { 0.1 }
        });
        let xt = DMatrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64 * 0.37 + 1.0 / (1.0 + i as f64));
        let p = CanonicalProblem::from_design(&x, &xt).unwrap();
        let text = problem_to_json(&p).unwrap();
        let back = parse_problem_json(&text).unwrap();
        assert_eq!(back.d, p.d);
        assert_eq!(back.q, p.q);
        assert_eq!(back.transform, p.transform);
        assert_eq!(back.xtilde, p.xtilde);
    }

    #[test]
    fn problem_with_wrong_shapes_is_rejected() {
        let text = r#"{"n": 5, "k": 2, "m": 2, "l": 2, "case": "I", "D": [1.0], "Q": [[1.0, 0.0], [0.0, 1.0]]}"#;
        assert!(parse_problem_json(text).is_err());
        let text = r#"{"n": 5, "k": 2, "m": 2, "l": 2, "case": "II", "D": [1.0, 1.0], "Q": [[1.0, 0.0], [0.0, 1.0]]}"#;
        assert!(parse_problem_json(text).is_err());
        let text = r#"{"n": 5, "k": 2, "m": 2, "l": 2, "case": "I", "D": [1.0, 1.0], "Q": [[1.0, 0.0], [0.0, 1.0]]}"#;
        assert!(parse_problem_json(text).is_ok());
    }

    #[test]
    fn observation_and_points() {
        let obs = parse_observation_json(r#"{"V": [1.0, 2.0], "S": 3.5}"#).unwrap();
        assert_eq!(obs.v_star.len(), 0);
        assert!(parse_observation_json(r#"{"V": [1.0], "S": -1.0}"#).is_err());
        let text = observation_to_json(&obs).unwrap();
        assert!(text.contains("3.5000000000000000e0"));
        let pts = parse_points_csv("ytilde_1,ytilde_2\n1,2\n3,4\n", Some(2)).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(parse_points_csv("1,2\n3\n", None).is_err());
        assert!(parse_points_csv("a,b\nc,d\n", None).is_err());
    }

    #[test]
    fn regression_json() {
        let r =
            parse_regression_json(r#"{"X": [[1, 0], [0, 1], [1, 1]], "Xtilde": [[1, 1]], "y": [1, 2, 3]}"#).unwrap();
        assert_eq!(r.x.shape(), (3, 2));
        assert!(parse_regression_json(r#"{"X": [[1, 0]], "Xtilde": [[1]]}"#).is_err());
        assert!(parse_regression_json(r#"{"X": [[1, 0], [0, 1]], "Xtilde": [[1, 1]], "y": [1]}"#).is_err());
    }
}
