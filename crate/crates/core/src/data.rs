//! Experiment data, the causal estimand, and estimate reports.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Arm, Error, Result};

/// Outcomes, treatment indicators and covariates for `N` units.
///
/// Covariates are stored row-major without an intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    y: Vec<f64>,
    w: Vec<u8>,
    x: Vec<f64>,
    q: usize,
}

impl ExperimentData {
    /// Builds and validates a dataset. `x` is row-major with `q` columns.
    pub fn new(y: Vec<f64>, w: Vec<u8>, x: Vec<f64>, q: usize) -> Result<Self> {
        let data = ExperimentData { y, w, x, q };
        data.validate()?;
        Ok(data)
    }

    /// Builds a dataset from covariate rows.
    pub fn from_rows(y: Vec<f64>, w: Vec<u8>, rows: &[Vec<f64>]) -> Result<Self> {
        let q = rows.first().map_or(0, Vec::len);
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != q) {
            return Err(Error::ShapeMismatch(format!(
                "covariate row {row} has {} columns, expected {q}",
                r.len()
            )));
        }
        Self::new(y, w, rows.concat(), q)
    }

    /// Checks every invariant: equal lengths with `N >= 2`, binary treatment,
    /// both arms non-empty, all values finite.
    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.w.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} outcomes but {} treatment indicators",
                self.w.len()
            )));
        }
        if self.x.len() != n * self.q {
            return Err(Error::ShapeMismatch(format!(
                "covariate storage holds {} values, expected {n} x {}",
                self.x.len(),
                self.q
            )));
        }
        if n < 2 {
            return Err(Error::ShapeMismatch(format!(
                "need at least 2 units, got {n}"
            )));
        }
        if let Some((row, &value)) = self.w.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::InvalidTreatmentIndicator {
                row,
                value: value as i64,
            });
        }
        for (row, y) in self.y.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::NonFiniteValue {
                    row,
                    column: "y".into(),
                });
            }
        }
        if let Some(idx) = self.x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: idx / self.q,
                column: format!("x{}", idx % self.q + 1),
            });
        }
        if self.n_arm(Arm::Control) == 0 {
            return Err(Error::EmptyArm(Arm::Control));
        }
        if self.n_arm(Arm::Treated) == 0 {
            return Err(Error::EmptyArm(Arm::Treated));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Number of covariates.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn w(&self) -> &[u8] {
        &self.w
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.q..(i + 1) * self.q]
    }

    /// Column `j` (zero-based) of the covariate matrix.
    pub fn x_column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.x[i * self.q + j]).collect()
    }

    pub fn n_arm(&self, arm: Arm) -> usize {
        let t = arm.indicator();
        self.w.iter().filter(|&&v| v == t).count()
    }

    /// Indices of the units in `arm`, ascending.
    pub fn arm_indices(&self, arm: Arm) -> Vec<usize> {
        let t = arm.indicator();
        (0..self.len()).filter(|&i| self.w[i] == t).collect()
    }

    /// Copies the given units (in the given order) into a new validated dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut y = Vec::with_capacity(indices.len());
        let mut w = Vec::with_capacity(indices.len());
        let mut x = Vec::with_capacity(indices.len() * self.q);
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            y.push(self.y[i]);
            w.push(self.w[i]);
            x.extend_from_slice(self.x_row(i));
        }
        Self::new(y, w, x, self.q)
    }

    /// Reads the `w,y,x1,...,xq` CSV layout. A header row is required.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::MalformedInput {
                row: 1,
                message: e.to_string(),
            })?
            .clone();
        if headers.len() < 2 || &headers[0] != "w" || &headers[1] != "y" {
            return Err(Error::MalformedInput {
                row: 1,
                message: "header must start with `w,y`".into(),
            });
        }
        let q = headers.len() - 2;
        let (mut y, mut w, mut x) = (Vec::new(), Vec::new(), Vec::new());
        for (idx, record) in rdr.records().enumerate() {
            // Line numbers count the header as line 1.
            let row = idx + 2;
            let record = record.map_err(|e| Error::MalformedInput {
                row,
                message: e.to_string(),
            })?;
            if record.len() != headers.len() {
                return Err(Error::MalformedInput {
                    row,
                    message: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            let wv: i64 = record[0].parse().map_err(|_| Error::MalformedInput {
                row,
                message: format!("column `w`: `{}` is not an integer", &record[0]),
            })?;
            if !(0..=1).contains(&wv) {
                return Err(Error::InvalidTreatmentIndicator { row, value: wv });
            }
            w.push(wv as u8);
            for (col, field) in record.iter().enumerate().skip(1) {
                let name = &headers[col];
                if field.is_empty() {
                    return Err(Error::MalformedInput {
                        row,
                        message: format!("column `{name}`: missing value"),
                    });
                }
                let v: f64 = field.parse().map_err(|_| Error::MalformedInput {
                    row,
                    message: format!("column `{name}`: `{field}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue {
                        row,
                        column: name.to_string(),
                    });
                }
                if col == 1 {
                    y.push(v);
                } else {
                    x.push(v);
                }
            }
        }
        Self::new(y, w, x, q)
    }
}

/// The contrast `g` applied to the two mean potential outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimand {
    /// `g(x, y) = y - x`
    Difference,
    /// `g(x, y) = y / x`
    Ratio,
}

impl Estimand {
    pub fn name(self) -> &'static str {
        match self {
            Estimand::Difference => "difference",
            Estimand::Ratio => "ratio",
        }
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "difference" | "diff" => Ok(Estimand::Difference),
            "ratio" => Ok(Estimand::Ratio),
            other => Err(Error::InvalidConfig(format!("unknown estimand `{other}`"))),
        }
    }
}

/// Evaluates `g(mean0, mean1)`.
///
/// For the ratio, `|mean0| < 1e-12 * max(1, |mean1|)` is treated as a zero
/// denominator.
pub fn g_apply(estimand: Estimand, mean0: f64, mean1: f64) -> Result<f64> {
    match estimand {
        Estimand::Difference => Ok(mean1 - mean0),
        Estimand::Ratio => {
            if mean0.abs() < 1e-12 * mean1.abs().max(1.0) {
                Err(Error::DivisionByZero { denominator: mean0 })
            } else {
                Ok(mean1 / mean0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "impute")]
    Impute,
    #[serde(rename = "opj")]
    Opj,
    #[serde(rename = "naive-ps")]
    NaivePs,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Impute => "impute",
            Method::Opj => "opj",
            Method::NaivePs => "naive-ps",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A point estimate with its standard error and confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: Method,
    pub estimand: Estimand,
    pub alpha: f64,
    /// Run parameters (`K`, `B`, `D`, `M`, `seed`) where they apply.
    pub config_echo: BTreeMap<String, u64>,
}

impl EstimateReport {
    /// True when the interval covers `value`.
    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}
