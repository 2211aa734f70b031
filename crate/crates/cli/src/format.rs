//! Output helpers. Every float leaves the program rounded to six significant
//! digits so reports diff cleanly.

use crate::CliError;
use serde_json::Value;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Rounds to six significant digits.
pub fn sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Six-significant-digit text for CSV cells.
pub fn cell(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        sig6(x).to_string()
    }
}

/// Rounds every float inside a JSON value.
pub fn round_json(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(sig6).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Destination: a file path or stdout.
pub fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| CliError::io(p, e))?;
            Ok(Box::new(std::io::BufWriter::new(f)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

/// Writes CSV rows (header first) to `path` or stdout.
pub fn write_csv(path: Option<&PathBuf>, rows: &[Vec<String>]) -> Result<(), CliError> {
    let label = path.map_or_else(|| PathBuf::from("<stdout>"), Clone::clone);
    let mut w = csv::Writer::from_writer(sink(path)?);
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(&label, e))?;
    }
    w.flush().map_err(|e| CliError::io(&label, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}
