//! Artifact writers: curve tables and JSON documents at 9 significant digits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::numfmt::{round9, sig9};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Named columns of equal length, written in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBundle {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CurveBundle {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let err = |e: csv::Error| CliError::failed(format!("csv encoding: {e}"));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|&x| sig9(x))).map_err(err)?;
        }
        w.into_inner().map_err(|e| CliError::failed(format!("csv encoding: {e}")))
    }

    pub fn to_json(&self) -> Vec<u8> {
        json_bytes(&serde_json::json!({
            "columns": self.columns,
            "rows": self.rows,
        }))
    }

    /// Reads back what [`CurveBundle::to_csv`] wrote.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, CliError> {
        let err = |e: csv::Error| CliError::failed(format!("csv decoding: {e}"));
        let mut r = csv::Reader::from_reader(bytes);
        let columns = r.headers().map_err(err)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(err)?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| CliError::failed(format!("bad number '{s}': {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }
}

/// Rounds every float in a JSON tree to 9 significant digits; integers are
/// left alone.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round9(n.as_f64().unwrap_or(f64::NAN));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with rounded floats and a trailing newline.
pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let v = round_json(serde_json::to_value(value).expect("output types serialize"));
    let mut out = serde_json::to_vec_pretty(&v).expect("values serialize");
    out.push(b'\n');
    out
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::unwritable(path, &e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::unwritable(path, &e))
}

/// Writes a curve bundle as CSV or JSON.
pub fn emit_curves(bundle: &CurveBundle, path: &Path, format: Format) -> Result<(), CliError> {
    if bundle.rows.is_empty() || bundle.columns.is_empty() {
        return Err(CliError::failed("refusing to write an empty series"));
    }
    if let Some(row) = bundle.rows.iter().find(|r| r.len() != bundle.columns.len()) {
        return Err(CliError::failed(format!(
            "row has {} values for {} columns",
            row.len(),
            bundle.columns.len()
        )));
    }
    let bytes = match format {
        Format::Csv => bundle.to_csv()?,
        Format::Json => bundle.to_json(),
    };
    write_bytes(path, &bytes)
}
