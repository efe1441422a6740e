//! File formats: panel CSVs, fleet directories, JSON artifacts and result
//! tables.
//!
//! A panel CSV has a header row of attribute names and one row per time
//! step. Unobserved cells hold the token `NA`. Values are written with the
//! shortest decimal that parses back to the same `f64`, so a save/load
//! round trip is exact.
//!
//! A fleet directory holds `schema.json` plus one `<id>.csv` per panel.

use std::fs;
use std::path::{Path, PathBuf};

use cdf_core::eval::{ExperimentResult, SweepRow};
use cdf_core::model::ForecastResult;
use cdf_core::{AttributeSchema, Fleet, Matrix, Panel};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub const NA: &str = "NA";
pub const SCHEMA_FILE: &str = "schema.json";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: missing column `{column}`", path.display())]
    MissingColumn { path: PathBuf, column: String },
    #[error("{}: non-numeric cell `{value}` at row {row}, column `{column}`", path.display())]
    NonNumericCell { path: PathBuf, row: usize, column: String, value: String },
    #[error("{}: file has no data rows", path.display())]
    EmptyFile { path: PathBuf },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Data { path: PathBuf, source: cdf_core::data::DataError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> IoError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => IoError::Io { path: path.to_path_buf(), source },
        other => IoError::Format { path: path.to_path_buf(), message: format!("{other:?}") },
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| IoError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Format { path: path.to_path_buf(), message: e.to_string() })
}

/// Reads the columns named by `schema`, in schema order; other columns are ignored.
pub fn load_panel(path: &Path, schema: &AttributeSchema) -> Result<Panel, IoError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.is_empty() {
        return Err(IoError::EmptyFile { path: path.to_path_buf() });
    }
    let columns = schema
        .names()
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| IoError::MissingColumn { path: path.to_path_buf(), column: name.clone() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let a = columns.len();
    let (mut values, mut observed, mut rows) = (Vec::new(), Vec::new(), 0usize);
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        for (k, &c) in columns.iter().enumerate() {
            let cell = record.get(c).unwrap_or("").trim();
            if cell == NA {
                values.push(0.0);
                observed.push(false);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    values.push(v);
                    observed.push(true);
                }
                _ => {
                    return Err(IoError::NonNumericCell {
                        path: path.to_path_buf(),
                        row: rows,
                        column: schema.names()[k].clone(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(IoError::EmptyFile { path: path.to_path_buf() });
    }
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("panel").to_string();
    Panel::new(id, schema.clone(), Matrix::from_vec(rows, a, values), observed)
        .map_err(|source| IoError::Data { path: path.to_path_buf(), source })
}

pub fn save_panel(panel: &Panel, path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(panel.schema().names()).map_err(|e| csv_err(path, e))?;
    let mut row = Vec::with_capacity(panel.cols());
    for t in 0..panel.rows() {
        row.clear();
        for j in 0..panel.cols() {
            row.push(match panel.get(t, j) {
                Some(v) => v.to_string(),
                None => NA.to_string(),
            });
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn save_fleet(fleet: &Fleet, dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    ensure_dir(dir)?;
    let schema_path = dir.join(SCHEMA_FILE);
    write_json(&schema_path, fleet.schema())?;
    let mut written = vec![schema_path];
    for p in fleet.panels() {
        let path = dir.join(format!("{}.csv", p.id()));
        save_panel(p, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Loads `schema.json` and every `*.csv` of `dir`, ordered by file name.
pub fn load_fleet(dir: &Path) -> Result<Fleet, IoError> {
    let schema: AttributeSchema = read_json(&dir.join(SCHEMA_FILE))?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let panels = files.iter().map(|f| load_panel(f, &schema)).collect::<Result<Vec<_>, _>>()?;
    Fleet::new(panels).map_err(|source| IoError::Data { path: dir.to_path_buf(), source })
}

/// Long-format table `seed,center,method,metric,value`.
pub fn write_results_csv(result: &ExperimentResult, path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["seed", "center", "method", "metric", "value"]).map_err(|e| csv_err(path, e))?;
    for (seed, center, method, metric, value) in result.long_rows() {
        w.write_record([seed.to_string(), center.to_string(), method.to_string(), metric.to_string(), value.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// `seed,k,mse,mae,mape`; a missing MAPE is written as `NA`.
pub fn write_sweep_csv(rows: &[(u64, SweepRow)], path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["seed", "k", "mse", "mae", "mape"]).map_err(|e| csv_err(path, e))?;
    for (seed, r) in rows {
        let mape = r.mape.map_or_else(|| NA.to_string(), |v| v.to_string());
        w.write_record([seed.to_string(), r.k.to_string(), r.mse.to_string(), r.mae.to_string(), mape])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// One row per horizon step: the absolute time index, then one column per
/// forecast attribute. `source` adds a leading column when given.
pub fn write_forecasts_csv(forecasts: &[(Option<&str>, &ForecastResult)], path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let with_source = forecasts.iter().any(|(s, _)| s.is_some());
    if let Some((_, first)) = forecasts.first() {
        let mut header: Vec<String> = Vec::new();
        if with_source {
            header.push("source".into());
        }
        header.push("t".into());
        header.extend(first.attributes.iter().cloned());
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
    }
    for (source, f) in forecasts {
        for h in 0..f.values.rows() {
            let mut row: Vec<String> = Vec::with_capacity(f.values.cols() + 2);
            if with_source {
                row.push(source.unwrap_or("").to_string());
            }
            row.push((f.origin + 1 + h).to_string());
            row.extend(f.values.row(h).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(io_err(path))
}
