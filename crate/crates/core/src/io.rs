//! Dataset CSV ingestion and report emission.
//!
//! The dataset wire format is a four-column CSV with header `t,y,x1,x2`.
//! Values are 0/1; an empty covariate field is missing, and any token listed
//! in the recode rules is treated as missing too (surveys often park "don't
//! know" answers in a third category). Treatment and outcome must always be
//! present.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::RunReport;
use crate::types::{validate_dataset, CompletedDataset, Dataset, Unit};

pub const DATASET_HEADER: [&str; 4] = ["t", "y", "x1", "x2"];

pub const METRICS_HEADER: &str =
    "method,coefficient,abs_bias,mc_sd,se,coverage,avg_ci_length,n_used,n_failed";

/// Read a dataset from a CSV file.
pub fn ingest_csv(path: &Path, recode_missing: &[String]) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    parse_dataset_csv(file, recode_missing)
}

/// Parse a dataset from any reader carrying the CSV wire format.
pub fn parse_dataset_csv(reader: impl Read, recode_missing: &[String]) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != DATASET_HEADER {
        return Err(Error::DataFormat {
            line: 1,
            reason: format!("expected header t,y,x1,x2, got {}", got.join(",")),
        });
    }

    let is_missing = |field: &str| field.is_empty() || recode_missing.iter().any(|t| t == field);
    let parse_binary = |field: &str, what: &str, line: usize| -> Result<u8> {
        match field {
            "0" => Ok(0),
            "1" => Ok(1),
            _ => Err(Error::DataFormat {
                line,
                reason: format!("unparseable {what} value {field:?}"),
            }),
        }
    };

    let mut units = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(units.len() + 2);
        if record.len() != 4 {
            return Err(Error::DataFormat {
                line,
                reason: format!("expected 4 fields, got {}", record.len()),
            });
        }
        let t_field = &record[0];
        let y_field = &record[1];
        if is_missing(t_field) {
            return Err(Error::DataFormat {
                line,
                reason: "treatment is missing".into(),
            });
        }
        if is_missing(y_field) {
            return Err(Error::DataFormat {
                line,
                reason: "outcome is missing".into(),
            });
        }
        let t = parse_binary(t_field, "treatment", line)?;
        let y = parse_binary(y_field, "outcome", line)?;
        let x1 = if is_missing(&record[2]) {
            None
        } else {
            Some(parse_binary(&record[2], "x1", line)?)
        };
        let x2 = if is_missing(&record[3]) {
            None
        } else {
            Some(parse_binary(&record[3], "x2", line)?)
        };
        units.push(Unit::new(t, y, x1, x2));
    }
    validate_dataset(units)
}

/// Render a completed dataset back into the CSV wire format. Imputed mean
/// values appear as fractional numbers.
pub fn completed_to_csv(data: &CompletedDataset) -> String {
    let mut out = String::from("t,y,x1,x2\n");
    for u in data.units() {
        out.push_str(&format!("{},{},{},{}\n", u.t, u.y, u.x1, u.x2));
    }
    out
}

/// Write each completed dataset as `imputation_001.csv`, ... under `dir`.
pub fn write_completed_csvs(datasets: &[CompletedDataset], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(datasets.len());
    for (i, data) in datasets.iter().enumerate() {
        let path = dir.join(format!("imputation_{:03}.csv", i + 1));
        fs::write(&path, completed_to_csv(data))?;
        paths.push(path);
    }
    Ok(paths)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Render the metrics table in the fixed CSV schema. Deterministic: floats
/// print in shortest round-trip form with '.' decimals, rows follow the
/// report's method order.
pub fn metrics_csv(report: &RunReport) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.method,
            row.coefficient,
            fmt_opt(row.abs_bias),
            fmt_opt(row.mc_sd),
            fmt_opt(row.se),
            fmt_opt(row.coverage),
            fmt_opt(row.avg_ci_length),
            row.n_used,
            row.n_failed
        ));
    }
    out
}

/// Report output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Write the report under `dir`: the metrics table (`metrics.csv` and/or
/// `report.json`) plus a `config.json` echo of the run configuration.
pub fn emit_report(report: &RunReport, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Csv => {
                let path = dir.join("metrics.csv");
                fs::write(&path, metrics_csv(report))?;
                written.push(path);
            }
            ReportFormat::Json => {
                let path = dir.join("report.json");
                fs::write(&path, serde_json::to_string_pretty(report)?)?;
                written.push(path);
            }
        }
    }
    let config_path = dir.join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(&report.config)?)?;
    written.push(config_path);
    Ok(written)
}

/// Parse the 9-entry observed-cell table consumed by `check-identify`:
/// whitespace- or comma-separated reals in the canonical cell order.
pub fn parse_theta_file(contents: &str) -> Result<crate::types::ObservedProbs> {
    let values: Vec<f64> = contents
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>().map_err(|_| Error::DataFormat {
                line: 0,
                reason: format!("unparseable probability {s:?}"),
            })
        })
        .collect::<Result<_>>()?;
    if values.len() != 9 {
        return Err(Error::DataFormat {
            line: 0,
            reason: format!("expected 9 probabilities, got {}", values.len()),
        });
    }
    crate::types::ObservedProbs::new(std::array::from_fn(|i| values[i]))
}
