//! CSV ingestion and emission.
//!
//! A header row is required. Status is 1 for an event and 0 for a censored
//! row. A covariate column is numeric when every cell parses as a float and
//! categorical otherwise, unless a model's encoding says which it is.
//! Numbers are written with 17 significant digits.

use std::io::{Read, Write};

use crate::error::{HaftError, Result};
use crate::model::{Column, ColumnEncoding, CovariateTable, EncodingMap, Status, SurvivalDataset};

/// Full-precision text for a float: 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> HaftError {
    HaftError::InvalidData(format!("CSV: {e}"))
}

/// Header plus rows of raw cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(HaftError::InvalidData("CSV has no header row".to_string()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| HaftError::InvalidData(format!("cannot open {}: {e}", path.display())))?;
        Self::read(std::io::BufReader::new(file))
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HaftError::UnknownColumn(name.to_string()))
    }

    fn cells(&self, j: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |r| r[j].as_str())
    }

    fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.index(name)?;
        self.cells(j)
            .enumerate()
            .map(|(i, c)| {
                c.parse::<f64>().map_err(|_| {
                    HaftError::InvalidData(format!("column `{name}` row {}: `{c}` is not a number", i + 1))
                })
            })
            .collect()
    }

    /// Covariate table from every column except `exclude`. Column types
    /// follow `hints` where given and are inferred otherwise.
    pub fn covariates(&self, exclude: &[&str], hints: Option<&EncodingMap>) -> Result<CovariateTable> {
        let mut cols = Vec::new();
        for (j, name) in self.headers.iter().enumerate() {
            if exclude.contains(&name.as_str()) {
                continue;
            }
            let hint = hints.and_then(|h| h.columns.get(name));
            let parsed: Option<Vec<f64>> = self.cells(j).map(|c| c.parse::<f64>().ok()).collect();
            let col = match (hint, parsed) {
                (Some(ColumnEncoding::Categorical { .. }), _) | (None, None) => {
                    Column::Categorical(self.cells(j).map(str::to_string).collect())
                }
                (_, Some(v)) => Column::Numeric(v),
                (Some(ColumnEncoding::Numeric), None) => {
                    let bad = self.cells(j).position(|c| c.parse::<f64>().is_err()).unwrap_or(0);
                    return Err(HaftError::InvalidData(format!(
                        "column `{name}` row {}: `{}` is not a number",
                        bad + 1,
                        self.rows[bad][j]
                    )));
                }
            };
            cols.push((name.clone(), col));
        }
        CovariateTable::new(self.rows.len(), cols)
    }

    pub fn dataset(&self, time: &str, status: &str, hints: Option<&EncodingMap>) -> Result<SurvivalDataset> {
        let t = self.numeric(time)?;
        let s = self
            .numeric(status)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                if v == 0.0 || v == 1.0 {
                    Status::from_indicator(v as i64)
                } else {
                    Err(HaftError::InvalidData(format!(
                        "column `{status}` row {}: status must be 0 or 1, got {v}",
                        i + 1
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let cov = self.covariates(&[time, status], hints)?;
        SurvivalDataset::new(t, s, cov)
    }
}

fn write_err(e: impl std::fmt::Display) -> HaftError {
    HaftError::InvalidData(format!("cannot write output: {e}"))
}

/// Writes rows of already formatted cells under `headers`.
pub fn write_csv<W: Write>(out: W, headers: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(headers).map_err(write_err)?;
    for r in rows {
        w.write_record(r).map_err(write_err)?;
    }
    w.flush().map_err(write_err)
}

/// A dataset in the same layout [`RawTable::dataset`] reads.
pub fn write_dataset<W: Write>(out: W, data: &SurvivalDataset, time: &str, status: &str) -> Result<()> {
    let cov = data.covariates();
    let mut headers = vec![time.to_string(), status.to_string()];
    headers.extend(cov.names().iter().cloned());
    let rows: Vec<Vec<String>> = (0..data.len())
        .map(|i| {
            let mut r = vec![fmt_num(data.time()[i]), data.status()[i].indicator().to_string()];
            for name in cov.names() {
                r.push(match cov.get(name).expect("own column") {
                    Column::Numeric(v) => fmt_num(v[i]),
                    Column::Categorical(v) => v[i].clone(),
                });
            }
            r
        })
        .collect();
    write_csv(out, &headers, &rows)
}
