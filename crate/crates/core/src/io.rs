//! CSV ingestion, JSON model files and CSV reports.
//!
//! Floats are written with Rust's shortest round-trip formatting, so output
//! never depends on locale and parses back to the same bits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GamError, Result};
use crate::family::Family;
use crate::selection::FitPath;
use crate::sim::TableResult;
use crate::solver::CoefBlocks;
use crate::spline::BasisSpec;
use crate::two_step::{GamModel, ModelConfig, TwoStepResult};

pub const FORMAT_VERSION: u32 = 1;

/// A numeric table read from CSV.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    /// Rows by features, in header order with the response removed.
    pub x: DMatrix<f64>,
    pub y: Option<Vec<f64>>,
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let cell = raw.trim();
    let missing = cell.is_empty()
        || ["na", "nan", "null", "none"].contains(&cell.to_ascii_lowercase().as_str());
    if missing {
        return Err(GamError::Data {
            row,
            column: column.to_string(),
            message: format!("missing value '{cell}'"),
        });
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(GamError::Data {
            row,
            column: column.to_string(),
            message: format!("non-finite value {v}"),
        }),
        Err(_) => Err(GamError::Data {
            row,
            column: column.to_string(),
            message: format!("non-numeric value '{cell}'"),
        }),
    }
}

/// Read a headed numeric CSV. Rows are numbered from 1 (the first data row)
/// in error messages. When `response` is given it must name a column.
pub fn read_dataset<R: Read>(reader: R, response: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let response_idx = match response {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| GamError::config(format!("response column '{name}' not found")))?,
        ),
        None => None,
    };
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| Some(i) != response_idx)
        .collect();

    let mut values: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(GamError::Data {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for &i in &feature_idx {
            values.push(parse_cell(&record[i], row, &headers[i])?);
        }
        if let Some(i) = response_idx {
            y.push(parse_cell(&record[i], row, &headers[i])?);
        }
        rows += 1;
    }
    let x = DMatrix::from_row_slice(rows, feature_idx.len(), &values);
    Ok(Dataset {
        feature_names: feature_idx.iter().map(|&i| headers[i].clone()).collect(),
        x,
        y: response_idx.map(|_| y),
    })
}

pub fn read_dataset_file(path: &Path, response: Option<&str>) -> Result<Dataset> {
    read_dataset(File::open(path)?, response)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub config: ModelConfig,
}

/// Persisted fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub family: Family,
    pub response: String,
    pub feature_names: Vec<String>,
    pub specs: Vec<BasisSpec>,
    pub col_center: Vec<f64>,
    pub coef: CoefBlocks,
    pub screening_lambda: f64,
    pub adaptive_lambda: f64,
    pub gic: f64,
    pub selected: Vec<usize>,
    pub provenance: Provenance,
}

/// SHA-256 of the canonical JSON of everything that determines a fit.
pub fn config_hash(
    cfg: &ModelConfig,
    family: Family,
    response: &str,
    features: &[String],
    seed: u64,
) -> String {
    let canonical = serde_json::json!({
        "config": cfg,
        "family": family,
        "response": response,
        "features": features,
        "seed": seed,
    });
    Sha256::digest(canonical.to_string().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl ModelFile {
    pub fn new(
        model: &GamModel,
        result: &TwoStepResult,
        response: &str,
        feature_names: Vec<String>,
        cfg: &ModelConfig,
        seed: u64,
    ) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            family: model.family,
            response: response.to_string(),
            provenance: Provenance {
                seed,
                config_hash: config_hash(cfg, model.family, response, &feature_names, seed),
                config: cfg.clone(),
            },
            feature_names,
            specs: model.specs.clone(),
            col_center: model.col_center.clone(),
            coef: model.coef.clone(),
            screening_lambda: result.screening.lambda,
            adaptive_lambda: result.adaptive_lambda,
            gic: result.gic,
            selected: model.coef.support(),
        }
    }

    pub fn model(&self) -> GamModel {
        GamModel {
            family: self.family,
            specs: self.specs.clone(),
            col_center: self.col_center.clone(),
            coef: self.coef.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse a model file, rejecting unknown format versions before reading
    /// the rest.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if found != FORMAT_VERSION {
            return Err(GamError::Version {
                found,
                expected: FORMAT_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        f.write_all(self.to_json()?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Reorder the columns of `data` to the training feature order.
    pub fn align_features(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let idx: Vec<usize> = self
            .feature_names
            .iter()
            .map(|name| {
                data.feature_names
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| GamError::config(format!("feature column '{name}' is missing")))
            })
            .collect::<Result<_>>()?;
        let extra: Vec<&String> = data
            .feature_names
            .iter()
            .filter(|h| !self.feature_names.contains(h) && **h != self.response)
            .collect();
        if !extra.is_empty() {
            return Err(GamError::config(format!("unexpected columns: {extra:?}")));
        }
        Ok(data.x.select_columns(&idx))
    }
}

pub fn write_predictions<W: Write>(writer: W, eta: &[f64], mean: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row_id", "eta", "mean"])?;
    for (i, (e, m)) in eta.iter().zip(mean).enumerate() {
        w.write_record([i.to_string(), e.to_string(), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_path_csv<W: Write>(writer: W, path: &FitPath) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "index",
        "lambda",
        "deviance",
        "support_size",
        "gic",
        "kkt",
        "converged",
    ])?;
    for (i, e) in path.entries.iter().enumerate() {
        w.write_record([
            i.to_string(),
            e.lambda.to_string(),
            e.deviance.to_string(),
            e.support_size.to_string(),
            e.gic.to_string(),
            e.kkt.to_string(),
            e.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const TABLE_HEADER: [&str; 21] = [
    "scenario", "family", "n", "p", "s", "reps", "nv", "nv_sd", "nv_se", "tpr", "tpr_sd", "tpr_se",
    "fpr", "fpr_sd", "fpr_se", "pe", "pe_sd", "pe_se", "dev", "dev_sd", "dev_se",
];

pub fn write_table_csv<W: Write>(writer: W, tables: &[TableResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TABLE_HEADER)?;
    for t in tables {
        let s = &t.scenario;
        let mut rec = vec![
            s.name.clone(),
            s.family.to_string(),
            s.n.to_string(),
            s.p.to_string(),
            s.s.to_string(),
            t.reps.len().to_string(),
        ];
        for sum in [t.row.nv, t.row.tpr, t.row.fpr, t.row.pe, t.row.deviance] {
            rec.extend([sum.mean.to_string(), sum.sd.to_string(), sum.se.to_string()]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
