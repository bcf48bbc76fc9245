//! Versioned JSON persistence for fitted models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HaftError, Result};
use crate::model::{CovariateSpec, DatasetFingerprint, EncodingMap, FittedModel, HaftParams, TermList};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Censored,
    Uncensored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermStrings {
    pub location: String,
    pub scale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub vcov_clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub kind: FitKind,
    pub spec: TermStrings,
    pub encoding: EncodingMap,
    pub beta: Vec<NamedValue>,
    pub gamma: Vec<NamedValue>,
    pub loglik: f64,
    pub aic: f64,
    pub convergence: Convergence,
    pub vcov: Option<Vec<Vec<f64>>>,
    pub fingerprint: DatasetFingerprint,
}

fn named(names: &[String], values: &DVector<f64>) -> Vec<NamedValue> {
    names
        .iter()
        .zip(values.iter())
        .map(|(n, v)| NamedValue { name: n.clone(), value: *v })
        .collect()
}

impl ModelFile {
    pub fn from_model(model: &FittedModel) -> Result<Self> {
        if !(model.loglik.is_finite() && model.aic.is_finite()) {
            return Err(HaftError::Usage("only fitted models can be saved".to_string()));
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            kind: if model.censored_fit { FitKind::Censored } else { FitKind::Uncensored },
            spec: TermStrings {
                location: model.spec.location.to_string(),
                scale: model.spec.scale.to_string(),
            },
            encoding: model.encoding.clone(),
            beta: named(&model.w_names, &model.params.beta),
            gamma: named(&model.z_names, &model.params.gamma),
            loglik: model.loglik,
            aic: model.aic,
            convergence: Convergence {
                converged: model.converged,
                iterations: model.iterations,
                vcov_clipped: model.vcov_clipped,
            },
            vcov: model
                .vcov
                .as_ref()
                .map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect()),
            fingerprint: model.fingerprint.clone(),
        })
    }

    pub fn to_model(&self) -> Result<FittedModel> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HaftError::InvalidData(format!(
                "model file schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let spec = CovariateSpec::new(
            TermList::parse(&self.spec.location)?,
            TermList::parse(&self.spec.scale)?,
        );
        let beta = DVector::from_iterator(self.beta.len(), self.beta.iter().map(|v| v.value));
        let gamma = DVector::from_iterator(self.gamma.len(), self.gamma.iter().map(|v| v.value));
        let k = beta.len() + gamma.len();
        let vcov = match &self.vcov {
            None => None,
            Some(rows) => {
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(HaftError::InvalidData(format!("vcov must be {k}×{k}")));
                }
                Some(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
            }
        };
        Ok(FittedModel {
            params: HaftParams::new(beta, gamma)?,
            w_names: self.beta.iter().map(|v| v.name.clone()).collect(),
            z_names: self.gamma.iter().map(|v| v.name.clone()).collect(),
            spec,
            encoding: self.encoding.clone(),
            loglik: self.loglik,
            aic: self.aic,
            vcov,
            vcov_clipped: self.convergence.vcov_clipped,
            converged: self.convergence.converged,
            iterations: self.convergence.iterations,
            censored_fit: self.kind == FitKind::Censored,
            trace: Vec::new(),
            fingerprint: self.fingerprint.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("finite plain data serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HaftError::InvalidData(format!("model file: {e}")))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())
            .map_err(|e| HaftError::InvalidData(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HaftError::InvalidData(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
