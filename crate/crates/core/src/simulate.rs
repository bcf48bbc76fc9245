//! Synthetic HAFT data with optional right-censoring.
//!
//! Random numbers come from ChaCha8 seeded with `seed_from_u64(seed)`. Every
//! consumer gets its own stream of that generator (`set_stream`): stream 0
//! drives the survival noise, stream 1 the censoring noise and stream 2 + j
//! the j-th covariate column. Each stream is read one 64-bit word per draw
//! and turned into a uniform on (0, 1) as ((x >> 11) + 0.5)·2⁻⁵³; normal draws
//! are Φ⁻¹ of that uniform. Adding a column or switching censoring on
//! therefore leaves every other column's draws unchanged.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HaftError, Result};
use crate::model::{
    predictors, Column, ColumnEncoding, CovariateSpec, CovariateTable, EncodingMap, HaftParams, Status,
    SurvivalDataset,
};
use crate::numkernel::norm_quantile;
use crate::residuals::open_unit;

const SURVIVAL_STREAM: u64 = 0;
const CENSORING_STREAM: u64 = 1;
const FIRST_COLUMN_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    /// 0/1 numeric column.
    Bernoulli { p: f64 },
    /// Levels with their probabilities. Design columns follow the sorted
    /// level order with the first sorted level as reference.
    Categorical { levels: Vec<String>, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGen {
    pub name: String,
    #[serde(flatten)]
    pub generator: Generator,
}

/// Terms and true coefficients for one HAFT component. Coefficients are in
/// design-column order: intercept, main effects, then interactions and
/// squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaftTruth {
    pub location: String,
    pub scale: String,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl HaftTruth {
    pub fn covariate_spec(&self) -> Result<CovariateSpec> {
        CovariateSpec::parse(&self.location, &self.scale)
    }

    pub fn params(&self) -> Result<HaftParams> {
        HaftParams::new(DVector::from_vec(self.beta.clone()), DVector::from_vec(self.gamma.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Censoring {
    None,
    /// Administrative censoring at a fixed time (time scale, not log).
    Fixed { time: f64 },
    Haft(HaftTruth),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub covariates: Vec<CovariateGen>,
    pub survival: HaftTruth,
    pub censoring: Censoring,
}

/// Latent log-times behind a simulated dataset; `log_c` is `None` without
/// censoring.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTruth {
    pub log_r: Vec<f64>,
    pub log_c: Option<Vec<f64>>,
}

fn invalid(path: String, msg: &str) -> HaftError {
    HaftError::InvalidSpec(format!("{path}: {msg}"))
}

fn check_truth(path: &str, truth: &HaftTruth, enc: &EncodingMap, table: &CovariateTable) -> Result<()> {
    let spec = truth
        .covariate_spec()
        .map_err(|e| invalid(path.to_string(), &e.to_string()))?;
    spec.validate(table)
        .map_err(|e| invalid(path.to_string(), &e.to_string()))?;
    for (part, terms, coef, field) in [
        ("location", &spec.location, &truth.beta, "beta"),
        ("scale", &spec.scale, &truth.gamma, "gamma"),
    ] {
        let (_, names) = enc.encode(table, terms)?;
        if names.len() != coef.len() {
            return Err(invalid(
                format!("{path}.{field}"),
                &format!(
                    "{part} design has {} columns {:?}, got {} coefficients",
                    names.len(),
                    names,
                    coef.len()
                ),
            ));
        }
        if coef.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("{path}.{field}"), "coefficients must be finite"));
        }
    }
    Ok(())
}

impl SimSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)
            .map_err(|e| HaftError::InvalidSpec(format!("simulation config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// Encoding implied by the generators: declared categorical levels,
    /// sorted, independent of which levels a particular draw contains.
    pub fn encoding(&self) -> EncodingMap {
        let columns: BTreeMap<String, ColumnEncoding> = self
            .covariates
            .iter()
            .map(|c| {
                let enc = match &c.generator {
                    Generator::Categorical { levels, .. } => {
                        let mut levels = levels.clone();
                        levels.sort_unstable();
                        ColumnEncoding::Categorical { levels }
                    }
                    _ => ColumnEncoding::Numeric,
                };
                (c.name.clone(), enc)
            })
            .collect();
        EncodingMap { columns }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n".into(), "must be at least 1"));
        }
        for (j, c) in self.covariates.iter().enumerate() {
            let path = format!("covariates[{j}]");
            if c.name.trim().is_empty() {
                return Err(invalid(format!("{path}.name"), "must be non-empty"));
            }
            if self.covariates[..j].iter().any(|d| d.name == c.name) {
                return Err(invalid(format!("{path}.name"), "duplicate column name"));
            }
            match &c.generator {
                Generator::Normal { mean, sd } => {
                    if !mean.is_finite() || !(*sd > 0.0 && sd.is_finite()) {
                        return Err(invalid(path, "normal needs finite mean and positive sd"));
                    }
                }
                Generator::Uniform { low, high } => {
                    if !(low.is_finite() && high.is_finite() && low < high) {
                        return Err(invalid(path, "uniform needs finite low < high"));
                    }
                }
                Generator::Bernoulli { p } => {
                    if !(0.0..=1.0).contains(p) {
                        return Err(invalid(format!("{path}.p"), "must lie in [0, 1]"));
                    }
                }
                Generator::Categorical { levels, probs } => {
                    if levels.len() < 2 || levels.len() != probs.len() {
                        return Err(invalid(
                            format!("{path}.probs"),
                            "need at least two levels and one probability per level",
                        ));
                    }
                    let mut sorted = levels.clone();
                    sorted.sort_unstable();
                    sorted.dedup();
                    if sorted.len() != levels.len() {
                        return Err(invalid(format!("{path}.levels"), "duplicate level"));
                    }
                    let total: f64 = probs.iter().sum();
                    if probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                        return Err(invalid(
                            format!("{path}.probs"),
                            "must be non-negative and sum to 1",
                        ));
                    }
                }
            }
        }
        // a one-row draw gives the right column types for term checking
        let table = self.covariate_table(&mut self.column_streams(), 1)?;
        let enc = self.encoding();
        check_truth("survival", &self.survival, &enc, &table)?;
        match &self.censoring {
            Censoring::None => {}
            Censoring::Fixed { time } => {
                if !(*time > 0.0 && time.is_finite()) {
                    return Err(invalid("censoring.time".into(), "must be positive and finite"));
                }
            }
            Censoring::Haft(truth) => check_truth("censoring", truth, &enc, &table)?,
        }
        Ok(())
    }

    fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn column_streams(&self) -> Vec<ChaCha8Rng> {
        (0..self.covariates.len())
            .map(|j| self.stream(FIRST_COLUMN_STREAM + j as u64))
            .collect()
    }

    fn covariate_table(&self, streams: &mut [ChaCha8Rng], n: usize) -> Result<CovariateTable> {
        let mut cols = Vec::with_capacity(self.covariates.len());
        for (c, rng) in self.covariates.iter().zip(streams.iter_mut()) {
            let col = match &c.generator {
                Generator::Normal { mean, sd } => Column::Numeric(
                    (0..n)
                        .map(|_| norm_quantile(open_unit(rng)).map(|z| mean + sd * z))
                        .collect::<Result<_>>()?,
                ),
                Generator::Uniform { low, high } => {
                    Column::Numeric((0..n).map(|_| low + (high - low) * open_unit(rng)).collect())
                }
                Generator::Bernoulli { p } => Column::Numeric(
                    (0..n).map(|_| if open_unit(rng) < *p { 1.0 } else { 0.0 }).collect(),
                ),
                Generator::Categorical { levels, probs } => Column::Categorical(
                    (0..n)
                        .map(|_| {
                            let u = open_unit(rng);
                            let mut acc = 0.0;
                            for (lvl, p) in levels.iter().zip(probs) {
                                acc += p;
                                if u < acc {
                                    return lvl.clone();
                                }
                            }
                            levels.last().expect("validated").clone()
                        })
                        .collect(),
                ),
            };
            cols.push((c.name.clone(), col));
        }
        CovariateTable::new(n, cols)
    }

    /// The same spec with another seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

fn draw_log_times(
    truth: &HaftTruth,
    enc: &EncodingMap,
    table: &CovariateTable,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let spec = truth.covariate_spec()?;
    let (w, _) = enc.encode(table, &spec.location)?;
    let (z, _) = enc.encode(table, &spec.scale)?;
    let (mu, sigma) = predictors(&w, &z, &truth.params()?)?;
    (0..table.n_rows())
        .map(|i| Ok(mu[i] + sigma[i] * norm_quantile(open_unit(rng))?))
        .collect()
}

/// Draws covariates, log R ~ N(W'β, exp(Z'γ)) and log C per the censoring
/// option, and returns time = exp(min(log R, log C)) with status 1{R < C}.
pub fn simulate(spec: &SimSpec) -> Result<(SurvivalDataset, LatentTruth)> {
    spec.validate()?;
    let table = spec.covariate_table(&mut spec.column_streams(), spec.n)?;
    let enc = spec.encoding();
    let log_r = draw_log_times(&spec.survival, &enc, &table, &mut spec.stream(SURVIVAL_STREAM))?;
    let log_c = match &spec.censoring {
        Censoring::None => None,
        Censoring::Fixed { time } => Some(vec![time.ln(); spec.n]),
        Censoring::Haft(truth) => Some(draw_log_times(truth, &enc, &table, &mut spec.stream(CENSORING_STREAM))?),
    };
    let (time, status): (Vec<f64>, Vec<Status>) = match &log_c {
        None => (log_r.iter().map(|r| r.exp()).collect(), vec![Status::Event; spec.n]),
        Some(c) => log_r
            .iter()
            .zip(c)
            .map(|(&r, &c)| {
                if r < c {
                    (r.exp(), Status::Event)
                } else {
                    (c.exp(), Status::Censored)
                }
            })
            .unzip(),
    };
    if time.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(HaftError::InvalidSpec(
            "simulated times overflow or underflow; check the coefficient scale".to_string(),
        ));
    }
    let data = SurvivalDataset::new(time, status, table)?;
    Ok((data, LatentTruth { log_r, log_c }))
}

/// Fraction of censored rows.
pub fn censoring_rate(data: &SurvivalDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(HaftError::InvalidData("censoring rate of an empty dataset".to_string()));
    }
    Ok(data.n_censored() as f64 / data.len() as f64)
}
