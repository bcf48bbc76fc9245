//! Censoring-aware goodness-of-fit residuals.
//!
//! Both the survival time R and the censoring time C get a HAFT model; the
//! censoring model is fitted exactly like the survival model with the status
//! indicator flipped. For an observed log-time y with indicator δ the joint
//! density of (Y, δ) is
//!
//! ```text
//! δ = 1:  f_R(y)·(1 − F_C(y))
//! δ = 0:  f_C(y)·(1 − F_R(y))
//! ```
//!
//! Normalizing either over y gives the conditional CDF P(Y ≤ y | δ, x), and
//! its normal quantile is the PIT residual. Under correctly specified models
//! these residuals are standard normal.
//!
//! Hillis residuals instead impute each censored log-time from the fitted
//! truncated normal N(μ, σ²) on (y, ∞) and standardize.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HaftError, Result};
use crate::fit::{fit_dataset, FitControl};
use crate::model::{CovariateSpec, FittedModel, Status, SurvivalDataset};
use crate::numkernel::{integrate, norm_cdf, norm_pdf, norm_quantile, norm_sf, QuadratureSpec};
use crate::par::{try_map_range, Execution};

/// Two-sided 5% normal critical value, Φ⁻¹(0.975).
pub const OUTLIER_THRESHOLD: f64 = 1.959_963_984_540_054;

/// CDF values are kept this far from 0 and 1 before the quantile map.
pub const CDF_CLAMP: f64 = 1e-15;

/// A HAFT model for the censoring time, fitted with flipped status.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoringModel(pub FittedModel);

impl CensoringModel {
    /// Same location terms as the survival model; main effects of those
    /// terms on the scale.
    pub fn default_spec(survival_spec: &CovariateSpec) -> CovariateSpec {
        CovariateSpec::new(
            survival_spec.location.clone(),
            survival_spec.location.main_effects(),
        )
    }

    pub fn fit(data: &SurvivalDataset, spec: &CovariateSpec, control: &FitControl) -> Result<Self> {
        let flipped = data.with_flipped_status();
        let (_, model) = fit_dataset(&flipped, spec, control)?;
        Ok(Self(model))
    }

    pub fn model(&self) -> &FittedModel {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowModels {
    pub mu_r: f64,
    pub sigma_r: f64,
    pub mu_c: f64,
    pub sigma_c: f64,
}

impl RowModels {
    pub fn new(mu_r: f64, sigma_r: f64, mu_c: f64, sigma_c: f64) -> Result<Self> {
        for s in [sigma_r, sigma_c] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(HaftError::Domain(format!("sigma must be positive and finite, got {s}")));
            }
        }
        if !(mu_r.is_finite() && mu_c.is_finite()) {
            return Err(HaftError::Domain("location must be finite".to_string()));
        }
        Ok(Self { mu_r, sigma_r, mu_c, sigma_c })
    }

    /// P(δ | x) in closed form: δ = 1 is P(R < C).
    pub fn status_probability(&self, status: Status) -> f64 {
        let d = (self.mu_c - self.mu_r) / self.sigma_r.hypot(self.sigma_c);
        match status {
            Status::Event => norm_cdf(d),
            Status::Censored => norm_sf(d),
        }
    }
}

/// Unnormalized density of (Y = y, δ) on the log-time scale.
pub fn observed_density(y: f64, status: Status, m: &RowModels) -> f64 {
    let (own_mu, own_sigma, other_mu, other_sigma) = match status {
        Status::Event => (m.mu_r, m.sigma_r, m.mu_c, m.sigma_c),
        Status::Censored => (m.mu_c, m.sigma_c, m.mu_r, m.sigma_r),
    };
    norm_pdf((y - own_mu) / own_sigma) / own_sigma * norm_sf((y - other_mu) / other_sigma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedCdf {
    /// Mass below y, relative to `scale`.
    pub lower: f64,
    /// Mass above y, relative to `scale`.
    pub upper: f64,
    /// Normalizing constant ∫ density over the whole line, by quadrature.
    pub denominator: f64,
    scale: f64,
}

impl ObservedCdf {
    pub fn value(&self) -> f64 {
        self.lower / (self.lower + self.upper)
    }

    /// Φ⁻¹ of the clamped CDF, using whichever tail is smaller so that
    /// upper-tail values keep their precision.
    pub fn normal_score(&self) -> Result<f64> {
        let total = self.lower + self.upper;
        if !(total > 0.0 && total.is_finite()) {
            return Err(HaftError::Quadrature { estimate: total * self.scale, error: f64::NAN });
        }
        if self.lower <= self.upper {
            norm_quantile((self.lower / total).clamp(CDF_CLAMP, 0.5))
        } else {
            Ok(-norm_quantile((self.upper / total).clamp(CDF_CLAMP, 0.5))?)
        }
    }
}

/// P(Y ≤ y | δ, x) by quadrature on the standardized survival scale
/// u = (y − μ_R)/σ_R, split at y and around the peaks of both factors.
pub fn observed_cdf(y: f64, status: Status, m: &RowModels, quad: &QuadratureSpec) -> Result<ObservedCdf> {
    if !y.is_finite() {
        return Err(HaftError::Domain(format!("log-time must be finite, got {y}")));
    }
    let closed = m.status_probability(status);
    let scale = if closed > 1e-300 { closed } else { 1.0 };
    let sr = m.sigma_r;
    let integrand = |u: f64| observed_density(m.mu_r + sr * u, status, m) * sr / scale;

    let uy = (y - m.mu_r) / sr;
    let uc = (m.mu_c - m.mu_r) / sr;
    let wc = m.sigma_c / sr;
    let mut breaks = vec![uy, 0.0, uc];
    for k in [-8.0, 8.0] {
        breaks.push(k);
        breaks.push(uc + k * wc);
    }
    breaks.retain(|b| b.is_finite());
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut edges = Vec::with_capacity(breaks.len() + 2);
    edges.push(f64::NEG_INFINITY);
    edges.extend(breaks);
    edges.push(f64::INFINITY);

    let (mut lower, mut upper) = (0.0, 0.0);
    for pair in edges.windows(2) {
        let piece = integrate(integrand, pair[0], pair[1], quad)?;
        if pair[1] <= uy {
            lower += piece;
        } else {
            upper += piece;
        }
    }
    Ok(ObservedCdf {
        lower,
        upper,
        denominator: (lower + upper) * scale,
        scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMethod {
    Pit,
    Hillis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub method: ResidualMethod,
    pub residuals: Vec<f64>,
    pub status: Vec<Status>,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub outlier_flags: Vec<bool>,
}

impl ResidualReport {
    pub fn new(method: ResidualMethod, residuals: Vec<f64>, status: Vec<Status>) -> Result<Self> {
        if residuals.len() != status.len() {
            return Err(HaftError::DimensionMismatch {
                context: "residual status",
                expected: residuals.len(),
                found: status.len(),
            });
        }
        if residuals.iter().any(|r| !r.is_finite()) {
            return Err(HaftError::Estimation("non-finite residual".to_string()));
        }
        let (ks_statistic, ks_pvalue) = ks_normal(&residuals)?;
        let outlier_flags = residuals.iter().map(|r| r.abs() > OUTLIER_THRESHOLD).collect();
        Ok(Self { method, residuals, status, ks_statistic, ks_pvalue, outlier_flags })
    }

    /// Outliers among events and among censored rows.
    pub fn outlier_counts(&self) -> (usize, usize) {
        let mut events = 0;
        let mut censored = 0;
        for (flag, s) in self.outlier_flags.iter().zip(&self.status) {
            if *flag {
                match s {
                    Status::Event => events += 1,
                    Status::Censored => censored += 1,
                }
            }
        }
        (events, censored)
    }
}

fn check_same_rows(data: &SurvivalDataset, model: &FittedModel, what: &str) -> Result<()> {
    let fp = data.covariates().fingerprint();
    if model.fingerprint.rows != data.len()
        || (!model.fingerprint.column_hash.is_empty() && model.fingerprint != fp)
    {
        return Err(HaftError::Usage(format!(
            "the {what} model was not fitted on this dataset"
        )));
    }
    Ok(())
}

pub fn pit_residuals(
    data: &SurvivalDataset,
    surv: &FittedModel,
    cens: &CensoringModel,
    quad: &QuadratureSpec,
) -> Result<ResidualReport> {
    pit_residuals_with(data, surv, cens, quad, Execution::default())
}

/// [`pit_residuals`] with an explicit execution mode; rows are independent.
pub fn pit_residuals_with(
    data: &SurvivalDataset,
    surv: &FittedModel,
    cens: &CensoringModel,
    quad: &QuadratureSpec,
    exec: Execution,
) -> Result<ResidualReport> {
    check_same_rows(data, surv, "survival")?;
    check_same_rows(data, cens.model(), "censoring")?;
    quad.validate()?;
    let (mu_r, sigma_r) = surv.predictors(data.covariates())?;
    let (mu_c, sigma_c) = cens.model().predictors(data.covariates())?;
    let y = data.log_times();
    let status = data.status();
    let residuals = try_map_range(data.len(), exec, |i| {
        let m = RowModels::new(mu_r[i], sigma_r[i], mu_c[i], sigma_c[i])?;
        observed_cdf(y[i], status[i], &m, quad)?.normal_score()
    })?;
    ResidualReport::new(ResidualMethod::Pit, residuals, status.to_vec())
}

/// Uniform on (0, 1) from the top 53 bits of one 64-bit draw.
pub(crate) fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standardized draw from N(0, 1) truncated to (a, ∞) by inversion, with
/// `v` uniform on (0, 1). When Φ(−a)·v underflows the exponential tail
/// approximation a − log(v)/a is used.
pub fn truncated_normal_draw(a: f64, v: f64) -> Result<f64> {
    let p = norm_sf(a) * v;
    if p >= f64::MIN_POSITIVE {
        // rounding in the quantile can land a hair below the truncation point
        Ok((-norm_quantile(p)?).max(a))
    } else {
        Ok(a - v.ln() / a)
    }
}

/// Imputation residuals: (y − μ)/σ for events, a standardized truncated
/// normal draw above (y − μ)/σ for censored rows. One uniform per censored
/// row, in row order, from ChaCha8 seeded with `seed`.
pub fn hillis_residuals(data: &SurvivalDataset, surv: &FittedModel, seed: u64) -> Result<Vec<f64>> {
    check_same_rows(data, surv, "survival")?;
    let (mu, sigma) = surv.predictors(data.covariates())?;
    let y = data.log_times();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(data.len());
    for (i, s) in data.status().iter().enumerate() {
        let a = (y[i] - mu[i]) / sigma[i];
        out.push(match s {
            Status::Event => a,
            Status::Censored => truncated_normal_draw(a, open_unit(&mut rng))?,
        });
    }
    Ok(out)
}

pub fn hillis_report(data: &SurvivalDataset, surv: &FittedModel, seed: u64) -> Result<ResidualReport> {
    let r = hillis_residuals(data, surv, seed)?;
    ResidualReport::new(ResidualMethod::Hillis, r, data.status().to_vec())
}

/// Survival function of the Kolmogorov distribution, P(K > λ).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Jacobi-transformed series, fast for small λ
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (m * m * c).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// One-sample Kolmogorov–Smirnov test against N(0, 1). The p-value uses the
/// asymptotic distribution at λ = (√n + 0.12 + 0.11/√n)·D.
pub fn ks_normal(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 8 {
        return Err(HaftError::TooFewObservations { needed: 8, got: n });
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(HaftError::Domain("KS input contains NaN".to_string()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = norm_cdf(x);
            ((i + 1) as f64 / nf - f).max(f - i as f64 / nf)
        })
        .fold(0.0, f64::max);
    let rn = nf.sqrt();
    Ok((d, kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d)))
}
