//! Conditional survival functions, quantiles and prediction intervals.
//!
//! With log T ~ N(μ, σ²), S(t | x) = Φ(−(log t − μ)/σ). Equivalently
//! S(t | x) = S₀(λ·t^α) with λ = e^{−μ/σ}, α = 1/σ and S₀(u) = Φ(−log u).

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, HaftError, Result};
use crate::model::FittedModel;
use crate::numkernel::{norm_quantile, norm_sf};

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(HaftError::Domain(format!("sigma must be positive and finite, got {sigma}")));
    }
    Ok(())
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(HaftError::Domain(format!("{name} must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// S(t) = P(T > t).
pub fn survival(t: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(HaftError::Domain(format!("survival time must be positive, got {t}")));
    }
    check_sigma(sigma)?;
    Ok(norm_sf((t.ln() - mu) / sigma))
}

/// The time t with S(t) = p.
pub fn survival_quantile(p: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_probability("survival probability", p)?;
    check_sigma(sigma)?;
    // Φ⁻¹(1 − p) = −Φ⁻¹(p), which avoids rounding 1 − p for small p
    Ok((mu - sigma * norm_quantile(p)?).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
}

impl PredictionInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Equal-tailed interval exp(μ ± zσ) with z = Φ⁻¹((1 + level)/2).
pub fn prediction_interval(mu: f64, sigma: f64, level: f64) -> Result<PredictionInterval> {
    check_probability("level", level)?;
    check_sigma(sigma)?;
    let z = norm_quantile(0.5 + 0.5 * level)?;
    Ok(PredictionInterval {
        lower: (mu - z * sigma).exp(),
        upper: (mu + z * sigma).exp(),
    })
}

/// One encoded covariate row: its location and scale design entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedRow {
    pub w: DVector<f64>,
    pub z: DVector<f64>,
}

impl EncodedRow {
    pub fn from_designs(w: &DMatrix<f64>, z: &DMatrix<f64>, row: usize) -> Result<Self> {
        check_dim("design rows", w.nrows(), z.nrows())?;
        if row >= w.nrows() {
            return Err(HaftError::Domain(format!(
                "row {row} out of range for {} rows",
                w.nrows()
            )));
        }
        Ok(Self {
            w: w.row(row).transpose(),
            z: z.row(row).transpose(),
        })
    }

    pub fn predictors(&self, model: &FittedModel) -> Result<(f64, f64)> {
        check_dim("location row length", model.p(), self.w.len())?;
        check_dim("scale row length", model.q(), self.z.len())?;
        let mu = self.w.dot(&model.params.beta);
        let sigma = (0.5 * self.z.dot(&model.params.gamma)).exp();
        Ok((mu, sigma))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub row: EncodedRow,
    pub mu: f64,
    pub sigma: f64,
}

pub fn survival_curve(row: &EncodedRow, model: &FittedModel, grid: &[f64]) -> Result<SurvivalCurve> {
    let (mu, sigma) = row.predictors(model)?;
    let survival = grid
        .iter()
        .map(|&t| survival(t, mu, sigma))
        .collect::<Result<Vec<_>>>()?;
    Ok(SurvivalCurve {
        times: grid.to_vec(),
        survival,
        row: row.clone(),
        mu,
        sigma,
    })
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || n < 2 {
        return Err(HaftError::Domain(format!(
            "log grid needs 0 < lo < hi and n >= 2, got lo={lo}, hi={hi}, n={n}"
        )));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i + 1 == n { hi } else { (a + step * i as f64).exp() })
        .collect())
}
