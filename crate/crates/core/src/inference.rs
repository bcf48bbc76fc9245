//! Wald inference from the observed information.
//!
//! The information is the negative Hessian of the observed-data
//! log-likelihood at θ̂ = (β̂, γ̂), by central differences with steps
//! hⱼ = ∛ε·max(1, |θ̂ⱼ|), then symmetrised.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HaftError, Result};
use crate::fit::loglik_observed;
use crate::model::{DesignPair, FittedModel, HaftParams, Status, SurvivalDataset};
use crate::numkernel::norm_quantile;

/// Eigenvalue floor applied to a non-positive-definite information matrix.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Central-difference Hessian of `f` at `theta`.
pub fn fd_hessian<F: Fn(&DVector<f64>) -> f64>(f: F, theta: &DVector<f64>) -> DMatrix<f64> {
    let k = theta.len();
    let h: Vec<f64> = theta
        .iter()
        .map(|t| f64::EPSILON.cbrt() * t.abs().max(1.0))
        .collect();
    let f0 = f(theta);
    let shifted = |moves: &[(usize, f64)]| {
        let mut t = theta.clone();
        for &(j, d) in moves {
            t[j] += d;
        }
        f(&t)
    };
    let mut hess = DMatrix::zeros(k, k);
    for j in 0..k {
        let plus = shifted(&[(j, h[j])]);
        let minus = shifted(&[(j, -h[j])]);
        hess[(j, j)] = (plus - 2.0 * f0 + minus) / (h[j] * h[j]);
        for l in 0..j {
            let pp = shifted(&[(j, h[j]), (l, h[l])]);
            let pm = shifted(&[(j, h[j]), (l, -h[l])]);
            let mp = shifted(&[(j, -h[j]), (l, h[l])]);
            let mm = shifted(&[(j, -h[j]), (l, -h[l])]);
            let v = (pp - pm - mp + mm) / (4.0 * h[j] * h[l]);
            hess[(j, l)] = v;
            hess[(l, j)] = v;
        }
    }
    hess
}

/// Negative finite-difference Hessian of the observed-data log-likelihood
/// (equal to the complete-data one when nothing is censored).
pub fn observed_information(
    designs: &DesignPair,
    logtimes: &DVector<f64>,
    status: &[Status],
    params: &HaftParams,
) -> Result<DMatrix<f64>> {
    check_dim("status", logtimes.len(), status.len())?;
    check_dim("beta length", designs.p(), params.beta.len())?;
    check_dim("gamma length", designs.q(), params.gamma.len())?;
    let p = designs.p();
    let f = |theta: &DVector<f64>| {
        let candidate = HaftParams::from_vector(theta, p);
        loglik_observed(designs, &candidate, logtimes, status).unwrap_or(f64::NAN)
    };
    let hess = fd_hessian(f, &params.to_vector());
    if hess.iter().any(|v| !v.is_finite()) {
        return Err(HaftError::Estimation(
            "log-likelihood Hessian has non-finite entries".to_string(),
        ));
    }
    let info = -hess;
    Ok((&info + info.transpose()) * 0.5)
}

/// Inverse of a symmetric information matrix via its eigen-decomposition.
/// Returns the covariance and whether eigenvalues had to be clipped.
pub fn invert_information(info: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(info.clone());
    let clipped = eig.eigenvalues.iter().any(|l| !(*l > EIGEN_FLOOR));
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / l.max(EIGEN_FLOOR));
    let v = &eig.eigenvectors;
    let cov = v * DMatrix::from_diagonal(&inv_vals) * v.transpose();
    ((&cov + cov.transpose()) * 0.5, clipped)
}

/// Fills `vcov` (and the clipping flag) on a fitted model.
pub fn attach_covariance(
    mut model: FittedModel,
    designs: &DesignPair,
    logtimes: &DVector<f64>,
    status: &[Status],
) -> Result<FittedModel> {
    let info = observed_information(designs, logtimes, status, &model.params)?;
    let (cov, clipped) = invert_information(&info);
    model.vcov = Some(cov);
    model.vcov_clipped = clipped;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Location,
    Scale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldRow {
    pub name: String,
    pub part: Part,
    pub estimate: f64,
    pub std_error: f64,
    pub z_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldSummary {
    pub confidence_level: f64,
    pub rows: Vec<WaldRow>,
}

pub fn wald_summary(model: &FittedModel, level: f64) -> Result<WaldSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(HaftError::Domain(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let vcov = model
        .vcov
        .as_ref()
        .ok_or_else(|| HaftError::Unavailable("model has no covariance matrix".to_string()))?;
    let multiplier = norm_quantile(1.0 - (1.0 - level) / 2.0)?;
    let theta = model.params.to_vector();
    let p = model.p();
    let rows = model
        .parameter_names()
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let se = vcov[(j, j)].max(0.0).sqrt();
            let est = theta[j];
            WaldRow {
                name,
                part: if j < p { Part::Location } else { Part::Scale },
                estimate: est,
                std_error: se,
                z_value: est / se,
                ci_lower: est - multiplier * se,
                ci_upper: est + multiplier * se,
            }
        })
        .collect();
    Ok(WaldSummary {
        confidence_level: level,
        rows,
    })
}

/// −2ℓ + 2(p + q).
pub fn aic(model: &FittedModel) -> f64 {
    -2.0 * model.loglik + 2.0 * model.n_params() as f64
}

/// Log-likelihood of the raw times rather than the log-times: each event
/// contributes the Jacobian −log tᵢ, censored rows are unchanged.
pub fn time_scale_loglik(loglik: f64, data: &SurvivalDataset) -> f64 {
    let jacobian: f64 = data
        .time()
        .iter()
        .zip(data.status())
        .filter(|(_, s)| s.is_event())
        .map(|(t, _)| t.ln())
        .sum();
    loglik - jacobian
}

/// AIC computed from [`time_scale_loglik`].
pub fn time_scale_aic(model: &FittedModel, data: &SurvivalDataset) -> f64 {
    -2.0 * time_scale_loglik(model.loglik, data) + 2.0 * model.n_params() as f64
}
