//! Maximum-likelihood estimation.
//!
//! Complete data: alternate the exact conditional maximisers, a weighted
//! least-squares update of β with weights 1/σᵢ² and a Gamma log-link GLM
//! update of γ on the squared residuals Uᵢ = (Rᵢ − Wᵢ'β)².
//!
//! Right-censored data: ECM. The E-step replaces each censored log-time by
//! its conditional moments under N(μᵢ, σᵢ²) truncated to (Yᵢ, ∞); the two
//! CM-steps are the same WLS and Gamma GLM updates applied to those moments.
//!
//! Both loops stop on relative change of the monitored log-likelihood,
//! |ℓₜ₊₁ − ℓₜ| ≤ tol·max(|ℓₜ|, 1).

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, HaftError, Result};
use crate::inference;
use crate::model::{
    build_designs, predictors, CovariateSpec, DesignPair, FittedModel, HaftParams, Status,
    SurvivalDataset,
};
use crate::numkernel::{
    fit_gamma_loglink, inv_mills_f, least_squares, log_norm_sf, solve_wls, trunc_variance_factor,
    WlsProblem, LN_SQRT_2PI,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitControl {
    pub tol: f64,
    pub max_iter: usize,
    pub inner_glm_tol: f64,
    pub inner_glm_max_iter: usize,
}

impl Default for FitControl {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            inner_glm_tol: 1e-10,
            inner_glm_max_iter: 50,
        }
    }
}

impl FitControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.inner_glm_tol > 0.0)
            || self.max_iter == 0
            || self.inner_glm_max_iter == 0
        {
            return Err(HaftError::Domain(format!(
                "fit control values must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Conditional first and second moments of the log-survival times.
#[derive(Debug, Clone, PartialEq)]
pub struct EStepMoments {
    pub r_tilde: DVector<f64>,
    pub s_tilde: DVector<f64>,
    /// s̃ᵢ − r̃ᵢ², computed without cancellation; zero for observed rows.
    pub cond_var: DVector<f64>,
}

#[inline]
fn event_loglik(y: f64, mu: f64, log_var: f64) -> f64 {
    let r = y - mu;
    -0.5 * (r * r * (-log_var).exp() + log_var) - LN_SQRT_2PI
}

#[inline]
fn censored_loglik(y: f64, mu: f64, sigma: f64) -> f64 {
    log_norm_sf((y - mu) / sigma)
}

fn check_inputs(designs: &DesignPair, params: &HaftParams, logtimes: &DVector<f64>) -> Result<()> {
    check_dim("log-times", designs.n_rows(), logtimes.len())?;
    check_dim("beta length", designs.p(), params.beta.len())?;
    check_dim("gamma length", designs.q(), params.gamma.len())
}

/// Gaussian log-likelihood of fully observed log-times, including the
/// −(n/2)·log(2π) constant.
pub fn loglik_complete(designs: &DesignPair, params: &HaftParams, logtimes: &DVector<f64>) -> Result<f64> {
    check_inputs(designs, params, logtimes)?;
    let mu = &designs.w * &params.beta;
    let eta = &designs.z * &params.gamma;
    Ok((0..logtimes.len())
        .map(|i| event_loglik(logtimes[i], mu[i], eta[i]))
        .sum())
}

/// Right-censored log-likelihood: log-densities for events plus log
/// survival probabilities for censored rows.
pub fn loglik_observed(
    designs: &DesignPair,
    params: &HaftParams,
    logtimes: &DVector<f64>,
    status: &[Status],
) -> Result<f64> {
    check_inputs(designs, params, logtimes)?;
    check_dim("status", logtimes.len(), status.len())?;
    let mu = &designs.w * &params.beta;
    let eta = &designs.z * &params.gamma;
    Ok((0..logtimes.len())
        .map(|i| match status[i] {
            Status::Event => event_loglik(logtimes[i], mu[i], eta[i]),
            Status::Censored => censored_loglik(logtimes[i], mu[i], (0.5 * eta[i]).exp()),
        })
        .sum())
}

pub fn e_step(
    designs: &DesignPair,
    params: &HaftParams,
    logtimes: &DVector<f64>,
    status: &[Status],
) -> Result<EStepMoments> {
    check_inputs(designs, params, logtimes)?;
    check_dim("status", logtimes.len(), status.len())?;
    let (mu, sigma) = predictors(&designs.w, &designs.z, params)?;
    moments(&mu, &sigma, logtimes, status)
}

fn moments(
    mu: &DVector<f64>,
    sigma: &DVector<f64>,
    logtimes: &DVector<f64>,
    status: &[Status],
) -> Result<EStepMoments> {
    let n = logtimes.len();
    let mut r_tilde = DVector::zeros(n);
    let mut s_tilde = DVector::zeros(n);
    let mut cond_var = DVector::zeros(n);
    for i in 0..n {
        let y = logtimes[i];
        match status[i] {
            Status::Event => {
                r_tilde[i] = y;
                s_tilde[i] = y * y;
            }
            Status::Censored => {
                let a = (y - mu[i]) / sigma[i];
                let r = mu[i] + sigma[i] * inv_mills_f(a)?;
                let v = sigma[i] * sigma[i] * trunc_variance_factor(a)?;
                r_tilde[i] = r;
                cond_var[i] = v;
                s_tilde[i] = v + r * r;
            }
        }
    }
    Ok(EStepMoments {
        r_tilde,
        s_tilde,
        cond_var,
    })
}

fn intercept_column(z: &DMatrix<f64>) -> Option<usize> {
    (0..z.ncols()).find(|&j| z.column(j).iter().all(|v| *v == 1.0))
}

/// Starting values: OLS for β treating every time as observed, and the
/// log mean squared residual in the scale intercept (zero elsewhere).
pub fn init_params(designs: &DesignPair, logtimes: &DVector<f64>) -> Result<HaftParams> {
    check_dim("log-times", designs.n_rows(), logtimes.len())?;
    let beta = least_squares(&designs.w, logtimes)?;
    let resid = logtimes - &designs.w * &beta;
    let scale = logtimes.amax().max(1.0);
    if resid.amax() <= 64.0 * f64::EPSILON * scale {
        return Err(HaftError::UnboundedLikelihood(
            "the location model fits every log-time exactly".to_string(),
        ));
    }
    let mut gamma = DVector::zeros(designs.q());
    if let Some(j) = intercept_column(&designs.z) {
        let mse = resid.norm_squared() / logtimes.len() as f64;
        gamma[j] = mse.ln();
    }
    HaftParams::new(beta, gamma)
}

fn check_sizes(designs: &DesignPair) -> Result<()> {
    let needed = designs.p().max(designs.q());
    if designs.n_rows() < needed {
        return Err(HaftError::TooFewObservations {
            needed,
            got: designs.n_rows(),
        });
    }
    Ok(())
}

/// One conditional-maximisation sweep: β by WLS on r̃ with weights 1/σ²,
/// then γ by the Gamma GLM on Ũᵢ = Var(Rᵢ) + (r̃ᵢ − Wᵢ'β)², warm-started.
fn cm_sweep(
    designs: &DesignPair,
    params: &HaftParams,
    logtimes: &DVector<f64>,
    status: Option<&[Status]>,
    control: &FitControl,
) -> Result<HaftParams> {
    let (mu, sigma) = predictors(&designs.w, &designs.z, params)?;
    let (target, extra) = match status {
        Some(status) => {
            let m = moments(&mu, &sigma, logtimes, status)?;
            (m.r_tilde, Some(m.cond_var))
        }
        None => (logtimes.clone(), None),
    };
    let weights = sigma.map(|s| 1.0 / (s * s));
    let beta = solve_wls(&WlsProblem::new(designs.w.clone(), target.clone(), weights)?)?;
    let fitted = &designs.w * &beta;
    let mut u = DVector::from_iterator(
        target.len(),
        target.iter().zip(fitted.iter()).map(|(r, m)| (r - m) * (r - m)),
    );
    if let Some(v) = extra {
        u += v;
    }
    let scale = target.amax().max(1.0);
    let round_off = (64.0 * f64::EPSILON * scale).powi(2);
    if u.iter().all(|v| *v <= round_off) {
        return Err(HaftError::UnboundedLikelihood(
            "the location model fits every log-time exactly".to_string(),
        ));
    }
    let gfit = fit_gamma_loglink(
        &u,
        &designs.z,
        &params.gamma,
        control.inner_glm_tol,
        control.inner_glm_max_iter,
    )?;
    HaftParams::new(beta, gfit.gamma)
}

fn objective(
    designs: &DesignPair,
    params: &HaftParams,
    logtimes: &DVector<f64>,
    status: Option<&[Status]>,
) -> Result<f64> {
    match status {
        Some(s) => loglik_observed(designs, params, logtimes, s),
        None => loglik_complete(designs, params, logtimes),
    }
}

fn maximize(
    designs: &DesignPair,
    logtimes: &DVector<f64>,
    status: Option<&[Status]>,
    control: &FitControl,
    init: Option<&HaftParams>,
) -> Result<FittedModel> {
    control.validate()?;
    check_sizes(designs)?;
    check_dim("log-times", designs.n_rows(), logtimes.len())?;
    if logtimes.iter().any(|y| !y.is_finite()) {
        return Err(HaftError::InvalidData("log-times must be finite".to_string()));
    }
    let mut params = match init {
        Some(p) => {
            check_inputs(designs, p, logtimes)?;
            p.clone()
        }
        None => init_params(designs, logtimes)?,
    };
    let mut ll = objective(designs, &params, logtimes, status)?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < control.max_iter {
        iterations += 1;
        let next = cm_sweep(designs, &params, logtimes, status, control)?;
        let next_ll = objective(designs, &next, logtimes, status)?;
        if !next_ll.is_finite() {
            return Err(HaftError::UnboundedLikelihood(
                "log-likelihood became non-finite during fitting".to_string(),
            ));
        }
        let change = (next_ll - ll).abs();
        params = next;
        trace.push(next_ll);
        let scale = ll.abs().max(1.0);
        ll = next_ll;
        if change <= control.tol * scale {
            converged = true;
            break;
        }
    }
    let k = params.len();
    Ok(FittedModel {
        params,
        w_names: designs.w_names.clone(),
        z_names: designs.z_names.clone(),
        spec: designs.spec.clone(),
        encoding: designs.encoding.clone(),
        loglik: ll,
        aic: -2.0 * ll + 2.0 * k as f64,
        vcov: None,
        vcov_clipped: false,
        converged,
        iterations,
        censored_fit: status.is_some(),
        trace,
        fingerprint: designs.fingerprint.clone(),
    })
}

/// Alternating conditional maximisation for fully observed log-times.
pub fn fit_uncensored(
    designs: &DesignPair,
    logtimes: &DVector<f64>,
    control: &FitControl,
    init: Option<&HaftParams>,
) -> Result<FittedModel> {
    maximize(designs, logtimes, None, control, init)
}

/// ECM for right-censored log-times. Without censored rows this is exactly
/// [`fit_uncensored`].
pub fn fit_censored(
    designs: &DesignPair,
    logtimes: &DVector<f64>,
    status: &[Status],
    control: &FitControl,
    init: Option<&HaftParams>,
) -> Result<FittedModel> {
    check_dim("status", logtimes.len(), status.len())?;
    let events = status.iter().filter(|s| s.is_event()).count();
    if events == 0 {
        return Err(HaftError::Estimation(
            "every observation is censored; the likelihood increases without bound in the location"
                .to_string(),
        ));
    }
    if events == status.len() {
        return fit_uncensored(designs, logtimes, control, init);
    }
    maximize(designs, logtimes, Some(status), control, init)
}

/// One further ECM (or alternating) sweep from `params`; used to check that
/// a returned estimate is a fixed point.
pub fn sweep_once(
    designs: &DesignPair,
    logtimes: &DVector<f64>,
    status: &[Status],
    params: &HaftParams,
    control: &FitControl,
) -> Result<HaftParams> {
    let censored = status.iter().any(|s| !s.is_event());
    cm_sweep(designs, params, logtimes, censored.then_some(status), control)
}

/// Builds designs, fits (ECM when anything is censored) and attaches the
/// observed-information covariance.
pub fn fit_dataset(
    data: &SurvivalDataset,
    spec: &CovariateSpec,
    control: &FitControl,
) -> Result<(DesignPair, FittedModel)> {
    let designs = build_designs(data.covariates(), spec)?;
    let logtimes = data.log_times();
    let model = fit_censored(&designs, &logtimes, data.status(), control, None)?;
    let model = inference::attach_covariance(model, &designs, &logtimes, data.status())?;
    Ok((designs, model))
}
