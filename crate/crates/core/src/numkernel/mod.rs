//! Numerical substrate: standard normal special functions, truncated normal
//! moments, adaptive quadrature, weighted least squares and the Gamma
//! log-link IRLS solver.

mod glm;
mod normal;
mod quadrature;
mod wls;

pub use glm::{fit_gamma_loglink, gamma_objective, gamma_score, GammaFit};
pub use normal::{
    inv_mills_f, log_norm_sf, norm_cdf, norm_pdf, norm_quantile, norm_sf, trunc_second_moment_g,
    trunc_variance_factor, FRAC_1_SQRT_2PI, LN_SQRT_2PI,
};
pub use quadrature::{integrate, QuadratureSpec};
pub use wls::{check_full_rank, least_squares, solve_wls, WlsProblem};
