use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::SQRT_2;

use crate::error::{HaftError, Result};

/// 1/√(2π)
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// log √(2π)
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Above this point the Mills ratio comes from its continued fraction.
const MILLS_CF_THRESHOLD: f64 = 8.0;
const MILLS_CF_DEPTH: usize = 80;

pub fn norm_pdf(a: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * a * a).exp()
}

pub fn norm_cdf(a: f64) -> f64 {
    0.5 * erfc(-a / SQRT_2)
}

/// Upper tail Φ(−a), accurate in relative terms for large `a`.
pub fn norm_sf(a: f64) -> f64 {
    0.5 * erfc(a / SQRT_2)
}

/// Φ(−a)/φ(a) for a ≥ MILLS_CF_THRESHOLD, by backward evaluation of
/// 1/(a + 1/(a + 2/(a + 3/(a + ...)))).
fn mills_ratio_cf(a: f64) -> f64 {
    let mut tail = a;
    for k in (1..=MILLS_CF_DEPTH).rev() {
        tail = a + k as f64 / tail;
    }
    1.0 / tail
}

/// log Φ(−a), finite far into both tails.
pub fn log_norm_sf(a: f64) -> f64 {
    if a > MILLS_CF_THRESHOLD {
        -0.5 * a * a - LN_SQRT_2PI + mills_ratio_cf(a).ln()
    } else if a < 0.0 {
        (-norm_cdf(a)).ln_1p()
    } else {
        norm_sf(a).ln()
    }
}

/// Φ⁻¹(p) for p strictly inside (0, 1).
///
/// Starts from the erfc inverse and takes one Newton step against
/// [`norm_cdf`] (or [`norm_sf`] in the upper half) so that the quantile is
/// consistent with this module's own cdf.
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(HaftError::Domain(format!(
            "normal quantile requires p in (0, 1), got {p}"
        )));
    }
    if p > 0.5 {
        // 1 - p is exact for p in [0.5, 1]
        Ok(-lower_quantile(1.0 - p))
    } else {
        Ok(lower_quantile(p))
    }
}

fn lower_quantile(p: f64) -> f64 {
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    let dens = norm_pdf(x);
    if dens > 0.0 && dens.is_finite() {
        let step = (norm_cdf(x) - p) / dens;
        if step.is_finite() {
            return x - step;
        }
    }
    x
}

fn require_finite(a: f64, what: &str) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(HaftError::Domain(format!("{what} requires a finite argument, got {a}")))
    }
}

/// Inverse Mills ratio f(a) = φ(a)/Φ(−a) = E[Z | Z > a] for Z ~ N(0, 1).
pub fn inv_mills_f(a: f64) -> Result<f64> {
    require_finite(a, "inv_mills_f")?;
    Ok(inv_mills_unchecked(a))
}

fn inv_mills_unchecked(a: f64) -> f64 {
    if a > MILLS_CF_THRESHOLD {
        1.0 / mills_ratio_cf(a)
    } else {
        norm_pdf(a) / norm_sf(a)
    }
}

/// g(a) = E[Z² | Z > a] = 1 + a·f(a).
pub fn trunc_second_moment_g(a: f64) -> Result<f64> {
    require_finite(a, "trunc_second_moment_g")?;
    Ok(1.0 + a * inv_mills_unchecked(a))
}

/// Var[Z | Z > a] = g(a) − f(a)², clamped at zero.
pub fn trunc_variance_factor(a: f64) -> Result<f64> {
    require_finite(a, "trunc_variance_factor")?;
    let f = inv_mills_unchecked(a);
    Ok((1.0 + a * f - f * f).max(0.0))
}
