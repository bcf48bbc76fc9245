//! Adaptive Gauss–Kronrod (7/15) quadrature with infinite-limit mapping.
//!
//! Infinite limits are folded onto a finite interval through
//! x = t/(1 − t²), whose derivative (1 + t²)/(1 − t²)² stays smooth at the
//! origin and pushes Kronrod nodes well into Gaussian tails.

use crate::error::{HaftError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 200,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        let spec = Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) || self.max_subdivisions < 1 {
            return Err(HaftError::Domain(format!(
                "quadrature tolerances must be positive and max_subdivisions >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

// Kronrod abscissae (positive half, descending) and weights; every other
// node from index 1 is a 7-point Gauss node.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gauss_kronrod<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = g(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = g(center - dx) + g(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

fn adaptive<F: Fn(f64) -> f64>(g: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    let mut segments = vec![gauss_kronrod(&g, a, b)];
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if !total.is_finite() {
            return Err(HaftError::Domain(
                "integrand produced a non-finite value".to_string(),
            ));
        }
        if error <= spec.abs_tol.max(spec.rel_tol * total.abs()) {
            return Ok(total);
        }
        if segments.len() >= spec.max_subdivisions {
            return Err(HaftError::Quadrature {
                estimate: total,
                error,
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("at least one segment");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            // interval can no longer be split in floating point
            return Err(HaftError::Quadrature {
                estimate: total,
                error,
            });
        }
        segments.push(gauss_kronrod(&g, seg.a, mid));
        segments.push(gauss_kronrod(&g, mid, seg.b));
    }
}

#[inline]
fn weighted(v: f64, jac: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v * jac
    }
}

/// ∫ f over (lower, upper); either bound may be infinite.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lower: f64,
    upper: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    if lower.is_nan() || upper.is_nan() {
        return Err(HaftError::Domain("NaN integration bound".to_string()));
    }
    if lower == upper {
        return Ok(0.0);
    }
    if lower > upper {
        return integrate(f, upper, lower, spec).map(|v| -v);
    }
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => adaptive(f, lower, upper, spec),
        (false, false) => adaptive(
            |t: f64| {
                let s = 1.0 - t * t;
                weighted(f(t / s), (1.0 + t * t) / (s * s))
            },
            -1.0,
            1.0,
            spec,
        ),
        (true, false) => adaptive(
            |t: f64| {
                let s = 1.0 - t * t;
                weighted(f(lower + t / s), (1.0 + t * t) / (s * s))
            },
            0.0,
            1.0,
            spec,
        ),
        (false, true) => adaptive(
            |t: f64| {
                let s = 1.0 - t * t;
                weighted(f(upper - t / s), (1.0 + t * t) / (s * s))
            },
            0.0,
            1.0,
            spec,
        ),
    }
}
