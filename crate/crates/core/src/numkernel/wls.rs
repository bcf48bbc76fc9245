//! Weighted least squares through a QR factorisation of the
//! √weight-scaled design, never through W'ΩW.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, HaftError, Result};

/// Relative threshold on |R_jj| below which column j is declared dependent.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct WlsProblem {
    design: DMatrix<f64>,
    response: DVector<f64>,
    weights: DVector<f64>,
}

impl WlsProblem {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>, weights: DVector<f64>) -> Result<Self> {
        let (n, p) = design.shape();
        check_dim("WLS response", n, response.len())?;
        check_dim("WLS weights", n, weights.len())?;
        if n < p {
            return Err(HaftError::TooFewObservations { needed: p, got: n });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(HaftError::Domain(format!(
                "WLS weights must be finite and strictly positive, found {w}"
            )));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(HaftError::Domain("WLS inputs must be finite".to_string()));
        }
        Ok(Self {
            design,
            response,
            weights,
        })
    }

    pub fn unweighted(design: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        let n = design.nrows();
        Self::new(design, response, DVector::from_element(n, 1.0))
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }
}

fn dependent_columns(r_diag: &[f64]) -> Vec<usize> {
    let largest = r_diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    r_diag
        .iter()
        .enumerate()
        .filter(|(_, d)| !(d.abs() >= RANK_TOL * largest) || largest == 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Fails with [`HaftError::RankDeficient`] naming every column whose QR
/// diagonal is negligible relative to the largest one.
pub fn check_full_rank(design: &DMatrix<f64>, names: &[String]) -> Result<()> {
    check_dim("column names", design.ncols(), names.len())?;
    if design.nrows() < design.ncols() {
        return Err(HaftError::TooFewObservations {
            needed: design.ncols(),
            got: design.nrows(),
        });
    }
    let qr = design.clone().qr();
    let diag: Vec<f64> = qr.r().diagonal().iter().copied().collect();
    let bad = dependent_columns(&diag);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(HaftError::RankDeficient {
            columns: bad.into_iter().map(|j| names[j].clone()).collect(),
        })
    }
}

/// Minimiser of Σ wᵢ(rᵢ − xᵢ'b)².
pub fn solve_wls(problem: &WlsProblem) -> Result<DVector<f64>> {
    let (n, p) = problem.design.shape();
    if p == 0 {
        return Ok(DVector::zeros(0));
    }
    let root_w = problem.weights.map(f64::sqrt);
    let mut scaled = problem.design.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= root_w[i];
    }
    let mut rhs = problem.response.component_mul(&root_w);

    let qr = scaled.qr();
    let r = qr.r();
    let diag: Vec<f64> = r.diagonal().iter().copied().collect();
    let bad = dependent_columns(&diag);
    if !bad.is_empty() {
        return Err(HaftError::RankDeficient {
            columns: bad.into_iter().map(|j| format!("#{j}")).collect(),
        });
    }
    qr.q_tr_mul(&mut rhs);
    let head = rhs.rows(0, p.min(n)).into_owned();
    r.solve_upper_triangular(&head).ok_or_else(|| HaftError::RankDeficient {
        columns: vec!["<triangular solve failed>".to_string()],
    })
}

/// Ordinary least squares, unit weights.
pub fn least_squares(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<DVector<f64>> {
    solve_wls(&WlsProblem::unweighted(design.clone(), response.clone())?)
}
