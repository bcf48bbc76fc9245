//! Datasets, covariate term specifications, design matrices and parameter
//! containers shared by fitting, prediction and residual code.
//!
//! A model has two design matrices built from the same covariate table: the
//! location design W (mean of the log-time) and the scale design Z (log of
//! its variance). Both are produced by [`build_designs`] from a
//! [`CovariateSpec`], and the resulting [`EncodingMap`] is kept so new rows
//! can be encoded identically later.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, HaftError, Result};
use crate::numkernel::check_full_rank;

pub const INTERCEPT_NAME: &str = "(Intercept)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Event,
    Censored,
}

impl Status {
    /// 1 = event, 0 = censored.
    pub fn from_indicator(value: i64) -> Result<Self> {
        match value {
            1 => Ok(Status::Event),
            0 => Ok(Status::Censored),
            other => Err(HaftError::InvalidData(format!(
                "status must be 1 (event) or 0 (censored), got {other}"
            ))),
        }
    }

    pub fn indicator(self) -> u8 {
        match self {
            Status::Event => 1,
            Status::Censored => 0,
        }
    }

    pub fn is_event(self) -> bool {
        self == Status::Event
    }

    pub fn flipped(self) -> Self {
        match self {
            Status::Event => Status::Censored,
            Status::Censored => Status::Event,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named covariate columns with a common row count.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    n_rows: usize,
    names: Vec<String>,
    columns: Vec<Column>,
}

impl CovariateTable {
    pub fn new(n_rows: usize, columns: Vec<(String, Column)>) -> Result<Self> {
        let mut names = Vec::with_capacity(columns.len());
        let mut cols = Vec::with_capacity(columns.len());
        for (name, col) in columns {
            if names.contains(&name) {
                return Err(HaftError::InvalidData(format!("duplicate column name `{name}`")));
            }
            if col.len() != n_rows {
                return Err(HaftError::InvalidData(format!(
                    "column `{name}` has {} rows, expected {n_rows}",
                    col.len()
                )));
            }
            match &col {
                Column::Numeric(v) => {
                    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                        return Err(HaftError::InvalidData(format!(
                            "column `{name}` row {i}: missing or non-finite value"
                        )));
                    }
                }
                Column::Categorical(v) => {
                    if let Some(i) = v.iter().position(|x| x.is_empty()) {
                        return Err(HaftError::InvalidData(format!(
                            "column `{name}` row {i}: missing value"
                        )));
                    }
                }
            }
            names.push(name);
            cols.push(col);
        }
        Ok(Self {
            n_rows,
            names,
            columns: cols,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
    }

    pub fn fingerprint(&self) -> DatasetFingerprint {
        let mut sorted: Vec<&str> = self.names.iter().map(String::as_str).collect();
        sorted.sort_unstable();
        let mut hasher = Sha256::new();
        for name in sorted {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        DatasetFingerprint {
            rows: self.n_rows,
            column_hash: hex::encode(hasher.finalize()),
        }
    }
}

/// Row count plus a hash of the covariate column names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub rows: usize,
    pub column_hash: String,
}

/// Observed times (raw scale), censoring status and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    time: Vec<f64>,
    status: Vec<Status>,
    covariates: CovariateTable,
}

impl SurvivalDataset {
    pub fn new(time: Vec<f64>, status: Vec<Status>, covariates: CovariateTable) -> Result<Self> {
        if time.is_empty() {
            return Err(HaftError::TooFewObservations { needed: 1, got: 0 });
        }
        check_dim("status", time.len(), status.len())?;
        check_dim("covariate rows", time.len(), covariates.n_rows())?;
        if let Some(i) = time.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(HaftError::InvalidData(format!(
                "time at row {i} must be positive and finite, got {}",
                time[i]
            )));
        }
        Ok(Self {
            time,
            status,
            covariates,
        })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn status(&self) -> &[Status] {
        &self.status
    }

    pub fn covariates(&self) -> &CovariateTable {
        &self.covariates
    }

    /// Log of the observed times; the only place the log transform happens.
    pub fn log_times(&self) -> DVector<f64> {
        DVector::from_iterator(self.time.len(), self.time.iter().map(|t| t.ln()))
    }

    pub fn n_censored(&self) -> usize {
        self.status.iter().filter(|s| !s.is_event()).count()
    }

    /// Same rows with event and censored swapped, for fitting p(C | X).
    pub fn with_flipped_status(&self) -> Self {
        Self {
            time: self.time.clone(),
            status: self.status.iter().map(|s| s.flipped()).collect(),
            covariates: self.covariates.clone(),
        }
    }
}

/// A main effect `name`, an interaction `a:b`, or a square `name^2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Term {
    Main(String),
    Interaction(String, String),
    Square(String),
}

impl Term {
    pub fn columns(&self) -> Vec<&str> {
        match self {
            Term::Main(a) | Term::Square(a) => vec![a.as_str()],
            Term::Interaction(a, b) => vec![a.as_str(), b.as_str()],
        }
    }

    fn same_as(&self, other: &Term) -> bool {
        match (self, other) {
            (Term::Interaction(a, b), Term::Interaction(c, d)) => {
                (a == c && b == d) || (a == d && b == c)
            }
            _ => self == other,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Main(a) => write!(f, "{a}"),
            Term::Interaction(a, b) => write!(f, "{a}:{b}"),
            Term::Square(a) => write!(f, "{a}^2"),
        }
    }
}

fn valid_column_name(s: &str) -> bool {
    !s.is_empty() && !s.contains([':', '^', ',']) && s.trim() == s
}

impl FromStr for Term {
    type Err = HaftError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || HaftError::InvalidSpec(format!("cannot parse term `{s}`"));
        if let Some(base) = s.strip_suffix("^2") {
            let base = base.trim();
            return if valid_column_name(base) {
                Ok(Term::Square(base.to_string()))
            } else {
                Err(bad())
            };
        }
        if let Some((a, b)) = s.split_once(':') {
            let (a, b) = (a.trim(), b.trim());
            if !valid_column_name(a) || !valid_column_name(b) {
                return Err(bad());
            }
            if a == b {
                return Err(HaftError::InvalidSpec(format!(
                    "self-interaction `{s}`; write `{a}^2` instead"
                )));
            }
            return Ok(Term::Interaction(a.to_string(), b.to_string()));
        }
        if valid_column_name(s) && s != "1" && s != "0" && s != "-1" {
            Ok(Term::Main(s.to_string()))
        } else {
            Err(bad())
        }
    }
}

impl TryFrom<String> for Term {
    type Error = HaftError;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

/// Terms for one part (location or scale) of the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermList {
    pub intercept: bool,
    pub terms: Vec<Term>,
}

impl Default for TermList {
    fn default() -> Self {
        Self::intercept_only()
    }
}

impl TermList {
    pub fn intercept_only() -> Self {
        Self {
            intercept: true,
            terms: Vec::new(),
        }
    }

    pub fn new(intercept: bool, terms: Vec<Term>) -> Result<Self> {
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].iter().any(|u| u.same_as(t)) {
                return Err(HaftError::InvalidSpec(format!("duplicate term `{t}`")));
            }
        }
        Ok(Self { intercept, terms })
    }

    /// Parses a comma-separated list such as `1,age,sex,age:sex,nodes^2`.
    /// The intercept is on unless `0` or `-1` appears.
    pub fn parse(s: &str) -> Result<Self> {
        let mut intercept = true;
        let mut terms = Vec::new();
        for token in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match token {
                "1" => {}
                "0" | "-1" => intercept = false,
                other => terms.push(other.parse()?),
            }
        }
        Self::new(intercept, terms)
    }

    /// Main effects of every column referenced here, in first-use order.
    pub fn main_effects(&self) -> Self {
        let mut seen: Vec<String> = Vec::new();
        for t in &self.terms {
            for c in t.columns() {
                if !seen.iter().any(|s| s == c) {
                    seen.push(c.to_string());
                }
            }
        }
        Self {
            intercept: self.intercept,
            terms: seen.into_iter().map(Term::Main).collect(),
        }
    }

    /// Main effects first, then interactions and squares, each in list order.
    fn ordered(&self) -> impl Iterator<Item = &Term> {
        self.terms
            .iter()
            .filter(|t| matches!(t, Term::Main(_)))
            .chain(self.terms.iter().filter(|t| !matches!(t, Term::Main(_))))
    }
}

impl fmt::Display for TermList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = vec![if self.intercept { "1" } else { "0" }.to_string()];
        parts.extend(self.terms.iter().map(Term::to_string));
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub location: TermList,
    pub scale: TermList,
}

impl CovariateSpec {
    pub fn new(location: TermList, scale: TermList) -> Self {
        Self { location, scale }
    }

    pub fn parse(location: &str, scale: &str) -> Result<Self> {
        Ok(Self::new(TermList::parse(location)?, TermList::parse(scale)?))
    }

    pub fn referenced_columns(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in self.location.terms.iter().chain(&self.scale.terms) {
            for c in t.columns() {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn validate(&self, table: &CovariateTable) -> Result<()> {
        for c in self.referenced_columns() {
            if table.get(c).is_none() {
                return Err(HaftError::UnknownColumn(c.to_string()));
            }
        }
        for part in [&self.location, &self.scale] {
            TermList::new(part.intercept, part.terms.clone())?;
            for t in &part.terms {
                if let Term::Square(c) = t {
                    if matches!(table.get(c), Some(Column::Categorical(_))) {
                        return Err(HaftError::InvalidSpec(format!(
                            "cannot square categorical column `{c}`"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoding {
    Numeric,
    /// Sorted levels; the first is the reference and gets no dummy column.
    Categorical { levels: Vec<String> },
}

/// How each referenced covariate column turns into design columns.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncodingMap {
    pub columns: BTreeMap<String, ColumnEncoding>,
}

impl EncodingMap {
    pub fn from_table(table: &CovariateTable, spec: &CovariateSpec) -> Result<Self> {
        spec.validate(table)?;
        let mut columns = BTreeMap::new();
        for name in spec.referenced_columns() {
            let enc = match table.get(name).expect("validated") {
                Column::Numeric(_) => ColumnEncoding::Numeric,
                Column::Categorical(values) => {
                    let mut levels: Vec<String> = values.clone();
                    levels.sort_unstable();
                    levels.dedup();
                    if levels.len() < 2 {
                        return Err(HaftError::InvalidSpec(format!(
                            "categorical column `{name}` has a single level"
                        )));
                    }
                    ColumnEncoding::Categorical { levels }
                }
            };
            columns.insert(name.to_string(), enc);
        }
        Ok(Self { columns })
    }

    /// Encoded columns (with names) for one raw covariate column.
    fn encode_column(&self, table: &CovariateTable, name: &str) -> Result<Vec<(String, Vec<f64>)>> {
        let enc = self
            .columns
            .get(name)
            .ok_or_else(|| HaftError::UnknownColumn(name.to_string()))?;
        let col = table
            .get(name)
            .ok_or_else(|| HaftError::UnknownColumn(name.to_string()))?;
        match (enc, col) {
            (ColumnEncoding::Numeric, Column::Numeric(v)) => Ok(vec![(name.to_string(), v.clone())]),
            (ColumnEncoding::Categorical { levels }, Column::Categorical(v)) => {
                if let Some(bad) = v.iter().find(|x| !levels.contains(x)) {
                    return Err(HaftError::InvalidData(format!(
                        "column `{name}`: level `{bad}` was not seen when the model was built"
                    )));
                }
                Ok(levels[1..]
                    .iter()
                    .map(|lvl| {
                        let dummy = v.iter().map(|x| if x == lvl { 1.0 } else { 0.0 }).collect();
                        (format!("{name}[{lvl}]"), dummy)
                    })
                    .collect())
            }
            (ColumnEncoding::Numeric, Column::Categorical(_)) => Err(HaftError::InvalidData(
                format!("column `{name}` should be numeric"),
            )),
            (ColumnEncoding::Categorical { .. }, Column::Numeric(_)) => Err(
                HaftError::InvalidData(format!("column `{name}` should be categorical")),
            ),
        }
    }

    /// Design matrix and column names for one part. No rank check.
    pub fn encode(&self, table: &CovariateTable, part: &TermList) -> Result<(DMatrix<f64>, Vec<String>)> {
        let n = table.n_rows();
        let mut cols: Vec<(String, Vec<f64>)> = Vec::new();
        if part.intercept {
            cols.push((INTERCEPT_NAME.to_string(), vec![1.0; n]));
        }
        for term in part.ordered() {
            match term {
                Term::Main(a) => cols.extend(self.encode_column(table, a)?),
                Term::Square(a) => {
                    let enc = self.encode_column(table, a)?;
                    if !matches!(self.columns.get(a), Some(ColumnEncoding::Numeric)) {
                        return Err(HaftError::InvalidSpec(format!(
                            "cannot square categorical column `{a}`"
                        )));
                    }
                    for (name, v) in enc {
                        cols.push((format!("{name}^2"), v.iter().map(|x| x * x).collect()));
                    }
                }
                Term::Interaction(a, b) => {
                    let left = self.encode_column(table, a)?;
                    let right = self.encode_column(table, b)?;
                    for (ln, lv) in &left {
                        for (rn, rv) in &right {
                            let prod = lv.iter().zip(rv).map(|(x, y)| x * y).collect();
                            cols.push((format!("{ln}:{rn}"), prod));
                        }
                    }
                }
            }
        }
        let names: Vec<String> = cols.iter().map(|(n, _)| n.clone()).collect();
        let matrix = DMatrix::from_fn(n, cols.len(), |i, j| cols[j].1[i]);
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(HaftError::InvalidData("design contains non-finite entries".to_string()));
        }
        Ok((matrix, names))
    }
}

/// Location design W (n×p) and scale design Z (n×q).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPair {
    pub w: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub w_names: Vec<String>,
    pub z_names: Vec<String>,
    pub spec: CovariateSpec,
    pub encoding: EncodingMap,
    pub fingerprint: DatasetFingerprint,
}

impl DesignPair {
    pub fn n_rows(&self) -> usize {
        self.w.nrows()
    }

    pub fn p(&self) -> usize {
        self.w.ncols()
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    /// Designs from raw matrices, mainly for tests and numerical studies.
    pub fn from_matrices(w: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        check_dim("scale design rows", w.nrows(), z.nrows())?;
        let w_names: Vec<String> = (0..w.ncols()).map(|j| format!("w{j}")).collect();
        let z_names: Vec<String> = (0..z.ncols()).map(|j| format!("z{j}")).collect();
        check_full_rank(&w, &w_names)?;
        check_full_rank(&z, &z_names)?;
        Ok(Self {
            w_names,
            z_names,
            spec: CovariateSpec::new(TermList::intercept_only(), TermList::intercept_only()),
            encoding: EncodingMap::default(),
            fingerprint: DatasetFingerprint {
                rows: w.nrows(),
                column_hash: String::new(),
            },
            w,
            z,
        })
    }
}

pub fn build_designs(table: &CovariateTable, spec: &CovariateSpec) -> Result<DesignPair> {
    let encoding = EncodingMap::from_table(table, spec)?;
    let (w, w_names) = encoding.encode(table, &spec.location)?;
    let (z, z_names) = encoding.encode(table, &spec.scale)?;
    check_full_rank(&w, &w_names)?;
    check_full_rank(&z, &z_names)?;
    Ok(DesignPair {
        w,
        z,
        w_names,
        z_names,
        spec: spec.clone(),
        encoding,
        fingerprint: table.fingerprint(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaftParams {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl HaftParams {
    pub fn new(beta: DVector<f64>, gamma: DVector<f64>) -> Result<Self> {
        if beta.iter().chain(gamma.iter()).any(|v| !v.is_finite()) {
            return Err(HaftError::Domain("parameters must be finite".to_string()));
        }
        Ok(Self { beta, gamma })
    }

    pub fn len(&self) -> usize {
        self.beta.len() + self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (β, γ) stacked into one vector.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.beta.iter().chain(self.gamma.iter()).copied())
    }

    pub fn from_vector(theta: &DVector<f64>, p: usize) -> Self {
        Self {
            beta: theta.rows(0, p).into_owned(),
            gamma: theta.rows(p, theta.len() - p).into_owned(),
        }
    }
}

/// μᵢ = Wᵢ'β and σᵢ = exp(Zᵢ'γ/2) for raw design matrices.
pub fn predictors(
    w: &DMatrix<f64>,
    z: &DMatrix<f64>,
    params: &HaftParams,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("beta length", w.ncols(), params.beta.len())?;
    check_dim("gamma length", z.ncols(), params.gamma.len())?;
    check_dim("design rows", w.nrows(), z.nrows())?;
    let mu = w * &params.beta;
    let sigma = (z * &params.gamma).map(|e| (0.5 * e).exp());
    Ok((mu, sigma))
}

pub fn linear_predictors(
    designs: &DesignPair,
    params: &HaftParams,
) -> Result<(DVector<f64>, DVector<f64>)> {
    predictors(&designs.w, &designs.z, params)
}

/// Estimates plus everything needed to predict from, report on, or persist
/// a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub params: HaftParams,
    pub w_names: Vec<String>,
    pub z_names: Vec<String>,
    pub spec: CovariateSpec,
    pub encoding: EncodingMap,
    pub loglik: f64,
    pub aic: f64,
    /// Covariance of (β̂, γ̂), inverse observed information.
    pub vcov: Option<DMatrix<f64>>,
    /// Set when the information matrix was not positive definite and had
    /// its eigenvalues clipped before inversion.
    pub vcov_clipped: bool,
    pub converged: bool,
    pub iterations: usize,
    pub censored_fit: bool,
    /// Objective value after each iteration, starting with the initial value.
    pub trace: Vec<f64>,
    pub fingerprint: DatasetFingerprint,
}

impl FittedModel {
    /// A model carrying known parameters rather than estimates, e.g. the
    /// generating values of a simulation. The likelihood fields are NaN.
    pub fn from_params(designs: &DesignPair, params: HaftParams) -> Result<Self> {
        check_dim("beta length", designs.p(), params.beta.len())?;
        check_dim("gamma length", designs.q(), params.gamma.len())?;
        Ok(Self {
            params,
            w_names: designs.w_names.clone(),
            z_names: designs.z_names.clone(),
            spec: designs.spec.clone(),
            encoding: designs.encoding.clone(),
            loglik: f64::NAN,
            aic: f64::NAN,
            vcov: None,
            vcov_clipped: false,
            converged: true,
            iterations: 0,
            censored_fit: false,
            trace: Vec::new(),
            fingerprint: designs.fingerprint.clone(),
        })
    }

    pub fn p(&self) -> usize {
        self.params.beta.len()
    }

    pub fn q(&self) -> usize {
        self.params.gamma.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.w_names.iter().chain(&self.z_names).cloned().collect()
    }

    /// W and Z for new covariate rows, using the stored encoding.
    pub fn encode(&self, table: &CovariateTable) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (w, w_names) = self.encoding.encode(table, &self.spec.location)?;
        let (z, z_names) = self.encoding.encode(table, &self.spec.scale)?;
        if w_names != self.w_names || z_names != self.z_names {
            return Err(HaftError::InvalidData(
                "covariates do not reproduce the model's design columns".to_string(),
            ));
        }
        Ok((w, z))
    }

    /// (μ, σ) for new covariate rows.
    pub fn predictors(&self, table: &CovariateTable) -> Result<(DVector<f64>, DVector<f64>)> {
        let (w, z) = self.encode(table)?;
        predictors(&w, &z, &self.params)
    }
}
