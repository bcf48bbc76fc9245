//! The `haft` command line: `fit`, `predict`, `residuals` and `simulate`.
//!
//! Exit codes: 0 success, 1 input error, 2 estimation impossible (rank
//! deficiency, all rows censored, unbounded likelihood), 3 non-convergence
//! (the model file is still written, flagged as not converged).

pub mod io;
pub mod model_file;

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{HaftError, Result};
use crate::fit::{fit_dataset, FitControl};
use crate::inference::{time_scale_aic, wald_summary};
use crate::model::{CovariateSpec, FittedModel, SurvivalDataset};
use crate::numkernel::QuadratureSpec;
use crate::par::{map_range, Execution};
use crate::predict::{log_grid, prediction_interval, survival_curve, survival_quantile, EncodedRow};
use crate::residuals::{hillis_report, pit_residuals, CensoringModel, ResidualReport};
use crate::simulate::{censoring_rate, simulate, SimSpec};

use io::{fmt_num, write_csv, write_dataset, RawTable};
use model_file::ModelFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_ESTIMATION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "haft", version, about = "Heteroscedastic accelerated failure time models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a HAFT model and write a model file.
    Fit(FitArgs),
    /// Survival medians, prediction intervals and curves for new rows.
    Predict(PredictArgs),
    /// PIT or imputation residuals with a normality summary.
    Residuals(ResidualArgs),
    /// Generate a dataset (or a replicate study) from a JSON config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the time column.
    #[arg(long, default_value = "time")]
    pub time: String,
    /// Name of the status column (1 = event, 0 = censored).
    #[arg(long, default_value = "status")]
    pub status: String,
}

#[derive(Debug, Args)]
pub struct ControlArgs {
    /// Relative log-likelihood change that stops the iterations.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

impl ControlArgs {
    fn control(&self) -> FitControl {
        FitControl { tol: self.tol, max_iter: self.max_iter, ..FitControl::default() }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Location terms, e.g. `1,age,sex,age:sex,nodes^2`.
    #[arg(long, default_value = "1")]
    pub loc_terms: String,
    /// Scale (log-variance) terms; `1` gives the homoscedastic model.
    #[arg(long, default_value = "1")]
    pub scale_terms: String,
    /// Where to write the model file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Confidence level for the summary intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[command(flatten)]
    pub control: ControlArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with the covariate columns the model uses.
    #[arg(long)]
    pub data: PathBuf,
    /// Per-row CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Log-spaced time grid `lo,hi,n` for survival curves.
    #[arg(long)]
    pub grid: Option<String>,
    /// Long-format survival curve CSV (row, t, survival); needs --grid.
    #[arg(long, requires = "grid")]
    pub curves_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Pit,
    Hillis,
}

#[derive(Debug, Args)]
pub struct ResidualArgs {
    /// Survival model file.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Censoring model file (a fit with flipped status).
    #[arg(long, conflicts_with = "fit_censoring")]
    pub censoring_model: Option<PathBuf>,
    /// Fit the censoring model here instead of loading one.
    #[arg(long)]
    pub fit_censoring: bool,
    /// Censoring location terms; default: the survival location terms.
    #[arg(long)]
    pub cens_loc_terms: Option<String>,
    /// Censoring scale terms; default: main effects of the location terms.
    #[arg(long)]
    pub cens_scale_terms: Option<String>,
    #[arg(long, value_enum, default_value = "pit")]
    pub method: Method,
    /// Seed for the imputation draws (required with --method hillis).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-row CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub control: ControlArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON simulation config.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset CSV (or replicate table with --replicates).
    #[arg(long)]
    pub out: PathBuf,
    /// Latent log R / log C sidecar CSV.
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
    #[arg(long, default_value = "time")]
    pub time: String,
    #[arg(long, default_value = "status")]
    pub status: String,
    /// Fit this many replicates (seeds seed, seed + 1, ...) in parallel and
    /// write one row of estimates per replicate.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Location terms for replicate fits; default: the generating terms.
    #[arg(long)]
    pub loc_terms: Option<String>,
    /// Scale terms for replicate fits; default: the generating terms.
    #[arg(long)]
    pub scale_terms: Option<String>,
    /// Wald level for replicate coverage.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[command(flatten)]
    pub control: ControlArgs,
}

/// Exit code for a library error.
pub fn exit_code(err: &HaftError) -> i32 {
    match err {
        HaftError::RankDeficient { .. }
        | HaftError::UnboundedLikelihood(_)
        | HaftError::Estimation(_)
        | HaftError::TooFewObservations { .. }
        | HaftError::Quadrature { .. } => EXIT_ESTIMATION,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_INPUT;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a, stdout, stderr),
        Command::Predict(a) => cmd_predict(a, stdout),
        Command::Residuals(a) => cmd_residuals(a, stdout, stderr),
        Command::Simulate(a) => cmd_simulate(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn out_err(e: std::io::Error) -> HaftError {
    HaftError::InvalidData(format!("cannot write output: {e}"))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| HaftError::InvalidData(format!("cannot create {}: {e}", path.display())))
}

fn emit_csv(path: Option<&Path>, stdout: &mut dyn Write, headers: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let headers: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    match path {
        Some(p) => write_csv(create(p)?, &headers, rows),
        None => write_csv(stdout, &headers, rows),
    }
}

fn load_data(a: &DataArgs) -> Result<SurvivalDataset> {
    RawTable::from_path(&a.data)?.dataset(&a.time, &a.status, None)
}

/// Human-readable estimates table.
pub fn summary_text(model: &FittedModel, data: &SurvivalDataset, level: f64) -> Result<String> {
    let mut s = String::new();
    let kind = if model.censored_fit { "censored (ECM)" } else { "uncensored" };
    let _ = writeln!(s, "HAFT fit: {kind}; n = {}, censored = {}", data.len(), data.n_censored());
    let _ = writeln!(
        s,
        "converged: {} after {} iterations",
        if model.converged { "yes" } else { "NO" },
        model.iterations
    );
    let pct = 100.0 * level;
    let _ = writeln!(
        s,
        "{:<8} {:<24} {:>14} {:>12} {:>9} {:>14} {:>14}",
        "part",
        "term",
        "estimate",
        "std.error",
        "z",
        format!("{pct:.1}% lower"),
        format!("{pct:.1}% upper")
    );
    match wald_summary(model, level) {
        Ok(w) => {
            for r in &w.rows {
                let part = match r.part {
                    crate::inference::Part::Location => "location",
                    crate::inference::Part::Scale => "scale",
                };
                let _ = writeln!(
                    s,
                    "{:<8} {:<24} {:>14.6} {:>12.6} {:>9.3} {:>14.6} {:>14.6}",
                    part, r.name, r.estimate, r.std_error, r.z_value, r.ci_lower, r.ci_upper
                );
            }
        }
        Err(HaftError::Unavailable(_)) => {
            for (name, est) in model.parameter_names().iter().zip(model.params.to_vector().iter()) {
                let _ = writeln!(s, "{:<8} {:<24} {:>14.6}", "", name, est);
            }
        }
        Err(e) => return Err(e),
    }
    let _ = writeln!(s, "log-likelihood: {:.6}", model.loglik);
    let _ = writeln!(s, "AIC: {:.6}", model.aic);
    let _ = writeln!(s, "AIC (time scale): {:.6}", time_scale_aic(model, data));
    Ok(s)
}

pub fn cmd_fit(a: &FitArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let data = load_data(&a.data)?;
    let spec = CovariateSpec::parse(&a.loc_terms, &a.scale_terms)?;
    let (_, model) = fit_dataset(&data, &spec, &a.control.control())?;
    if let Some(path) = &a.out {
        ModelFile::from_model(&model)?.save(path)?;
    }
    if model.vcov_clipped {
        let _ = writeln!(
            stderr,
            "warning: observed information is not positive definite; eigenvalues were clipped and standard errors are unreliable"
        );
    }
    stdout.write_all(summary_text(&model, &data, a.level)?.as_bytes()).map_err(out_err)?;
    if !model.converged {
        let _ = writeln!(stderr, "warning: no convergence within {} iterations", a.control.max_iter);
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(EXIT_OK)
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || HaftError::InvalidData(format!("--grid expects `lo,hi,n`, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    log_grid(lo, hi, n)
}

pub fn cmd_predict(a: &PredictArgs, stdout: &mut dyn Write) -> Result<i32> {
    let model = ModelFile::load(&a.model)?.to_model()?;
    let table = RawTable::from_path(&a.data)?.covariates(&[], Some(&model.encoding))?;
    let (w, z) = model.encode(&table)?;
    let grid = a.grid.as_deref().map(parse_grid).transpose()?;
    let mut rows = Vec::with_capacity(table.n_rows());
    let mut curve_rows = Vec::new();
    for i in 0..table.n_rows() {
        let row = EncodedRow::from_designs(&w, &z, i)?;
        let (mu, sigma) = row.predictors(&model)?;
        let pi = prediction_interval(mu, sigma, a.level)?;
        rows.push(vec![
            (i + 1).to_string(),
            fmt_num(mu),
            fmt_num(sigma),
            fmt_num(survival_quantile(0.5, mu, sigma)?),
            fmt_num(pi.lower),
            fmt_num(pi.upper),
            fmt_num(pi.width()),
        ]);
        if let (Some(g), Some(_)) = (&grid, &a.curves_out) {
            let c = survival_curve(&row, &model, g)?;
            for (t, s) in c.times.iter().zip(&c.survival) {
                curve_rows.push(vec![(i + 1).to_string(), fmt_num(*t), fmt_num(*s)]);
            }
        }
    }
    emit_csv(
        a.out.as_deref(),
        stdout,
        &["row", "mu", "sigma", "median", "lower", "upper", "width"],
        &rows,
    )?;
    if let Some(p) = &a.curves_out {
        emit_csv(Some(p), stdout, &["row", "t", "survival"], &curve_rows)?;
    }
    Ok(EXIT_OK)
}

fn residual_summary(report: &ResidualReport) -> String {
    let (oe, oc) = report.outlier_counts();
    let mut s = String::new();
    let method = match report.method {
        crate::residuals::ResidualMethod::Pit => "pit",
        crate::residuals::ResidualMethod::Hillis => "hillis",
    };
    let _ = writeln!(s, "method: {method}");
    let _ = writeln!(s, "ks_statistic: {}", fmt_num(report.ks_statistic));
    let _ = writeln!(s, "ks_pvalue: {}", fmt_num(report.ks_pvalue));
    let _ = writeln!(s, "outliers_event: {oe}");
    let _ = writeln!(s, "outliers_censored: {oc}");
    s
}

pub fn cmd_residuals(a: &ResidualArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let surv = ModelFile::load(&a.model)?.to_model()?;
    let data = RawTable::from_path(&a.data.data)?.dataset(&a.data.time, &a.data.status, Some(&surv.encoding))?;
    let report = match a.method {
        Method::Hillis => {
            let seed = a
                .seed
                .ok_or_else(|| HaftError::Usage("--method hillis requires --seed".to_string()))?;
            hillis_report(&data, &surv, seed)?
        }
        Method::Pit => {
            let cens = match (&a.censoring_model, a.fit_censoring) {
                (Some(p), _) => CensoringModel(ModelFile::load(p)?.to_model()?),
                (None, true) => {
                    let default = CensoringModel::default_spec(&surv.spec);
                    let loc = match &a.cens_loc_terms {
                        Some(t) => crate::model::TermList::parse(t)?,
                        None => default.location.clone(),
                    };
                    let scale = match &a.cens_scale_terms {
                        Some(t) => crate::model::TermList::parse(t)?,
                        None => loc.main_effects(),
                    };
                    let m = CensoringModel::fit(&data, &CovariateSpec::new(loc, scale), &a.control.control())?;
                    if !m.model().converged {
                        let _ = writeln!(stderr, "warning: censoring model did not converge");
                    }
                    m
                }
                (None, false) => {
                    return Err(HaftError::Usage(
                        "PIT residuals need --censoring-model or --fit-censoring".to_string(),
                    ))
                }
            };
            pit_residuals(&data, &surv, &cens, &QuadratureSpec::default())?
        }
    };
    let rows: Vec<Vec<String>> = (0..report.residuals.len())
        .map(|i| {
            vec![
                (i + 1).to_string(),
                report.status[i].indicator().to_string(),
                fmt_num(report.residuals[i]),
                u8::from(report.outlier_flags[i]).to_string(),
            ]
        })
        .collect();
    emit_csv(a.out.as_deref(), stdout, &["id", "status", "residual", "outlier"], &rows)?;
    stdout.write_all(residual_summary(&report).as_bytes()).map_err(out_err)?;
    Ok(EXIT_OK)
}

fn load_sim_spec(a: &SimulateArgs) -> Result<SimSpec> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| HaftError::InvalidData(format!("cannot read {}: {e}", a.config.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| HaftError::InvalidSpec(format!("simulation config: {e}")))?;
    if let (Some(seed), Some(obj)) = (a.seed, value.as_object_mut()) {
        obj.insert("seed".to_string(), serde_json::Value::from(seed));
    }
    SimSpec::from_json(&value.to_string())
}

/// One replicate of a simulation study.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub seed: u64,
    pub censoring_rate: f64,
    pub model: Result<FittedModel>,
}

/// Simulates and fits `replicates` datasets with seeds `spec.seed + r`.
/// Results come back in replicate order whatever the execution mode.
pub fn run_replicates(
    spec: &SimSpec,
    fit_spec: &CovariateSpec,
    control: &FitControl,
    replicates: usize,
    exec: Execution,
) -> Vec<ReplicateResult> {
    map_range(replicates, exec, |r| {
        let seed = spec.seed.wrapping_add(r as u64);
        match simulate(&spec.with_seed(seed)) {
            Ok((data, _)) => ReplicateResult {
                seed,
                censoring_rate: censoring_rate(&data).unwrap_or(f64::NAN),
                model: fit_dataset(&data, fit_spec, control).map(|(_, m)| m),
            },
            Err(e) => ReplicateResult { seed, censoring_rate: f64::NAN, model: Err(e) },
        }
    })
}

pub fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let spec = load_sim_spec(a)?;
    match a.replicates {
        None => {
            let (data, truth) = simulate(&spec)?;
            write_dataset(create(&a.out)?, &data, &a.time, &a.status)?;
            if let Some(p) = &a.truth_out {
                let rows: Vec<Vec<String>> = (0..data.len())
                    .map(|i| {
                        vec![
                            (i + 1).to_string(),
                            fmt_num(truth.log_r[i]),
                            truth.log_c.as_ref().map_or(String::new(), |c| fmt_num(c[i])),
                        ]
                    })
                    .collect();
                emit_csv(Some(p), stdout, &["row", "log_r", "log_c"], &rows)?;
            }
            writeln!(stdout, "censoring_rate: {}", fmt_num(censoring_rate(&data)?)).map_err(out_err)?;
            Ok(EXIT_OK)
        }
        Some(r) => simulate_replicates(a, &spec, r, stdout),
    }
}

fn simulate_replicates(a: &SimulateArgs, spec: &SimSpec, r: usize, stdout: &mut dyn Write) -> Result<i32> {
    if r == 0 {
        return Err(HaftError::Usage("--replicates must be at least 1".to_string()));
    }
    let truth_spec = spec.survival.covariate_spec()?;
    let fit_spec = CovariateSpec::new(
        match &a.loc_terms {
            Some(t) => crate::model::TermList::parse(t)?,
            None => truth_spec.location.clone(),
        },
        match &a.scale_terms {
            Some(t) => crate::model::TermList::parse(t)?,
            None => truth_spec.scale.clone(),
        },
    );
    let truth: Vec<f64> = spec.survival.beta.iter().chain(&spec.survival.gamma).copied().collect();
    let same_terms = fit_spec == truth_spec;
    let results = run_replicates(spec, &fit_spec, &a.control.control(), r, Execution::Parallel);

    let names = results
        .iter()
        .find_map(|res| res.model.as_ref().ok().map(FittedModel::parameter_names))
        .unwrap_or_default();
    let mut headers: Vec<String> = ["replicate", "seed", "censoring_rate", "converged", "iterations", "loglik"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for n in &names {
        headers.push(format!("est:{n}"));
        headers.push(format!("se:{n}"));
    }
    let mut covered = vec![0usize; names.len()];
    let mut fitted = 0usize;
    let mut rows = Vec::with_capacity(r);
    for (i, res) in results.iter().enumerate() {
        let mut row = vec![i.to_string(), res.seed.to_string(), fmt_num(res.censoring_rate)];
        match &res.model {
            Ok(m) => {
                fitted += 1;
                row.push(u8::from(m.converged).to_string());
                row.push(m.iterations.to_string());
                row.push(fmt_num(m.loglik));
                let wald = wald_summary(m, a.level)?;
                for (j, w) in wald.rows.iter().enumerate() {
                    row.push(fmt_num(w.estimate));
                    row.push(fmt_num(w.std_error));
                    if same_terms && w.ci_lower <= truth[j] && truth[j] <= w.ci_upper {
                        covered[j] += 1;
                    }
                }
            }
            Err(_) => {
                row.extend(["".to_string(), "".to_string(), "".to_string()]);
                row.extend(std::iter::repeat_n(String::new(), 2 * names.len()));
            }
        }
        rows.push(row);
    }
    write_csv(create(&a.out)?, &headers, &rows)?;
    writeln!(stdout, "replicates: {r}, fitted: {fitted}").map_err(out_err)?;
    if same_terms {
        for (n, c) in names.iter().zip(&covered) {
            writeln!(stdout, "coverage {n}: {c}/{fitted}").map_err(out_err)?;
        }
    }
    Ok(if fitted == r { EXIT_OK } else { EXIT_ESTIMATION })
}
