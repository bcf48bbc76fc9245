//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each and exits non-zero if any failed.
//!
//! `cargo test --release --test acceptance` (the test profile is already
//! optimized, so plain `cargo test` is fine too).

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::BFGS;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use haft::cli::io::RawTable;
use haft::cli::run_replicates;
use haft::fit::{fit_censored, fit_dataset, fit_uncensored, loglik_complete, loglik_observed, FitControl};
use haft::inference::{aic, time_scale_aic, wald_summary};
use haft::model::{build_designs, CovariateSpec, DesignPair, FittedModel, HaftParams, Status};
use haft::numkernel::{inv_mills_f, trunc_second_moment_g, QuadratureSpec};
use haft::par::Execution;
use haft::predict::prediction_interval;
use haft::residuals::{observed_cdf, pit_residuals, CensoringModel, RowModels};
use haft::simulate::{censoring_rate, simulate, Censoring, CovariateGen, Generator, HaftTruth, SimSpec};

type Outcome = Result<String, String>;

struct Traces(Vec<(String, Vec<f64>)>);

impl Traces {
    fn add(&mut self, label: impl Into<String>, model: &FittedModel) {
        self.0.push((label.into(), model.trace.clone()));
    }
}

struct Line {
    id: usize,
    title: &'static str,
    status: &'static str,
    detail: String,
    elapsed: Duration,
}

fn run(id: usize, title: &'static str, budget: Option<Duration>, f: impl FnOnce() -> Option<Outcome>) -> Line {
    eprintln!("running criterion {id} ({title})");
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (status, detail) = match outcome {
        None => ("SKIP", "dataset not found".to_string()),
        Some(Ok(d)) => match budget {
            Some(b) if elapsed > b => ("FAIL", format!("{d}; over the {}s budget", b.as_secs())),
            _ => ("PASS", d),
        },
        Some(Err(d)) => ("FAIL", d),
    };
    let line = Line { id, title, status, detail, elapsed };
    eprintln!("  {}: {}", line.status, line.detail);
    line
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

// ---------------------------------------------------------------- criterion 1

/// Z | Z > a by plain rejection for small a and by Robert's translated
/// exponential proposal in the upper tail.
fn truncated_draw(a: f64, rng: &mut ChaCha8Rng) -> f64 {
    if a <= 0.3 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z > a {
                return z;
            }
        }
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp = Exp::new(lambda).unwrap();
    loop {
        let x = a + exp.sample(rng);
        let u: f64 = rng.random();
        if u <= (-0.5 * (x - lambda) * (x - lambda)).exp() {
            return x;
        }
    }
}

fn criterion_1() -> Outcome {
    const DRAWS: usize = 10_000_000;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for k in 0..20 {
        let a = -6.0 + 12.0 * k as f64 / 19.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + k as u64);
        let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for _ in 0..DRAWS {
            let z = truncated_draw(a, &mut rng);
            let z2 = z * z;
            s1 += z;
            s2 += z2;
            s4 += z2 * z2;
        }
        let n = DRAWS as f64;
        let (m1, m2, m4) = (s1 / n, s2 / n, s4 / n);
        let se_f = ((m2 - m1 * m1) / n).sqrt();
        let se_g = ((m4 - m2 * m2) / n).sqrt();
        let zf = (inv_mills_f(a).unwrap() - m1) / se_f;
        let zg = (trunc_second_moment_g(a).unwrap() - m2) / se_g;
        worst = worst.max(zf.abs()).max(zg.abs());
        if zf.abs() > 4.0 || zg.abs() > 4.0 {
            failures.push(format!("a={a:.3}: f off by {zf:.2} SE, g off by {zg:.2} SE"));
        }
    }
    let mut identity: f64 = 0.0;
    for k in 0..=6000 {
        let a = -30.0 + k as f64 * 0.01;
        let f = inv_mills_f(a).unwrap();
        let g = trunc_second_moment_g(a).unwrap();
        identity = identity.max((g - (1.0 + a * f)).abs());
    }
    if identity > 1e-12 {
        failures.push(format!("g = 1 + a·f violated by {identity:.2e}"));
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("max |z| = {worst:.2} SE over 20 points; identity error {identity:.1e}")
        } else {
            failures.join("; ")
        },
    )
}

// ------------------------------------------------------------ criteria 2 and 3

/// Negative log-likelihood written out from scratch for the quasi-Newton
/// oracle. Censored rows contribute log S via erfc.
struct Oracle {
    w: DMatrix<f64>,
    z: DMatrix<f64>,
    y: Vec<f64>,
    event: Vec<bool>,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

impl Oracle {
    fn split(&self, theta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let p = self.w.ncols();
        let beta = DVector::from_column_slice(&theta[..p]);
        let gamma = DVector::from_column_slice(&theta[p..]);
        (&self.w * beta, &self.z * gamma)
    }

    fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (mu, eta) = self.split(theta);
        let p = self.w.ncols();
        let mut nll = 0.0;
        let mut grad = vec![0.0; theta.len()];
        for i in 0..self.y.len() {
            let sigma = (0.5 * eta[i]).exp();
            let a = (self.y[i] - mu[i]) / sigma;
            // d(ll)/dμ and d(ll)/dη for this row
            let (ll, d_mu, d_eta) = if self.event[i] {
                (-0.5 * LN_2PI - 0.5 * eta[i] - 0.5 * a * a, a / sigma, -0.5 + 0.5 * a * a)
            } else {
                let s = 0.5 * erfc(a / std::f64::consts::SQRT_2);
                let h = (-0.5 * a * a - 0.5 * LN_2PI).exp() / s;
                (s.ln(), h / sigma, 0.5 * h * a)
            };
            nll -= ll;
            for j in 0..p {
                grad[j] -= d_mu * self.w[(i, j)];
            }
            for j in 0..self.z.ncols() {
                grad[p + j] -= d_eta * self.z[(i, j)];
            }
        }
        (nll, grad)
    }

    fn start(&self) -> Vec<f64> {
        let n = self.y.len() as f64;
        let mean = self.y.iter().sum::<f64>() / n;
        let var = self.y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut x = vec![0.0; self.w.ncols() + self.z.ncols()];
        x[0] = mean;
        x[self.w.ncols()] = var.ln();
        x
    }

    fn maximize(self) -> Result<(Vec<f64>, f64), String> {
        let x0 = self.start();
        let k = x0.len();
        // the curvature grows like n, so start from I/n rather than I
        let diag = 1.0 / self.y.len() as f64;
        let h0: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| if i == j { diag } else { 0.0 }).collect()).collect();
        let solver = BFGS::new(MoreThuenteLineSearch::new())
            .with_tolerance_grad(1e-10)
            .map_err(|e| e.to_string())?
            .with_tolerance_cost(1e-13)
            .map_err(|e| e.to_string())?;
        let res = Executor::new(&self, solver)
            .configure(|s| s.param(x0).inv_hessian(h0).max_iters(5_000))
            .run();
        let state = match res {
            Ok(r) => r.state().clone(),
            Err(e) => return Err(format!("oracle optimizer: {e}")),
        };
        let best = state.get_best_param().cloned().ok_or("oracle returned no parameter")?;
        let g = self.value_and_grad(&best).1;
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok((best, gnorm))
    }
}

impl CostFunction for &Oracle {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        let v = self.value_and_grad(p).0;
        if v.is_nan() {
            return Err(argmin::core::Error::msg("NaN objective"));
        }
        Ok(v)
    }
}

impl Gradient for &Oracle {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;
    fn gradient(&self, p: &Vec<f64>) -> Result<Vec<f64>, argmin::core::Error> {
        Ok(self.value_and_grad(p).1)
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols, |_, j| if j == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) })
}

struct Problem {
    designs: DesignPair,
    logtimes: DVector<f64>,
    status: Vec<Status>,
}

/// Random heteroscedastic problem; with `censor` the censoring times are
/// normal around μ with an offset tuned to the requested rate.
fn random_problem(rng: &mut ChaCha8Rng, n: usize, censor: Option<f64>) -> Problem {
    let p = rng.random_range(1..=3);
    let q = rng.random_range(1..=3);
    let w = normal_matrix(rng, n, p);
    let z = normal_matrix(rng, n, q);
    let beta = DVector::from_fn(p, |j, _| if j == 0 { rng.random_range(0.5..2.5) } else { rng.random_range(-1.0..1.0) });
    let gamma = DVector::from_fn(q, |j, _| if j == 0 { rng.random_range(-1.0..0.5) } else { rng.random_range(-0.5..0.5) });
    let mu = &w * &beta;
    let eta = &z * &gamma;
    let mut y = DVector::zeros(n);
    let mut status = vec![Status::Event; n];
    let sd = Normal::standard();
    for i in 0..n {
        let e: f64 = rng.sample(StandardNormal);
        y[i] = mu[i] + (0.5 * eta[i]).exp() * e;
        if let Some(rate) = censor {
            let spread = (0.5 * gamma[0]).exp();
            let offset = -sd.inverse_cdf(rate) * (2.0 * spread * spread).sqrt();
            let c = mu[i] + offset + spread * rng.sample::<f64, _>(StandardNormal);
            if c < y[i] {
                y[i] = c;
                status[i] = Status::Censored;
            }
        }
    }
    Problem { designs: DesignPair::from_matrices(w, z).unwrap(), logtimes: y, status }
}

fn oracle_for(pr: &Problem) -> Oracle {
    Oracle {
        w: pr.designs.w.clone(),
        z: pr.designs.z.clone(),
        y: pr.logtimes.iter().copied().collect(),
        event: pr.status.iter().map(|s| s.is_event()).collect(),
    }
}

/// The default stopping rule (relative change in ℓ below 1e-8) leaves ECM
/// a few 1e-4 short of the optimum on small censored problems, which is
/// coarser than the comparison; both oracle comparisons use a tight rule.
fn oracle_control() -> FitControl {
    FitControl { tol: 1e-13, max_iter: 20_000, ..FitControl::default() }
}

fn max_coord_diff(model: &FittedModel, oracle: &[f64]) -> f64 {
    model
        .params
        .to_vector()
        .iter()
        .zip(oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn criterion_2(traces: &mut Traces) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2_002);
    let control = oracle_control();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for k in 0..20 {
        let n = rng.random_range(25..=200);
        let pr = random_problem(&mut rng, n, None);
        let model = fit_uncensored(&pr.designs, &pr.logtimes, &control, None).map_err(|e| format!("problem {k}: {e}"))?;
        traces.add(format!("uncensored problem {k}"), &model);
        let (opt, gnorm) = oracle_for(&pr).maximize()?;
        let ll_ours = loglik_complete(&pr.designs, &model.params, &pr.logtimes).unwrap();
        let ll_oracle = loglik_complete(&pr.designs, &HaftParams::from_vector(&DVector::from_vec(opt.clone()), pr.designs.p()), &pr.logtimes).unwrap();
        let d = max_coord_diff(&model, &opt);
        worst = worst.max(d);
        if d > 1e-5 || !model.converged {
            failures.push(format!(
                "problem {k} (n={n}, p={}, q={}): max diff {d:.2e}, converged {}, ℓ ours {ll_ours:.10} vs oracle {ll_oracle:.10}, oracle |∇| {gnorm:.1e}",
                pr.designs.p(),
                pr.designs.q(),
                model.converged
            ));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() { format!("max coordinate difference {worst:.2e} over 20 problems") } else { failures.join("; ") },
    )
}

fn criterion_3(traces: &mut Traces) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3_003);
    let control = oracle_control();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut rates = Vec::new();
    let mut k = 0;
    while rates.len() < 20 {
        let n = rng.random_range(60..=200);
        let target = rng.random_range(0.2..0.7);
        let pr = random_problem(&mut rng, n, Some(target));
        let rate = pr.status.iter().filter(|s| !s.is_event()).count() as f64 / n as f64;
        if !(0.2..=0.7).contains(&rate) {
            continue;
        }
        rates.push(rate);
        let model = fit_censored(&pr.designs, &pr.logtimes, &pr.status, &control, None)
            .map_err(|e| format!("problem {k}: {e}"))?;
        traces.add(format!("censored problem {k}"), &model);
        let (opt, gnorm) = oracle_for(&pr).maximize()?;
        let ll_ours = loglik_observed(&pr.designs, &model.params, &pr.logtimes, &pr.status).unwrap();
        let ll_oracle = loglik_observed(
            &pr.designs,
            &HaftParams::from_vector(&DVector::from_vec(opt.clone()), pr.designs.p()),
            &pr.logtimes,
            &pr.status,
        )
        .unwrap();
        let d = max_coord_diff(&model, &opt);
        worst = worst.max(d);
        if d > 1e-4 || !model.converged {
            failures.push(format!(
                "problem {k} (n={n}, p={}, q={}, censored {:.0}%): max diff {d:.2e}, converged {}, ℓ ours {ll_ours:.10} vs oracle {ll_oracle:.10}, oracle |∇| {gnorm:.1e}",
                pr.designs.p(),
                pr.designs.q(),
                100.0 * rate,
                model.converged
            ));
        }
        k += 1;
    }
    let lo = rates.iter().copied().fold(1.0, f64::min);
    let hi = rates.iter().copied().fold(0.0, f64::max);
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("max coordinate difference {worst:.2e} over 20 problems, censoring {:.0}–{:.0}%", 100.0 * lo, 100.0 * hi)
        } else {
            failures.join("; ")
        },
    )
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4(traces: &Traces) -> Outcome {
    let mut steps = 0;
    let mut violations = Vec::new();
    let mut worst_drop: f64 = 0.0;
    for (label, trace) in &traces.0 {
        for (it, pair) in trace.windows(2).enumerate() {
            steps += 1;
            let drop = pair[0] - pair[1];
            worst_drop = worst_drop.max(drop);
            if drop > 1e-10 {
                violations.push(format!("{label} iteration {}: ℓ fell by {drop:.2e}", it + 1));
            }
        }
    }
    if traces.0.is_empty() {
        return Err("no fits were recorded".to_string());
    }
    verdict(
        violations.is_empty(),
        if violations.is_empty() {
            format!("{} fits, {steps} iterations, largest decrease {worst_drop:.1e}", traces.0.len())
        } else {
            format!("{} violations: {}", violations.len(), violations.iter().take(5).cloned().collect::<Vec<_>>().join("; "))
        },
    )
}

// ---------------------------------------------------------------- criterion 5

fn x_normal() -> CovariateGen {
    CovariateGen { name: "x".into(), generator: Generator::Normal { mean: 0.0, sd: 1.0 } }
}

fn criterion_5(traces: &mut Traces) -> Outcome {
    let truth = HaftTruth { location: "1,x".into(), scale: "1,x".into(), beta: vec![1.0, -0.5], gamma: vec![0.2, 0.3] };
    let spec = SimSpec {
        n: 4000,
        seed: 50_000,
        covariates: vec![x_normal()],
        survival: truth.clone(),
        censoring: Censoring::Haft(truth.clone()),
    };
    let fit_spec = truth.covariate_spec().unwrap();
    let results = run_replicates(&spec, &fit_spec, &FitControl::default(), 100, Execution::default());
    let true_theta: Vec<f64> = truth.beta.iter().chain(&truth.gamma).copied().collect();
    let mut covered = vec![0usize; true_theta.len()];
    let mut rate_sum = 0.0;
    for r in &results {
        let model = r.model.as_ref().map_err(|e| format!("seed {}: {e}", r.seed))?;
        traces.add(format!("recovery seed {}", r.seed), model);
        rate_sum += r.censoring_rate;
        let summary = wald_summary(model, 0.95).map_err(|e| e.to_string())?;
        for (j, row) in summary.rows.iter().enumerate() {
            if row.ci_lower <= true_theta[j] && true_theta[j] <= row.ci_upper {
                covered[j] += 1;
            }
        }
    }
    let ok = covered.iter().all(|c| (90..=99).contains(c));
    verdict(
        ok,
        format!(
            "coverage of (β0, β1, γ0, γ1) = {covered:?} of 100, mean censoring {:.1}%",
            100.0 * rate_sum / results.len() as f64
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6_006);
    let control = FitControl::default();
    let (mut worst_beta, mut worst_var, mut worst_ll): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut failures = Vec::new();
    for k in 0..20 {
        let n = rng.random_range(30..=300);
        let p = rng.random_range(1..=4);
        let w = normal_matrix(&mut rng, n, p);
        let y = DVector::from_fn(n, |i, _| {
            2.0 + w.row(i).iter().skip(1).sum::<f64>() * 0.4 + 0.7 * rng.sample::<f64, _>(StandardNormal)
        });
        let designs = DesignPair::from_matrices(w.clone(), DMatrix::from_element(n, 1, 1.0)).unwrap();
        let model = fit_uncensored(&designs, &y, &control, None).map_err(|e| format!("problem {k}: {e}"))?;

        let wt = w.transpose();
        let ols = (&wt * &w).cholesky().ok_or("W'W not positive definite")?.solve(&(&wt * &y));
        let rss = (&y - &w * &ols).norm_squared();
        let var = rss / n as f64;
        let ll_closed = -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * var).ln() + 1.0);

        let db = (&model.params.beta - &ols).amax();
        let dv = (model.params.gamma[0].exp() - var).abs();
        let dl = (model.loglik - ll_closed).abs();
        worst_beta = worst_beta.max(db);
        worst_var = worst_var.max(dv);
        worst_ll = worst_ll.max(dl);
        let k_params = (p + 1) as f64;
        let aic_exact = model.aic == -2.0 * model.loglik + 2.0 * k_params && aic(&model) == model.aic;
        if db > 1e-10 || dv > 1e-10 || dl > 1e-10 * ll_closed.abs().max(1.0) || !aic_exact {
            failures.push(format!("problem {k}: |Δβ| {db:.1e}, |Δσ²| {dv:.1e}, |Δℓ| {dl:.1e}, AIC exact {aic_exact}"));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("20 problems: max |Δβ| {worst_beta:.1e}, |Δσ²| {worst_var:.1e}, |Δℓ| {worst_ll:.1e}; AIC = −2ℓ + 2(p+q) exactly")
        } else {
            failures.join("; ")
        },
    )
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Outcome {
    let survival = HaftTruth {
        location: "1,x,g".into(),
        scale: "1,x".into(),
        beta: vec![1.0, 0.5, 0.3, -0.4],
        gamma: vec![-0.3, 0.4],
    };
    let censoring = HaftTruth {
        location: "1,x,g".into(),
        scale: "1,x".into(),
        beta: vec![1.2, -0.3, 0.2, 0.1],
        gamma: vec![0.0, -0.2],
    };
    let base = SimSpec {
        n: 2000,
        seed: 70_000,
        covariates: vec![
            x_normal(),
            CovariateGen {
                name: "g".into(),
                generator: Generator::Categorical { levels: vec!["a".into(), "b".into(), "c".into()], probs: vec![0.3, 0.3, 0.4] },
            },
        ],
        survival: survival.clone(),
        censoring: Censoring::Haft(censoring.clone()),
    };
    let quad = QuadratureSpec::default();
    let mut passes = 0;
    let mut rate_sum = 0.0;
    for r in 0..100u64 {
        let (data, _) = simulate(&base.with_seed(base.seed + r)).map_err(|e| e.to_string())?;
        rate_sum += censoring_rate(&data).unwrap();
        let sd = build_designs(data.covariates(), &survival.covariate_spec().unwrap()).map_err(|e| e.to_string())?;
        let cd = build_designs(data.covariates(), &censoring.covariate_spec().unwrap()).map_err(|e| e.to_string())?;
        let surv = FittedModel::from_params(&sd, survival.params().unwrap()).unwrap();
        let cens = CensoringModel(FittedModel::from_params(&cd, censoring.params().unwrap()).unwrap());
        let report = pit_residuals(&data, &surv, &cens, &quad).map_err(|e| format!("replicate {r}: {e}"))?;
        if report.ks_pvalue > 0.01 {
            passes += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7_007);
    let mut worst_sum: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    for _ in 0..50 {
        let m = RowModels::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(0.2..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(0.2..3.0),
        )
        .unwrap();
        let y = rng.random_range(-4.0..4.0);
        let ev = observed_cdf(y, Status::Event, &m, &quad).map_err(|e| e.to_string())?;
        let ce = observed_cdf(y, Status::Censored, &m, &quad).map_err(|e| e.to_string())?;
        worst_sum = worst_sum.max((ev.denominator + ce.denominator - 1.0).abs());
        worst_closed = worst_closed
            .max((ev.denominator - m.status_probability(Status::Event)).abs())
            .max((ce.denominator - m.status_probability(Status::Censored)).abs());
    }
    verdict(
        passes >= 95 && worst_sum <= 1e-8,
        format!(
            "KS p > 0.01 in {passes}/100 replicates (mean censoring {:.1}%); denominators sum to 1 within {worst_sum:.1e}, match closed form within {worst_closed:.1e}",
            rate_sum
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8(traces: &mut Traces) -> Outcome {
    let truth = HaftTruth {
        location: "1,x,u".into(),
        scale: "1,x".into(),
        beta: vec![2.0, 0.5, -0.3],
        gamma: vec![-0.5, 0.6],
    };
    let covariates = vec![
        x_normal(),
        CovariateGen { name: "u".into(), generator: Generator::Uniform { low: -1.0, high: 1.0 } },
    ];
    let train = SimSpec { n: 2000, seed: 80_000, covariates: covariates.clone(), survival: truth.clone(), censoring: Censoring::None };
    let test = SimSpec { n: 100_000, seed: 80_001, ..train.clone() };
    let (train_data, _) = simulate(&train).map_err(|e| e.to_string())?;
    let (test_data, _) = simulate(&test).map_err(|e| e.to_string())?;
    let (_, model) = fit_dataset(&train_data, &truth.covariate_spec().unwrap(), &FitControl::default()).map_err(|e| e.to_string())?;
    traces.add("prediction training fit", &model);
    let (mu, sigma) = model.predictors(test_data.covariates()).map_err(|e| e.to_string())?;
    let mut hits = 0usize;
    for i in 0..test_data.len() {
        let pi = prediction_interval(mu[i], sigma[i], 0.95).map_err(|e| e.to_string())?;
        let t = test_data.time()[i];
        if pi.lower <= t && t <= pi.upper {
            hits += 1;
        }
    }
    let coverage = hits as f64 / test_data.len() as f64;
    verdict((0.93..=0.97).contains(&coverage), format!("coverage {:.4} on {} new outcomes", coverage, test_data.len()))
}

// ---------------------------------------------------------------- criterion 9

const COLON_LOCATION: &str =
    "1,rx,sex,age,obstruct,perfor,adhere,nodes,dif,ext,surg,node4,nodes^2,age:dif,obstruct:perfor,sex:age,rx:sex,age:adhere,adhere:dif";
const COLON_SCALE: &str = "1,rx,sex,age,obstruct,perfor,adhere,nodes,dif,ext,surg,node4";

fn colon_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("HAFT_COLON_CSV") {
        return Some(PathBuf::from(p));
    }
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/colon.csv");
    p.exists().then_some(p)
}

fn criterion_9(traces: &mut Traces) -> Option<Outcome> {
    let path = colon_path()?;
    Some((|| {
        let data = RawTable::from_path(&path).and_then(|t| t.dataset("time", "status", None)).map_err(|e| e.to_string())?;
        let control = FitControl::default();
        let aft_spec = CovariateSpec::parse(COLON_LOCATION, "1").unwrap();
        let haft_spec = CovariateSpec::parse(COLON_LOCATION, COLON_SCALE).unwrap();
        let (_, aft) = fit_dataset(&data, &aft_spec, &control).map_err(|e| format!("AFT: {e}"))?;
        let (_, haft) = fit_dataset(&data, &haft_spec, &control).map_err(|e| format!("HAFT: {e}"))?;
        traces.add("colon AFT", &aft);
        traces.add("colon HAFT", &haft);
        verdict(
            aft.converged && haft.converged && haft.aic < aft.aic,
            format!(
                "n={}, censored {}; AIC HAFT {:.3} vs AFT {:.3} (time scale {:.1} vs {:.1})",
                data.len(),
                data.n_censored(),
                haft.aic,
                aft.aic,
                time_scale_aic(&haft, &data),
                time_scale_aic(&aft, &data)
            ),
        )
    })())
}

// --------------------------------------------------------------- criterion 10

const PIPELINE_CONFIG: &str = r#"{
  "n": 400,
  "seed": 20240917,
  "covariates": [
    {"name": "x", "kind": "normal", "mean": 0.0, "sd": 1.0},
    {"name": "grp", "kind": "categorical", "levels": ["a", "b"], "probs": [0.4, 0.6]}
  ],
  "survival": {"location": "1,x,grp", "scale": "1,x", "beta": [1.5, 0.4, -0.3], "gamma": [-0.4, 0.3]},
  "censoring": {"kind": "haft", "location": "1,x", "scale": "1", "beta": [1.8, -0.2], "gamma": [-0.2]}
}
"#;

const PIPELINE_FILES: [&str; 7] =
    ["data.csv", "truth.csv", "model.json", "pred.csv", "curves.csv", "pit.csv", "hillis.csv"];

fn haft(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_haft"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("haft {} exited with {}: {}", args[0], out.status, String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn pipeline_once() -> Result<Vec<(String, Vec<u8>)>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    std::fs::write(d.join("sim.json"), PIPELINE_CONFIG).map_err(|e| e.to_string())?;
    let mut outputs = vec![
        ("simulate stdout".to_string(), haft(d, &["simulate", "--config", "sim.json", "--out", "data.csv", "--truth-out", "truth.csv"])?),
        ("fit stdout".to_string(), haft(d, &["fit", "--data", "data.csv", "--loc-terms", "1,x,grp", "--scale-terms", "1,x", "--out", "model.json"])?),
        (
            "predict stdout".to_string(),
            haft(d, &["predict", "--model", "model.json", "--data", "data.csv", "--out", "pred.csv", "--grid", "0.5,20,25", "--curves-out", "curves.csv"])?,
        ),
        ("residuals stdout".to_string(), haft(d, &["residuals", "--model", "model.json", "--data", "data.csv", "--fit-censoring", "--out", "pit.csv"])?),
        (
            "hillis stdout".to_string(),
            haft(d, &["residuals", "--model", "model.json", "--data", "data.csv", "--method", "hillis", "--seed", "11", "--fit-censoring", "--out", "hillis.csv"])?,
        ),
    ];
    for f in PIPELINE_FILES {
        outputs.push((f.to_string(), std::fs::read(d.join(f)).map_err(|e| format!("{f}: {e}"))?));
    }
    Ok(outputs)
}

fn criterion_10() -> Outcome {
    let first = pipeline_once()?;
    let second = pipeline_once()?;
    let differing: Vec<&str> = first.iter().zip(&second).filter(|(a, b)| a.1 != b.1).map(|(a, _)| a.0.as_str()).collect();
    let bytes: usize = first.iter().map(|(_, b)| b.len()).sum();
    let empty: Vec<&str> = first.iter().filter(|(n, b)| b.is_empty() && !n.ends_with("stdout")).map(|(n, _)| n.as_str()).collect();
    verdict(
        differing.is_empty() && empty.is_empty(),
        if differing.is_empty() && empty.is_empty() {
            format!("{} outputs ({bytes} bytes) identical across two runs", first.len())
        } else {
            format!("differing: {differing:?}; empty: {empty:?}")
        },
    )
}

fn main() {
    let mut traces = Traces(Vec::new());
    let mut lines = vec![
        run(1, "truncated-moment oracle", secs(60), || Some(criterion_1())),
        run(2, "optimizer equivalence, uncensored", secs(60), || Some(criterion_2(&mut traces))),
        run(3, "optimizer equivalence, censored", secs(120), || Some(criterion_3(&mut traces))),
        run(5, "parameter recovery", secs(300), || Some(criterion_5(&mut traces))),
        run(6, "homoscedastic reduction", None, || Some(criterion_6())),
        run(7, "residual calibration", secs(300), || Some(criterion_7())),
        run(8, "prediction-interval coverage", secs(30), || Some(criterion_8(&mut traces))),
        run(9, "colon AIC direction", None, || criterion_9(&mut traces)),
        run(10, "end-to-end determinism", None, || Some(criterion_10())),
    ];
    lines.push(run(4, "ECM monotonicity", None, || Some(criterion_4(&traces))));
    lines.sort_by_key(|l| l.id);

    println!();
    for l in &lines {
        println!("criterion {:>2} ({}): {} - {} [{:.1}s]", l.id, l.title, l.status, l.detail, l.elapsed.as_secs_f64());
    }
    let failed = lines.iter().filter(|l| l.status == "FAIL").count();
    let skipped = lines.iter().filter(|l| l.status == "SKIP").count();
    println!("{} passed, {failed} failed, {skipped} skipped", lines.len() - failed - skipped);
    if failed > 0 {
        std::process::exit(1);
    }
}
