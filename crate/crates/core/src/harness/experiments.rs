//! Monte Carlo drivers.
//!
//! Replicate `r` of a cell draws its data from the stream keyed by
//! `(seed, signal, c, n, r)`. Method, kernel and horizon are not part of the
//! key, so every method and every forced horizon sees the same datasets.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::data::{generate_dataset, Dataset, SignalModel};
use super::report::{CellRecord, CurveRecord, CurveSummary, SimulationReport};
use crate::descent::{make_schedule, spectral_fitted_values, ShrinkageSweep, StepSchedule, StepSize};
use crate::kernels::{empirical_eigenvalues, EmpiricalKernelEigen, KernelSpec};
use crate::ridge::{cv_select_lambda, default_lambda_grid, krr_fit, krr_wald_test};
use crate::rng::{derive_seed, label_hash};
use crate::stopping::{
    stop_rule_bootstrap, stop_rule_estimation, stop_rule_oracle, stop_rule_testing, BootstrapConfig, RuleKind,
    StoppingDiagnostics,
};
use crate::testing::{null_moments_at, test_statistic, wald_decision, NullMoments};
use crate::{Error, Result};

const BOOTSTRAP_STREAM: u64 = 0xB0;
const CV_STREAM: u64 = 0xC5;

/// Seed of replicate `r` in the cell `(signal, n)`.
pub fn replicate_seed(master: u64, signal: &SignalModel, n: usize, r: usize) -> u64 {
    derive_seed(&[master, label_hash(signal.id.label()), signal.c.to_bits(), n as u64, r as u64])
}

pub fn replicate_dataset(cfg: &ExperimentConfig, signal: &SignalModel, n: usize, r: usize) -> Result<Dataset> {
    generate_dataset(signal, n, cfg.noise_sd, replicate_seed(cfg.seed, signal, n, r))
}

/// Result of one test on one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub reject: bool,
    /// Iteration at which the test was run.
    pub t: Option<usize>,
    /// `η_T`, or `1/λ` for the penalized test.
    pub eta: Option<f64>,
    /// The stopping rule found no crossing within its horizon.
    pub failed: bool,
}

impl ReplicateOutcome {
    fn failure() -> Self {
        Self {
            reject: false,
            t: None,
            eta: None,
            failed: true,
        }
    }
}

/// Early-stopping Wald test at iteration `t`.
pub fn early_stopping_test(
    eig: &EmpiricalKernelEigen,
    y: &[f64],
    schedule: &StepSchedule,
    t: usize,
    noise_variance: f64,
    level: f64,
) -> Result<ReplicateOutcome> {
    let f = spectral_fitted_values(eig, y, schedule, t)?;
    let moments = null_moments_at(eig.eigenvalues(), schedule, t, noise_variance)?;
    let report = wald_decision(test_statistic(&f), &moments, level)?;
    Ok(ReplicateOutcome {
        reject: report.rejects(),
        t: Some(t),
        eta: Some(schedule.eta(t)),
        failed: false,
    })
}

fn stopped_or_failed(
    result: Result<StoppingDiagnostics>,
) -> Result<Option<StoppingDiagnostics>> {
    match result {
        Ok(d) => Ok(Some(d)),
        Err(Error::HorizonExhausted { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs one method on one dataset whose eigensystem is already known.
pub fn evaluate_method(
    method: Method,
    data: &Dataset,
    eig: &EmpiricalKernelEigen,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ReplicateOutcome> {
    let schedule = make_schedule(eig.eigenvalues(), cfg.step)?;
    let n = data.n();
    let var = cfg.noise_variance();
    let t_max = cfg.t_max.unwrap_or_else(|| schedule.default_horizon(n));
    match method {
        Method::Es => {
            let boot = BootstrapConfig {
                resamples: cfg.bootstrap_resamples,
                seed: derive_seed(&[seed, BOOTSTRAP_STREAM]),
                t_max: Some(t_max),
            };
            let diag = stop_rule_bootstrap(&data.x, &data.y, eig, &cfg.kernel, &schedule, &boot);
            match stopped_or_failed(diag)? {
                Some(d) => early_stopping_test(eig, &data.y, &schedule, d.stop, var, cfg.level),
                None => Ok(ReplicateOutcome::failure()),
            }
        }
        Method::OracleEs => {
            let truth = data
                .truth
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("oracle rule needs the true signal".into()))?;
            match stopped_or_failed(stop_rule_oracle(eig, &schedule, truth, t_max))? {
                Some(d) => early_stopping_test(eig, &data.y, &schedule, d.stop, var, cfg.level),
                None => Ok(ReplicateOutcome::failure()),
            }
        }
        Method::PenalizedCv => {
            let grid = default_lambda_grid(eig.eigenvalues())?;
            let folds = cfg.cv_folds.min(n);
            let sel = cv_select_lambda(&data.x, &data.y, &cfg.kernel, folds, &grid, derive_seed(&[seed, CV_STREAM]))?;
            let fit = krr_fit(eig, &data.y, sel.lambda)?;
            let report = krr_wald_test(&fit, var, cfg.level)?;
            Ok(ReplicateOutcome {
                reject: report.rejects(),
                t: None,
                eta: Some(1.0 / sel.lambda),
                failed: false,
            })
        }
        Method::FixedT => Err(Error::InvalidArgument("fixed-horizon runs go through the gamma sweep".into())),
    }
}

struct CellKey<'a> {
    method: Method,
    kernel: &'a KernelSpec,
    signal: &'a SignalModel,
    n: usize,
    gamma: Option<f64>,
    forced_t: Option<usize>,
    clamped: bool,
}

fn aggregate(key: CellKey<'_>, outcomes: &[(ReplicateOutcome, f64)], cfg: &ExperimentConfig) -> CellRecord {
    let replicates = outcomes.len();
    let rejections = outcomes.iter().filter(|(o, _)| o.reject).count();
    let failures = outcomes.iter().filter(|(o, _)| o.failed).count();
    let mean = |vals: Vec<f64>| {
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    CellRecord {
        method: key.method.label().to_string(),
        kernel: key.kernel.label(),
        signal: key.signal.id.label().to_string(),
        c: key.signal.c,
        n: key.n,
        gamma: key.gamma,
        replicates,
        rejections,
        rate: rejections as f64 / replicates as f64,
        mean_t: mean(outcomes.iter().filter_map(|(o, _)| o.t.map(|t| t as f64)).collect()),
        mean_eta_t: mean(outcomes.iter().filter_map(|(o, _)| o.eta).collect()),
        failures,
        wall_ms: cfg.timing.then(|| outcomes.iter().map(|(_, ms)| ms).sum()),
        seed: cfg.seed,
        valid: failures * 100 <= replicates,
        forced_t: key.forced_t,
        clamped: key.clamped,
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Size or power of each configured method on each `(c, n)` cell. Methods
/// share datasets and eigensystems replicate by replicate.
pub fn run_size_power(cfg: &ExperimentConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    if cfg.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods selected".into()));
    }
    if cfg.methods.contains(&Method::FixedT) {
        return Err(Error::InvalidArgument("fixed-horizon runs go through the gamma sweep".into()));
    }
    let mut report = SimulationReport::new(cfg);
    for signal in cfg.signals() {
        for &n in &cfg.n {
            let per_rep: Vec<Vec<(ReplicateOutcome, f64)>> = (0..cfg.replicates)
                .into_par_iter()
                .map(|r| {
                    let data = replicate_dataset(cfg, &signal, n, r)?;
                    let start = Instant::now();
                    let eig = EmpiricalKernelEigen::new(&cfg.kernel, &data.x)?;
                    let shared = elapsed_ms(start);
                    let seed = replicate_seed(cfg.seed, &signal, n, r);
                    cfg.methods
                        .iter()
                        .map(|&m| {
                            let start = Instant::now();
                            let outcome = evaluate_method(m, &data, &eig, cfg, seed)?;
                            Ok((outcome, shared + elapsed_ms(start)))
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            for (k, &method) in cfg.methods.iter().enumerate() {
                let outcomes: Vec<(ReplicateOutcome, f64)> = per_rep.iter().map(|v| v[k]).collect();
                let key = CellKey {
                    method,
                    kernel: &cfg.kernel,
                    signal: &signal,
                    n,
                    gamma: None,
                    forced_t: None,
                    clamped: false,
                };
                report.cells.push(aggregate(key, &outcomes, cfg));
            }
        }
    }
    report.sort();
    Ok(report)
}

/// Paired comparison of the early-stopping, oracle and penalized tests.
/// With no methods configured all three are run.
pub fn run_method_comparison(cfg: &ExperimentConfig) -> Result<SimulationReport> {
    let mut cfg = cfg.clone();
    if cfg.methods.is_empty() {
        cfg.methods = vec![Method::Es, Method::OracleEs, Method::PenalizedCv];
    }
    if cfg.methods.contains(&Method::FixedT) {
        return Err(Error::InvalidArgument("comparison covers es, oracle_es and penalized_cv".into()));
    }
    run_size_power(&cfg)
}

/// `n^{4m/(4m+1)}` for Sobolev order `m`; `n (log n)^{-1/4}` for the Gaussian kernel.
pub fn sweep_base(kernel: &KernelSpec, n: usize) -> f64 {
    let n = n as f64;
    match kernel {
        KernelSpec::PeriodicSobolev { order } => {
            let m = *order as f64;
            n.powf(4.0 * m / (4.0 * m + 1.0))
        }
        KernelSpec::Gaussian { .. } => n / n.ln().max(f64::MIN_POSITIVE).powf(0.25),
    }
}

/// `round(base(n)^γ)` raised to at least 1; the flag reports the clamp.
pub fn forced_horizon(kernel: &KernelSpec, n: usize, gamma: f64) -> (usize, bool) {
    let t = sweep_base(kernel, n).powf(gamma).round();
    if t < 1.0 || !t.is_finite() {
        (1, true)
    } else {
        (t as usize, false)
    }
}

/// Tests at forced horizons `T = round(base(n)^γ)` for each γ.
pub fn run_gamma_sweep(cfg: &ExperimentConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    if cfg.gamma.is_empty() {
        return Err(Error::InvalidArgument("gamma sweep needs at least one exponent".into()));
    }
    let mut report = SimulationReport::new(cfg);
    for signal in cfg.signals() {
        for &n in &cfg.n {
            let horizons: Vec<(usize, bool)> = cfg.gamma.iter().map(|&g| forced_horizon(&cfg.kernel, n, g)).collect();
            let per_rep: Vec<Vec<(ReplicateOutcome, f64)>> = (0..cfg.replicates)
                .into_par_iter()
                .map(|r| {
                    let data = replicate_dataset(cfg, &signal, n, r)?;
                    let start = Instant::now();
                    let eig = EmpiricalKernelEigen::new(&cfg.kernel, &data.x)?;
                    let schedule = make_schedule(eig.eigenvalues(), cfg.step)?;
                    let shared = elapsed_ms(start);
                    horizons
                        .iter()
                        .map(|&(t, _)| {
                            let start = Instant::now();
                            let o = early_stopping_test(&eig, &data.y, &schedule, t, cfg.noise_variance(), cfg.level)?;
                            Ok((o, shared + elapsed_ms(start)))
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            for (k, (&gamma, &(t, clamped))) in cfg.gamma.iter().zip(&horizons).enumerate() {
                let outcomes: Vec<(ReplicateOutcome, f64)> = per_rep.iter().map(|v| v[k]).collect();
                let key = CellKey {
                    method: Method::FixedT,
                    kernel: &cfg.kernel,
                    signal: &signal,
                    n,
                    gamma: Some(gamma),
                    forced_t: Some(t),
                    clamped,
                };
                report.cells.push(aggregate(key, &outcomes, cfg));
            }
        }
    }
    report.sort();
    Ok(report)
}

struct CurveReplicate {
    alpha: f64,
    /// `(mse, reject, mu, sigma)` for `t = 0..=t_max`.
    rows: Vec<(f64, bool, f64, f64)>,
}

fn median(mut v: Vec<usize>) -> usize {
    if v.is_empty() {
        return 0;
    }
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Per-iteration MSE and power for a single `(c, n)` cell. Without an explicit
/// `t_max` the curve runs to ten times the largest per-replicate `T*`.
pub fn run_iteration_curves(cfg: &ExperimentConfig, t_max: Option<usize>) -> Result<SimulationReport> {
    cfg.validate()?;
    if cfg.n.len() != 1 || cfg.c.len() != 1 {
        return Err(Error::InvalidArgument("curves need exactly one n and one c".into()));
    }
    let n = cfg.n[0];
    let signal = cfg.signals()[0];
    let var = cfg.noise_variance();

    // Stopping times only need eigenvalues.
    let stops: Vec<(Option<usize>, Option<usize>)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let data = replicate_dataset(cfg, &signal, n, r)?;
            let eigs = empirical_eigenvalues(&cfg.kernel, &data.x)?;
            let schedule = make_schedule(&eigs, cfg.step)?;
            let horizon = cfg.t_max.unwrap_or_else(|| schedule.default_horizon(n));
            let ts = stopped_or_failed(stop_rule_testing(&eigs, &schedule, cfg.noise_sd, horizon))?;
            let te = stopped_or_failed(stop_rule_estimation(&eigs, &schedule, cfg.noise_sd, horizon))?;
            Ok((ts.map(|d| d.stop), te.map(|d| d.stop)))
        })
        .collect::<Result<_>>()?;
    let t_stars: Vec<usize> = stops.iter().filter_map(|s| s.0).collect();
    let t_tildes: Vec<usize> = stops.iter().filter_map(|s| s.1).collect();
    let horizon_failures = stops.iter().filter(|s| s.0.is_none() || s.1.is_none()).count();
    let t_max = match t_max {
        Some(t) => t,
        None => 10 * t_stars.iter().copied().max().unwrap_or(1),
    };

    let reps: Vec<CurveReplicate> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let data = replicate_dataset(cfg, &signal, n, r)?;
            let eig = EmpiricalKernelEigen::new(&cfg.kernel, &data.x)?;
            let schedule = make_schedule(eig.eigenvalues(), cfg.step)?;
            let z = eig.project(&data.y)?;
            let truth = eig.project(data.truth.as_deref().unwrap_or(&vec![0.0; n]))?;
            let inv_n = 1.0 / n as f64;
            let mut sweep = ShrinkageSweep::new(eig.eigenvalues(), &schedule);
            let mut rows = Vec::with_capacity(t_max + 1);
            loop {
                let s = sweep.s();
                let (mut stat, mut mse) = (0.0, 0.0);
                for ((s, z), f) in s.iter().zip(&z).zip(&truth) {
                    let fit = (1.0 - s) * z;
                    stat += fit * fit;
                    mse += (fit - f) * (fit - f);
                }
                let moments = NullMoments::from_factors(s.iter().map(|v| 1.0 - v), n, var);
                let report = wald_decision(stat * inv_n, &moments, cfg.level)?;
                rows.push((mse * inv_n, report.rejects(), moments.mu, moments.sigma));
                if sweep.t() == t_max {
                    break;
                }
                sweep.advance();
            }
            Ok(CurveReplicate { alpha: schedule.alpha(0), rows })
        })
        .collect::<Result<_>>()?;

    let mean_alpha = reps.iter().map(|r| r.alpha).sum::<f64>() / reps.len() as f64;
    let mut report = SimulationReport::new(cfg);
    let r_count = reps.len() as f64;
    for t in 0..=t_max {
        let (mut mse, mut rej, mut mu, mut sigma) = (0.0, 0usize, 0.0, 0.0);
        for rep in &reps {
            let row = rep.rows[t];
            mse += row.0;
            rej += row.1 as usize;
            mu += row.2;
            sigma += row.3;
        }
        report.curves.push(CurveRecord {
            t,
            // Averaged over designs, whose capped steps can differ.
            eta_t: mean_alpha * t as f64,
            mse: mse / r_count,
            power: (t > 0).then(|| rej as f64 / r_count),
            mu_nt: mu / r_count,
            sigma_nt: sigma / r_count,
        });
    }
    let body = &report.curves[1.min(report.curves.len() - 1)..];
    let argmin_mse_t = body.iter().min_by(|a, b| a.mse.total_cmp(&b.mse)).map(|r| r.t).unwrap_or(0);
    let (argmax_power_t, max_power) = body
        .iter()
        .fold((0, f64::NEG_INFINITY), |best, r| match r.power {
            Some(p) if p > best.1 => (r.t, p),
            _ => best,
        });
    report.curve_summary = Some(CurveSummary {
        argmin_mse_t,
        argmax_power_t,
        max_power,
        t_star: median(t_stars),
        t_tilde: median(t_tildes),
        horizon_failures,
    });
    Ok(report)
}

/// Which rule `stop_dataset` applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRequest {
    pub rule: RuleKind,
    pub step: StepSize,
    pub noise_sd: f64,
    pub bootstrap_resamples: usize,
    pub seed: u64,
    pub t_max: Option<usize>,
}

/// Stopping diagnosis for one dataset. The oracle rule needs `data.truth`.
pub fn stop_dataset(data: &Dataset, kernel: &KernelSpec, req: &StopRequest) -> Result<StoppingDiagnostics> {
    let eig = EmpiricalKernelEigen::new(kernel, &data.x)?;
    let schedule = make_schedule(eig.eigenvalues(), req.step)?;
    let t_max = req.t_max.unwrap_or_else(|| schedule.default_horizon(data.n()));
    let diag = match req.rule {
        RuleKind::Testing => stop_rule_testing(eig.eigenvalues(), &schedule, req.noise_sd, t_max),
        RuleKind::Estimation => stop_rule_estimation(eig.eigenvalues(), &schedule, req.noise_sd, t_max),
        RuleKind::Oracle => {
            let truth = data
                .truth
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("oracle rule needs the true signal".into()))?;
            stop_rule_oracle(&eig, &schedule, truth, t_max)
        }
        RuleKind::Bootstrap => {
            let cfg = BootstrapConfig {
                resamples: req.bootstrap_resamples,
                seed: req.seed,
                t_max: Some(t_max),
            };
            stop_rule_bootstrap(&data.x, &data.y, &eig, kernel, &schedule, &cfg)
        }
    }?;
    Ok(diag.with_population(&kernel.decay_model()))
}
