//! Stopping rules.
//!
//! Every rule scans `t = 1, 2, …` and stops at the first `t` where a
//! decreasing "bias" side drops strictly below an increasing "threshold"
//! side:
//!
//! | rule | bias side | threshold side |
//! |------|-----------|----------------|
//! | testing `T*` | `1/η_t` | `(σ/n) sqrt(Σ min{1, η_t μ̂_i})` |
//! | estimation `T̃` | `1/η_t` | `(σ/n) Σ min{1, η_t μ̂_i}` |
//! | oracle `T†` | `(1/n) Σ s_i² [Uᵀf*]_i²` | `(1/n) sqrt(2 Σ (1 - s_i)⁴)` |
//! | bootstrap | `(1/n) Σ s_i² [Uᵀf_tB]_i²` | `(1/n) sqrt(2 Σ (1 - s_i)⁴)` |
//!
//! where `f_tB` averages pair-bootstrap fits evaluated at the original design.

use faer::Mat;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descent::{coefficient_gain, make_schedule, ShrinkageSweep, StepSchedule};
use crate::error::ensure_len;
use crate::kernels::{
    cross_kernel_matrix, empirical_kappa_index, empirical_kernel_matrix, DecayModel, EmpiricalKernelEigen, KernelSpec,
};
use crate::rng::stream;
use crate::testing::{check_noise_variance, NullMoments};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Testing,
    Estimation,
    Oracle,
    Bootstrap,
}

impl RuleKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Testing => "testing",
            Self::Estimation => "estimation",
            Self::Oracle => "oracle",
            Self::Bootstrap => "bootstrap",
        }
    }
}

/// Both sides of the rule's inequality at iteration `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub eta: f64,
    pub bias_side: f64,
    pub threshold_side: f64,
    /// `d²_{n,t} = 1/η_t + σ_{n,t}`.
    pub separation_sq: f64,
}

impl TraceRecord {
    pub fn crossed(&self) -> bool {
        self.bias_side < self.threshold_side
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingDiagnostics {
    pub rule: RuleKind,
    /// Selected iteration `T ≥ 1`.
    pub stop: usize,
    pub eta_stop: f64,
    /// Records for `t = 1..=stop` (or up to the horizon on failure).
    pub trace: Vec<TraceRecord>,
    /// `κ̃` at `T` from the empirical eigenvalues.
    pub kappa_empirical: usize,
    /// `κ` at `T` from a population decay model, when one is attached.
    pub kappa_population: Option<usize>,
    /// Null moments of `D_{n,T}`.
    pub moments: NullMoments,
}

impl StoppingDiagnostics {
    pub fn with_population(mut self, model: &DecayModel) -> Self {
        self.kappa_population = Some(model.count_at_least(1.0 / self.eta_stop));
        self
    }

    /// The iteration minimising the traced separation rate.
    pub fn separation_argmin(&self) -> Option<usize> {
        self.trace
            .iter()
            .min_by(|a, b| a.separation_sq.total_cmp(&b.separation_sq))
            .map(|r| r.t)
    }
}

/// Shared scan: `sides(eta, s)` returns `(bias_side, threshold_side)`.
fn scan<F>(
    rule: RuleKind,
    eigenvalues: &[f64],
    schedule: &StepSchedule,
    noise_variance: f64,
    t_max: usize,
    mut sides: F,
) -> Result<StoppingDiagnostics>
where
    F: FnMut(usize, f64, &[f64]) -> (f64, f64),
{
    if t_max == 0 {
        return Err(Error::InvalidArgument("search horizon must be at least 1".into()));
    }
    let n = eigenvalues.len();
    let mut sweep = ShrinkageSweep::new(eigenvalues, schedule);
    let mut trace = Vec::new();
    let mut moments = NullMoments { mu: 0.0, sigma: 0.0 };
    let mut stop = None;
    for t in 1..=t_max {
        sweep.advance();
        let eta = sweep.eta();
        let s = sweep.s();
        moments = NullMoments::from_factors(s.iter().map(|v| 1.0 - v), n, noise_variance);
        let (bias_side, threshold_side) = sides(t, eta, s);
        let record = TraceRecord {
            t,
            eta,
            bias_side,
            threshold_side,
            separation_sq: 1.0 / eta + moments.sigma,
        };
        trace.push(record);
        if record.crossed() {
            stop = Some(t);
            break;
        }
    }
    let last = trace.last().map(|r| (r.t, r.eta)).unwrap_or((0, 0.0));
    let diagnostics = StoppingDiagnostics {
        rule,
        stop: last.0,
        eta_stop: last.1,
        kappa_empirical: if last.1 > 0.0 {
            empirical_kappa_index(eigenvalues, last.1)?
        } else {
            0
        },
        kappa_population: None,
        moments,
        trace,
    };
    match stop {
        Some(_) => Ok(diagnostics),
        None => Err(Error::HorizonExhausted {
            rule,
            t_max,
            diagnostics: Box::new(diagnostics),
        }),
    }
}

fn check_noise_sd(noise_sd: f64) -> Result<()> {
    check_noise_variance(noise_sd * noise_sd)
}

fn min_sum(eigenvalues: &[f64], eta: f64) -> f64 {
    eigenvalues.iter().map(|&mu| (eta * mu).min(1.0)).sum()
}

fn sd_side(s: &[f64]) -> f64 {
    let n = s.len() as f64;
    let sum4: f64 = s.iter().map(|v| (1.0 - v).powi(4)).sum();
    (2.0 * sum4).sqrt() / n
}

fn weighted_bias(s: &[f64], coords: &[f64]) -> f64 {
    let n = s.len() as f64;
    s.iter().zip(coords).map(|(s, c)| s * s * c * c).sum::<f64>() / n
}

/// Testing-optimal `T* = argmin{t : 1/η_t < (σ/n) sqrt(Σ min{1, η_t μ̂_i})}`.
pub fn stop_rule_testing(
    eigenvalues: &[f64],
    schedule: &StepSchedule,
    noise_sd: f64,
    t_max: usize,
) -> Result<StoppingDiagnostics> {
    check_noise_sd(noise_sd)?;
    let n = eigenvalues.len() as f64;
    scan(RuleKind::Testing, eigenvalues, schedule, noise_sd * noise_sd, t_max, |_, eta, _| {
        (1.0 / eta, noise_sd / n * min_sum(eigenvalues, eta).sqrt())
    })
}

/// Estimation-optimal `T̃ = argmin{t : 1/η_t < (σ/n) Σ min{1, η_t μ̂_i}}`.
pub fn stop_rule_estimation(
    eigenvalues: &[f64],
    schedule: &StepSchedule,
    noise_sd: f64,
    t_max: usize,
) -> Result<StoppingDiagnostics> {
    check_noise_sd(noise_sd)?;
    let n = eigenvalues.len() as f64;
    scan(RuleKind::Estimation, eigenvalues, schedule, noise_sd * noise_sd, t_max, |_, eta, _| {
        (1.0 / eta, noise_sd / n * min_sum(eigenvalues, eta))
    })
}

/// Oracle `T†`, using the true function values at the design points.
pub fn stop_rule_oracle(
    eigs: &EmpiricalKernelEigen,
    schedule: &StepSchedule,
    f_star: &[f64],
    t_max: usize,
) -> Result<StoppingDiagnostics> {
    let coords = eigs.project(f_star)?;
    scan(RuleKind::Oracle, eigs.eigenvalues(), schedule, 1.0, t_max, |_, _, s| {
        (weighted_bias(s, &coords), sd_side(s))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of pair-bootstrap resamples `B`.
    pub resamples: usize,
    pub seed: u64,
    /// Search horizon; `None` uses `50 n / α`.
    pub t_max: Option<usize>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 10,
            seed: 0,
            t_max: None,
        }
    }
}

/// One resample's contribution to `Uᵀ f_tB`, in original eigen-coordinates.
struct ResampleFit {
    /// Column `j` is `Uᵀ K(x, x_b) U_b[:, j] · (U_bᵀ y_b)_j / n`.
    basis: Mat<f64>,
    eigenvalues: Vec<f64>,
    schedule: StepSchedule,
}

fn fit_resample(
    x: &[f64],
    y: &[f64],
    eigs: &EmpiricalKernelEigen,
    spec: &KernelSpec,
    schedule: &StepSchedule,
    seed: u64,
    b: u64,
) -> Result<ResampleFit> {
    let n = x.len();
    let mut rng = stream(&[seed, b]);
    let mut counts = vec![0usize; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    // K_b = P K_u Pᵀ / n for the incidence matrix P of distinct draws, so its
    // nonzero eigenpairs come from W^{1/2} K_u W^{1/2} / n with W the counts:
    // U_b = P W^{-1/2} V.
    let drawn: Vec<usize> = (0..n).filter(|&i| counts[i] > 0).collect();
    let xu: Vec<f64> = drawn.iter().map(|&i| x[i]).collect();
    let root_w: Vec<f64> = drawn.iter().map(|&i| (counts[i] as f64).sqrt()).collect();
    let ku = empirical_kernel_matrix(spec, &xu)?;
    let scale = xu.len() as f64 / n as f64;
    let w: Vec<usize> = drawn.iter().map(|&i| counts[i]).collect();
    let weighted = Mat::from_fn(xu.len(), xu.len(), |i, j| ku[(i, j)] * scale * ((w[i] * w[j]) as f64).sqrt());
    let eig_b = EmpiricalKernelEigen::from_matrix(weighted)?;
    let schedule_b = make_schedule(eig_b.eigenvalues(), schedule.requested())?;
    // Directions with a clamped eigenvalue span functions of (numerically) zero
    // RKHS norm, which vanish at every evaluation point.
    let rank = eig_b.rank();
    let v = eig_b.eigenvectors().subcols(0, rank);
    let y_scaled: Vec<f64> = drawn.iter().zip(&root_w).map(|(&i, r)| y[i] * r).collect();
    let zb = crate::linalg::mat_t_vec(&v.to_owned(), &y_scaled);
    let cross = cross_kernel_matrix(spec, x, &xu)?;
    let weighted_v = Mat::from_fn(xu.len(), rank, |i, j| v[(i, j)] * root_w[i]);
    let mut basis = eigs.eigenvectors().transpose() * (&cross * &weighted_v);
    let inv_n = 1.0 / n as f64;
    for (j, z) in zb.iter().enumerate() {
        let scale = z * inv_n;
        for v in basis.col_as_slice_mut(j) {
            *v *= scale;
        }
    }
    Ok(ResampleFit {
        basis,
        eigenvalues: eig_b.eigenvalues()[..rank].to_vec(),
        schedule: schedule_b,
    })
}

/// Bootstrap rule: the bias side uses the averaged pair-bootstrap fit `f_tB`
/// projected on the original sample's eigenvectors and shrunk by the
/// original `S^t`. Deterministic in `(x, y, cfg.seed)`.
pub fn stop_rule_bootstrap(
    x: &[f64],
    y: &[f64],
    eigs: &EmpiricalKernelEigen,
    spec: &KernelSpec,
    schedule: &StepSchedule,
    cfg: &BootstrapConfig,
) -> Result<StoppingDiagnostics> {
    let n = eigs.n();
    ensure_len(n, x.len())?;
    ensure_len(n, y.len())?;
    if cfg.resamples == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one resample".into()));
    }
    let t_max = cfg.t_max.unwrap_or_else(|| schedule.default_horizon(n));
    let fits: Vec<ResampleFit> = (0..cfg.resamples as u64)
        .into_par_iter()
        .map(|b| fit_resample(x, y, eigs, spec, schedule, cfg.seed, b))
        .collect::<Result<_>>()?;

    // Per-column state: shrinkage s and coefficient gain of each resample's
    // own trajectory, advanced in lockstep with the original sweep.
    let mut states: Vec<(Vec<f64>, Vec<f64>)> = fits
        .iter()
        .map(|fit| (vec![1.0; fit.eigenvalues.len()], vec![0.0; fit.eigenvalues.len()]))
        .collect();
    let inv_b = 1.0 / cfg.resamples as f64;
    let mut averaged = vec![0.0; n];
    scan(RuleKind::Bootstrap, eigs.eigenvalues(), schedule, 1.0, t_max, |t, _, s| {
        averaged.iter_mut().for_each(|v| *v = 0.0);
        for (fit, (sb, gain)) in fits.iter().zip(states.iter_mut()) {
            let alpha = fit.schedule.alpha(t - 1);
            let eta_b = fit.schedule.eta(t);
            for (j, &mu) in fit.eigenvalues.iter().enumerate() {
                sb[j] *= 1.0 - alpha * mu;
                gain[j] = coefficient_gain(mu, sb[j], eta_b);
                let w = gain[j] * inv_b;
                for (a, q) in averaged.iter_mut().zip(fit.basis.col_as_slice(j)) {
                    *a += w * q;
                }
            }
        }
        (weighted_bias(s, &averaged), sd_side(s))
    })
}
