//! The Wald-type statistic `D_{n,t} = ‖f_t‖²_n` and its exact Gaussian null
//! moments.
//!
//! Under `H0` with Gaussian noise, `D_{n,t} = εᵀ(I - S^t)²ε / n` is a quadratic
//! form, so conditional on the design
//!
//! * `μ_{n,t} = σ² tr((I - S^t)²) / n`
//! * `σ_{n,t} = σ² sqrt(2 tr((I - S^t)⁴)) / n`
//!
//! and the test rejects when `|D - μ| ≥ z_{1-α/2} σ`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::descent::{shrinkage_diagonal, ShrinkageDiagonal, StepSchedule};
use crate::{Error, Result};

/// `(1/n) Σ f_i²`.
pub fn test_statistic(f: &[f64]) -> f64 {
    if f.is_empty() {
        return 0.0;
    }
    f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullMoments {
    pub mu: f64,
    pub sigma: f64,
}

impl NullMoments {
    /// Moments of `yᵀ H² y / n` under `y ~ N(0, σ² I)` for a spectral operator
    /// `H` with diagonal `h_j` in the eigenbasis.
    pub fn from_factors<I>(factors: I, n: usize, noise_variance: f64) -> Self
    where
        I: IntoIterator<Item = f64>,
    {
        let (sum2, sum4) = factors.into_iter().fold((0.0, 0.0), |(s2, s4), h| {
            let h2 = h * h;
            (s2 + h2, s4 + h2 * h2)
        });
        let n = n as f64;
        Self {
            mu: noise_variance * sum2 / n,
            sigma: noise_variance * (2.0 * sum4).sqrt() / n,
        }
    }
}

/// Moments from the shrinkage diagonal `S^t`.
pub fn null_moments(shrink: &ShrinkageDiagonal, n: usize, noise_variance: f64) -> Result<NullMoments> {
    check_noise_variance(noise_variance)?;
    Ok(NullMoments::from_factors(shrink.fitted_fractions(), n, noise_variance))
}

/// Convenience wrapper computing `S^t` first.
pub fn null_moments_at(
    eigenvalues: &[f64],
    schedule: &StepSchedule,
    t: usize,
    noise_variance: f64,
) -> Result<NullMoments> {
    let shrink = shrinkage_diagonal(eigenvalues, schedule, t);
    null_moments(&shrink, eigenvalues.len(), noise_variance)
}

pub(crate) fn check_noise_variance(v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {v}")));
    }
    Ok(())
}

/// Inverse standard normal CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level must be in (0, 1), got {p}")));
    }
    // Reflect the upper half so that q(p) = -q(1 - p) holds bit-for-bit.
    if p > 0.5 {
        Ok(-standard_normal().inverse_cdf(1.0 - p))
    } else {
        Ok(standard_normal().inverse_cdf(p))
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

fn standard_normal() -> Normal {
    Normal::standard()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    Accept,
    /// `σ_{n,t} = 0`: the iterate has not moved, so the statistic carries no
    /// information.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub moments: NullMoments,
    /// `(D - μ) / σ`; `None` when degenerate.
    pub z: Option<f64>,
    pub level: f64,
    /// `z_{1-α/2}`.
    pub quantile: f64,
    pub decision: Decision,
}

impl TestReport {
    pub fn rejects(&self) -> bool {
        self.decision == Decision::Reject
    }

    pub fn is_degenerate(&self) -> bool {
        self.decision == Decision::Degenerate
    }
}

/// Two-sided rule `|D - μ| ≥ z_{1-α/2} σ`.
pub fn wald_decision(statistic: f64, moments: &NullMoments, level: f64) -> Result<TestReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must be in (0, 1), got {level}")));
    }
    let quantile = normal_quantile(1.0 - level / 2.0)?;
    let (z, decision) = if moments.sigma > 0.0 {
        let dev = statistic - moments.mu;
        let decision = if dev.abs() >= quantile * moments.sigma {
            Decision::Reject
        } else {
            Decision::Accept
        };
        (Some(dev / moments.sigma), decision)
    } else {
        (None, Decision::Degenerate)
    };
    Ok(TestReport {
        statistic,
        moments: *moments,
        z,
        level,
        quantile,
        decision,
    })
}

/// One-sample Kolmogorov–Smirnov test against `N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_test_standard_normal(sample: &[f64]) -> Result<KsOutcome> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ks sample"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = normal_cdf(x);
            (cdf - i as f64 / n).max((i + 1) as f64 / n - cdf)
        })
        .fold(0.0, f64::max);
    Ok(KsOutcome {
        statistic,
        p_value: kolmogorov_survival(statistic, sorted.len()),
    })
}

/// `P(D_n > d)` via the Kolmogorov limit with Stephens' finite-n correction.
fn kolmogorov_survival(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    if lambda < 1.18 {
        // Theta-function form of the CDF, fast for small arguments.
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        for k in 1..=50 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * c).exp();
            sum += term;
            if term < 1e-18 {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
