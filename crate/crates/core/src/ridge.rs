//! Kernel ridge regression baseline.
//!
//! With `h_j = μ̂_j / (μ̂_j + λ)` the penalized fit is `U diag(h) Uᵀ y`, which
//! plays the role that `I - S^t` plays for early stopping. The penalized test
//! uses the same quadratic-form moments with `h` in place of `1 - s`.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descent::{shrinkage_diagonal, StepSchedule};
use crate::error::ensure_len;
use crate::kernels::{cross_kernel_matrix, EmpiricalKernelEigen, KernelSpec};
use crate::linalg::{mat_t_vec, mat_vec};
use crate::rng::stream;
use crate::testing::{check_noise_variance, test_statistic, wald_decision, NullMoments, TestReport};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub lambda: f64,
    /// `f̂ = K (K + λI)^{-1} y`.
    pub fitted: Vec<f64>,
    /// `μ̂_j / (μ̂_j + λ)`.
    pub hat_diag_spectral: Vec<f64>,
    /// Representer coefficients with `f̂ = n K c`.
    pub coeffs: Vec<f64>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("penalty must be positive, got {lambda}")));
    }
    Ok(())
}

pub fn hat_factors(eigenvalues: &[f64], lambda: f64) -> Vec<f64> {
    eigenvalues.iter().map(|&mu| mu / (mu + lambda)).collect()
}

pub fn krr_fit(eigs: &EmpiricalKernelEigen, y: &[f64], lambda: f64) -> Result<RidgeFit> {
    check_lambda(lambda)?;
    let n = eigs.n();
    ensure_len(n, y.len())?;
    let z = eigs.project(y)?;
    let h = hat_factors(eigs.eigenvalues(), lambda);
    let fitted_coords: Vec<f64> = z.iter().zip(&h).map(|(z, h)| z * h).collect();
    let inv_n = 1.0 / n as f64;
    let coeff_coords: Vec<f64> = z
        .iter()
        .zip(eigs.eigenvalues())
        .map(|(z, mu)| z * inv_n / (mu + lambda))
        .collect();
    Ok(RidgeFit {
        lambda,
        fitted: eigs.expand(&fitted_coords)?,
        hat_diag_spectral: h,
        coeffs: eigs.expand(&coeff_coords)?,
    })
}

/// Penalized Wald test on `D = ‖f̂‖²_n`.
pub fn krr_wald_test(fit: &RidgeFit, noise_variance: f64, level: f64) -> Result<TestReport> {
    check_noise_variance(noise_variance)?;
    let n = fit.fitted.len();
    let moments = NullMoments::from_factors(fit.hat_diag_spectral.iter().copied(), n, noise_variance);
    wald_decision(test_statistic(&fit.fitted), &moments, level)
}

/// 30 log-spaced values over `[μ̂_n + 1e-10, μ̂_1]`.
pub fn default_lambda_grid(eigenvalues: &[f64]) -> Result<Vec<f64>> {
    const POINTS: usize = 30;
    let hi = *eigenvalues
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty eigenvalue sequence".into()))?;
    let lo = eigenvalues[eigenvalues.len() - 1] + 1e-10;
    if !(hi > lo) {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..POINTS)
        .map(|k| match k {
            0 => lo,
            k if k == POINTS - 1 => hi,
            k => (a + (b - a) * k as f64 / (POINTS - 1) as f64).exp(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub lambda: f64,
    /// `(λ, mean held-out squared error)` in grid order.
    pub scores: Vec<(f64, f64)>,
}

impl CvSelection {
    /// True when the selected penalty is the smallest or largest grid value.
    pub fn at_endpoint(&self) -> bool {
        let lo = self.scores.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let hi = self.scores.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        self.lambda == lo || self.lambda == hi
    }
}

/// Held-out predictions of one fold as a function of `λ`:
/// `pred(λ) = P diag(1/(μ + λ)) z / n_train`.
struct FoldSystem {
    projected_cross: faer::Mat<f64>,
    z: Vec<f64>,
    eigenvalues: Vec<f64>,
    y_test: Vec<f64>,
    n_train: usize,
}

impl FoldSystem {
    fn squared_error(&self, lambda: f64) -> f64 {
        let inv = 1.0 / self.n_train as f64;
        let w: Vec<f64> = self
            .z
            .iter()
            .zip(&self.eigenvalues)
            .map(|(z, mu)| z * inv / (mu + lambda))
            .collect();
        mat_vec(&self.projected_cross, &w)
            .iter()
            .zip(&self.y_test)
            .map(|(p, y)| (p - y) * (p - y))
            .sum()
    }
}

/// K-fold cross-validated penalty. Folds are contiguous blocks of a seeded
/// shuffle; ties go to the larger `λ`.
pub fn cv_select_lambda(
    x: &[f64],
    y: &[f64],
    spec: &KernelSpec,
    folds: usize,
    grid: &[f64],
    seed: u64,
) -> Result<CvSelection> {
    let n = x.len();
    ensure_len(n, y.len())?;
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::InvalidArgument(format!("{folds} folds leave an empty fold with n = {n}")));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty penalty grid".into()));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(&[seed]));

    let systems: Vec<FoldSystem> = (0..folds)
        .into_par_iter()
        .map(|k| {
            let (start, end) = (k * n / folds, (k + 1) * n / folds);
            let test_idx = &order[start..end];
            let train_idx: Vec<usize> = order[..start].iter().chain(&order[end..]).copied().collect();
            let x_tr: Vec<f64> = train_idx.iter().map(|&i| x[i]).collect();
            let y_tr: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
            let x_te: Vec<f64> = test_idx.iter().map(|&i| x[i]).collect();
            let eig = EmpiricalKernelEigen::new(spec, &x_tr)?;
            let cross = cross_kernel_matrix(spec, &x_te, &x_tr)?;
            Ok(FoldSystem {
                projected_cross: &cross * eig.eigenvectors(),
                z: mat_t_vec(eig.eigenvectors(), &y_tr),
                eigenvalues: eig.eigenvalues().to_vec(),
                y_test: test_idx.iter().map(|&i| y[i]).collect(),
                n_train: x_tr.len(),
            })
        })
        .collect::<Result<_>>()?;

    let scores: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&l| (l, systems.iter().map(|s| s.squared_error(l)).sum::<f64>() / n as f64))
        .collect();
    let mut best = scores[0];
    for &(l, e) in &scores[1..] {
        if e < best.1 || (e == best.1 && l > best.0) {
            best = (l, e);
        }
    }
    Ok(CvSelection { lambda: best.0, scores })
}

/// `Σ h_j⁴ / Σ (1 - s_j)⁴`.
pub fn connection_ratio(eigenvalues: &[f64], schedule: &StepSchedule, t: usize, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if t == 0 {
        return Err(Error::InvalidArgument("connection ratio needs t ≥ 1".into()));
    }
    let shrink = shrinkage_diagonal(eigenvalues, schedule, t);
    let den: f64 = shrink.fitted_fractions().map(|v| v.powi(4)).sum();
    if !(den > 0.0) {
        return Err(Error::InvalidArgument("early-stopping trace vanishes".into()));
    }
    let num: f64 = hat_factors(eigenvalues, lambda).iter().map(|h| h.powi(4)).sum();
    Ok(num / den)
}
