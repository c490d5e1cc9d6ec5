//! Functional gradient descent on the empirical kernel.
//!
//! With `f_0 = 0` the recursion `f_{t+1} = f_t - α_t K (f_t - y)` has the
//! closed form `f_t = U (I - S^t) Uᵀ y` where `S^t = Π_{τ<t} (I - α_τ Λ)` is the
//! diagonal shrinkage matrix. Both routes are implemented here; the closed
//! form serves as the independent check on the iteration.

use serde::{Deserialize, Serialize};

use crate::error::ensure_len;
use crate::kernels::{EmpiricalKernelEigen, KernelSpec};
use crate::linalg::mat_vec;
use crate::{Error, Result};

/// Requested step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// `α = min{1, 1/μ̂_1}`.
    Auto,
    Fixed(f64),
}

impl Default for StepSize {
    fn default() -> Self {
        Self::Auto
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    Constant(f64),
}

/// A non-increasing step-size sequence capped at `min{1, 1/μ̂_1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    rule: StepRule,
    cap: f64,
    requested: StepSize,
    clipped: bool,
}

impl StepSchedule {
    /// `α_τ`.
    pub fn alpha(&self, _tau: usize) -> f64 {
        match self.rule {
            StepRule::Constant(a) => a,
        }
    }

    /// `η_t = Σ_{τ<t} α_τ`.
    pub fn eta(&self, t: usize) -> f64 {
        match self.rule {
            StepRule::Constant(a) => a * t as f64,
        }
    }

    pub fn rule(&self) -> StepRule {
        self.rule
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn requested(&self) -> StepSize {
        self.requested
    }

    /// True when an explicit step exceeded the cap and was reduced to it.
    pub fn clipped(&self) -> bool {
        self.clipped
    }

    /// Default search horizon `50 n / α_0`.
    pub fn default_horizon(&self, n: usize) -> usize {
        (50.0 * n as f64 / self.alpha(0)).ceil() as usize
    }
}

/// Builds a constant schedule against an eigenvalue sequence sorted
/// non-increasing (only `μ̂_1` is read).
pub fn make_schedule(eigenvalues: &[f64], step: StepSize) -> Result<StepSchedule> {
    let top = *eigenvalues
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty eigenvalue sequence".into()))?;
    let cap = if top > 1.0 { 1.0 / top } else { 1.0 };
    let (alpha, clipped) = match step {
        StepSize::Auto => (cap, false),
        StepSize::Fixed(a) => {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidArgument(format!("step size must be positive, got {a}")));
            }
            if a > cap {
                (cap, true)
            } else {
                (a, false)
            }
        }
    };
    Ok(StepSchedule {
        rule: StepRule::Constant(alpha),
        cap,
        requested: step,
        clipped,
    })
}

/// One step `f - α K (f - y)`.
pub fn gd_step(f: &[f64], eigs: &EmpiricalKernelEigen, y: &[f64], alpha: f64) -> Result<Vec<f64>> {
    ensure_len(eigs.n(), f.len())?;
    ensure_len(eigs.n(), y.len())?;
    let residual: Vec<f64> = f.iter().zip(y).map(|(a, b)| a - b).collect();
    let grad = mat_vec(eigs.matrix(), &residual);
    Ok(f.iter().zip(&grad).map(|(fi, gi)| fi - alpha * gi).collect())
}

/// Iterate at one step of the descent.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub t: usize,
    /// `f_t(x_i)`.
    pub f: Vec<f64>,
    /// `γ^t = Uᵀ f_t / √n`.
    pub gamma: Vec<f64>,
    /// Representer coefficients with `f_t = n K c^t`.
    pub coeffs: Vec<f64>,
}

/// Runs the recursion from `f_0 = 0` and returns states `t = 0..=t_max`.
pub fn run_trajectory(
    eigs: &EmpiricalKernelEigen,
    y: &[f64],
    schedule: &StepSchedule,
    t_max: usize,
) -> Result<Vec<TrajectoryState>> {
    let n = eigs.n();
    ensure_len(n, y.len())?;
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let mut states = Vec::with_capacity(t_max + 1);
    let mut f = vec![0.0; n];
    let mut coeffs = vec![0.0; n];
    for t in 0..=t_max {
        let gamma = eigs.project(&f)?.into_iter().map(|g| g * inv_sqrt_n).collect();
        states.push(TrajectoryState {
            t,
            f: f.clone(),
            gamma,
            coeffs: coeffs.clone(),
        });
        if t == t_max {
            break;
        }
        let alpha = schedule.alpha(t);
        let scale = alpha / n as f64;
        for ((c, fi), yi) in coeffs.iter_mut().zip(&f).zip(y) {
            *c -= scale * (fi - yi);
        }
        f = gd_step(&f, eigs, y, alpha)?;
    }
    Ok(states)
}

/// Diagonal of `S^t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageDiagonal {
    pub t: usize,
    pub s: Vec<f64>,
}

impl ShrinkageDiagonal {
    /// `1 - s_j`, the fraction of direction `j` already fitted.
    pub fn fitted_fractions(&self) -> impl Iterator<Item = f64> + '_ {
        self.s.iter().map(|s| 1.0 - s)
    }
}

/// `s_j = Π_{τ<t} (1 - α_τ μ̂_j)`.
pub fn shrinkage_diagonal(eigenvalues: &[f64], schedule: &StepSchedule, t: usize) -> ShrinkageDiagonal {
    let s = match schedule.rule {
        StepRule::Constant(a) => eigenvalues
            .iter()
            .map(|&mu| constant_power(1.0 - a * mu, t))
            .collect(),
    };
    ShrinkageDiagonal { t, s }
}

fn constant_power(base: f64, t: usize) -> f64 {
    match i32::try_from(t) {
        Ok(k) => base.powi(k),
        Err(_) => base.powf(t as f64),
    }
}

/// Walks `S^t` forward one iteration at a time.
#[derive(Debug, Clone)]
pub struct ShrinkageSweep<'a> {
    eigenvalues: &'a [f64],
    schedule: StepSchedule,
    t: usize,
    s: Vec<f64>,
}

impl<'a> ShrinkageSweep<'a> {
    pub fn new(eigenvalues: &'a [f64], schedule: &StepSchedule) -> Self {
        Self {
            eigenvalues,
            schedule: *schedule,
            t: 0,
            s: vec![1.0; eigenvalues.len()],
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn eta(&self) -> f64 {
        self.schedule.eta(self.t)
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn advance(&mut self) {
        let alpha = self.schedule.alpha(self.t);
        for (s, mu) in self.s.iter_mut().zip(self.eigenvalues) {
            *s *= 1.0 - alpha * mu;
        }
        self.t += 1;
    }
}

/// `U (I - S^t) Uᵀ y`.
pub fn spectral_fitted_values(
    eigs: &EmpiricalKernelEigen,
    y: &[f64],
    schedule: &StepSchedule,
    t: usize,
) -> Result<Vec<f64>> {
    let shrink = shrinkage_diagonal(eigs.eigenvalues(), schedule, t);
    let coords: Vec<f64> = eigs
        .project(y)?
        .into_iter()
        .zip(shrink.fitted_fractions())
        .map(|(z, w)| z * w)
        .collect();
    eigs.expand(&coords)
}

/// Per-direction coefficient gain `g_j = (1 - s_j) / μ̂_j`, with the limit
/// `η_t` for `μ̂_j = 0`; then `c^t = U diag(g / n) Uᵀ y`.
pub fn coefficient_gain(mu: f64, s: f64, eta: f64) -> f64 {
    if mu > 0.0 {
        (1.0 - s) / mu
    } else {
        eta
    }
}

/// Closed-form representer coefficients `c^t` of the iterate.
pub fn spectral_coefficients(
    eigs: &EmpiricalKernelEigen,
    y: &[f64],
    schedule: &StepSchedule,
    t: usize,
) -> Result<Vec<f64>> {
    let n = eigs.n() as f64;
    let eta = schedule.eta(t);
    let shrink = shrinkage_diagonal(eigs.eigenvalues(), schedule, t);
    let coords: Vec<f64> = eigs
        .project(y)?
        .into_iter()
        .zip(eigs.eigenvalues().iter().zip(&shrink.s))
        .map(|(z, (&mu, &s))| z * coefficient_gain(mu, s, eta) / n)
        .collect();
    eigs.expand(&coords)
}

/// `Σ_i c_i K(x_i, x_new)`.
pub fn evaluate_function(coeffs: &[f64], spec: &KernelSpec, x_train: &[f64], x_new: f64) -> Result<f64> {
    ensure_len(x_train.len(), coeffs.len())?;
    let kernel = spec.evaluator()?;
    let mut acc = 0.0;
    for (c, &xi) in coeffs.iter().zip(x_train) {
        acc += c * kernel.eval(xi, x_new)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use faer::Mat;

    fn scalar_eig() -> EmpiricalKernelEigen {
        EmpiricalKernelEigen::from_matrix(Mat::from_fn(1, 1, |_, _| 1.0)).unwrap()
    }

    #[test]
    fn schedule_auto_and_fixed() {
        let s = make_schedule(&[0.8], StepSize::Auto).unwrap();
        assert_eq!(s.alpha(0), 1.0);
        assert_eq!(s.eta(7), 7.0);
        let s = make_schedule(&[4.0], StepSize::Auto).unwrap();
        assert_eq!(s.alpha(3), 0.25);
        assert_eq!(s.eta(8), 2.0);
        let s = make_schedule(&[0.8], StepSize::Fixed(1.0)).unwrap();
        assert_eq!(s.alpha(0), 1.0);
        assert!(!s.clipped());
        let s = make_schedule(&[4.0], StepSize::Fixed(0.5)).unwrap();
        assert_eq!(s.alpha(0), 0.25);
        assert!(s.clipped());
        assert!(make_schedule(&[1.0], StepSize::Fixed(0.0)).is_err());
        assert!(make_schedule(&[1.0], StepSize::Fixed(-1.0)).is_err());
        assert!(make_schedule(&[], StepSize::Auto).is_err());
    }

    #[test]
    fn eta_strictly_increasing() {
        let s = make_schedule(&[2.5], StepSize::Auto).unwrap();
        for t in 0..100 {
            assert!(s.eta(t + 1) > s.eta(t));
            assert!(s.alpha(t + 1) <= s.alpha(t));
            assert!(s.alpha(t) <= s.cap());
        }
    }

    #[test]
    fn step_examples() {
        let eig = scalar_eig();
        assert_eq!(gd_step(&[0.0], &eig, &[2.0], 0.5).unwrap(), vec![1.0]);
        assert_eq!(gd_step(&[0.0], &eig, &[0.0], 0.5).unwrap(), vec![0.0]);
        assert!(gd_step(&[0.0, 1.0], &eig, &[0.0], 0.5).is_err());

        let x = [0.1, 0.5, 0.8];
        let eig = EmpiricalKernelEigen::new(&KernelSpec::gaussian(), &x).unwrap();
        let y = [1.0, -2.0, 0.5];
        let step = gd_step(&[0.0; 3], &eig, &y, 0.7).unwrap();
        let ky = eig.apply(&y).unwrap();
        for (a, b) in step.iter().zip(&ky) {
            assert_abs_diff_eq!(*a, 0.7 * b, epsilon = 1e-15);
        }
    }

    #[test]
    fn scalar_closed_form() {
        let eig = scalar_eig();
        let s = make_schedule(eig.eigenvalues(), StepSize::Fixed(0.5)).unwrap();
        let f = spectral_fitted_values(&eig, &[2.0], &s, 1).unwrap();
        assert_abs_diff_eq!(f[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn trajectory_start_and_zero_response() {
        let x = [0.1, 0.4, 0.9, 0.3];
        let eig = EmpiricalKernelEigen::new(&KernelSpec::sobolev2(), &x).unwrap();
        let s = make_schedule(eig.eigenvalues(), StepSize::Auto).unwrap();
        let states = run_trajectory(&eig, &[1.0, 2.0, 3.0, 4.0], &s, 0).unwrap();
        assert_eq!(states.len(), 1);
        assert!(states[0].f.iter().chain(&states[0].gamma).chain(&states[0].coeffs).all(|&v| v == 0.0));
        let states = run_trajectory(&eig, &[0.0; 4], &s, 25).unwrap();
        assert!(states.iter().all(|st| st.f.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn shrinkage_examples() {
        let one = make_schedule(&[1.0], StepSize::Fixed(1.0)).unwrap();
        let d = shrinkage_diagonal(&[1.0, 0.3], &one, 0);
        assert_eq!(d.s, vec![1.0, 1.0]);
        assert_eq!(shrinkage_diagonal(&[1.0], &one, 1).s, vec![0.0]);
        let d = shrinkage_diagonal(&[0.1], &one, 4);
        assert_abs_diff_eq!(d.s[0], 0.6561, epsilon = 1e-15);
        let fitted = 1.0 - d.s[0];
        assert_abs_diff_eq!(fitted, 0.3439, epsilon = 1e-15);
        assert!((0.2..=0.4).contains(&fitted));
    }

    #[test]
    fn sweep_matches_direct() {
        let eigs = [0.9, 0.2, 0.01, 0.0];
        let s = make_schedule(&eigs, StepSize::Auto).unwrap();
        let mut sweep = ShrinkageSweep::new(&eigs, &s);
        for t in 0..50 {
            let direct = shrinkage_diagonal(&eigs, &s, t);
            for (a, b) in sweep.s().iter().zip(&direct.s) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-13);
            }
            sweep.advance();
        }
    }

    #[test]
    fn interpolation_limit() {
        let x = [0.0, 0.3, 0.7];
        let eig = EmpiricalKernelEigen::new(&KernelSpec::sobolev2(), &x).unwrap();
        let s = make_schedule(eig.eigenvalues(), StepSize::Auto).unwrap();
        let y = [1.0, -1.0, 0.5];
        let f = spectral_fitted_values(&eig, &y, &s, 1_000_000).unwrap();
        for (a, b) in f.iter().zip(&y) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-8);
        }
        assert!(spectral_fitted_values(&eig, &y, &s, 0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn evaluate_examples() {
        let spec = KernelSpec::gaussian();
        assert_eq!(evaluate_function(&[0.0, 0.0], &spec, &[0.1, 0.2], 0.7).unwrap(), 0.0);
        assert_abs_diff_eq!(
            evaluate_function(&[1.0], &spec, &[0.0], 1.0).unwrap(),
            (-0.5f64).exp(),
            epsilon = 1e-15
        );
        assert!(evaluate_function(&[1.0], &spec, &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn evaluation_reproduces_in_sample_values() {
        let x = [0.05, 0.21, 0.5, 0.77, 0.93];
        let y = [0.3, -1.2, 0.8, 2.0, -0.4];
        for spec in [KernelSpec::gaussian(), KernelSpec::sobolev2()] {
            let eig = EmpiricalKernelEigen::new(&spec, &x).unwrap();
            let s = make_schedule(eig.eigenvalues(), StepSize::Auto).unwrap();
            let states = run_trajectory(&eig, &y, &s, 30).unwrap();
            let last = states.last().unwrap();
            let n = x.len() as f64;
            let kc = eig.apply(&last.coeffs).unwrap();
            for (j, &xj) in x.iter().enumerate() {
                let v = evaluate_function(&last.coeffs, &spec, &x, xj).unwrap();
                assert_abs_diff_eq!(v, last.f[j], epsilon = 1e-8);
                assert_abs_diff_eq!(v, n * kc[j], epsilon = 1e-8);
            }
            let closed = spectral_coefficients(&eig, &y, &s, 30).unwrap();
            let from_closed: Vec<f64> = eig.apply(&closed).unwrap().iter().map(|v| v * n).collect();
            for (a, b) in from_closed.iter().zip(&last.f) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-8);
            }
        }
    }
}
