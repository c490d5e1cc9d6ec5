//! Kernel functions, the empirical kernel matrix and population eigen-decay
//! models.
//!
//! The empirical kernel is the `n × n` matrix `[K]_ij = K(x_i, x_j) / n`. Its
//! eigensystem `K = U diag(μ̂) Uᵀ` is computed once per design and drives every
//! downstream computation (step-size cap, shrinkage factors, null moments and
//! stopping rules).

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Eigenvalues below this fraction of the leading eigenvalue are set to zero.
pub const EIGEN_CLAMP_RELATIVE: f64 = 1e-12;

/// Largest supported periodic Sobolev order.
pub const MAX_SOBOLEV_ORDER: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(-(x - x')² / denominator)`; exponential eigen-decay.
    Gaussian { denominator: f64 },
    /// Periodic Sobolev kernel of order `m` on the unit circle; polynomial
    /// eigen-decay `μ_i ≍ i^{-2m}`.
    PeriodicSobolev { order: u32 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::gaussian()
    }
}

impl KernelSpec {
    pub fn gaussian() -> Self {
        Self::Gaussian { denominator: 2.0 }
    }

    pub fn sobolev2() -> Self {
        Self::PeriodicSobolev { order: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Gaussian { denominator } => {
                if !(denominator.is_finite() && denominator > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "gaussian bandwidth denominator must be positive, got {denominator}"
                    )));
                }
            }
            Self::PeriodicSobolev { order } => {
                if order == 0 || order > MAX_SOBOLEV_ORDER {
                    return Err(Error::InvalidArgument(format!(
                        "sobolev order must be in 1..={MAX_SOBOLEV_ORDER}, got {order}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Short label used in reports (`gaussian`, `sobolev2`, ...).
    pub fn label(&self) -> String {
        match *self {
            Self::Gaussian { denominator } if denominator == 2.0 => "gaussian".to_string(),
            Self::Gaussian { denominator } => format!("gaussian{denominator}"),
            Self::PeriodicSobolev { order } => format!("sobolev{order}"),
        }
    }

    /// The population decay model this kernel family is expected to follow.
    pub fn decay_model(&self) -> DecayModel {
        match *self {
            Self::Gaussian { .. } => DecayModel::Exponential { beta: 1.0, p: 2.0 },
            Self::PeriodicSobolev { order } => DecayModel::Polynomial { m: order },
        }
    }

    /// A reusable evaluator with any per-kernel constants precomputed.
    pub fn evaluator(&self) -> Result<KernelFn> {
        self.validate()?;
        Ok(match *self {
            Self::Gaussian { denominator } => KernelFn::Gaussian {
                inv_denominator: 1.0 / denominator,
            },
            Self::PeriodicSobolev { order } => {
                let coeffs = bernoulli_polynomial(2 * order as usize);
                let sign = if order % 2 == 1 { 1.0 } else { -1.0 };
                let scale = sign / factorial(2 * order as usize);
                KernelFn::Sobolev {
                    coeffs: coeffs.into_iter().map(|c| c * scale).collect(),
                }
            }
        })
    }
}

/// Kernel evaluator produced by [`KernelSpec::evaluator`].
#[derive(Debug, Clone)]
pub enum KernelFn {
    Gaussian { inv_denominator: f64 },
    /// `1 + Σ_k coeffs[k] u^k` with `u = {|x - x'|}`.
    Sobolev { coeffs: Vec<f64> },
}

impl KernelFn {
    /// Evaluates without input validation; callers check finiteness.
    #[inline]
    pub fn eval_unchecked(&self, x: f64, x2: f64) -> f64 {
        match self {
            Self::Gaussian { inv_denominator } => {
                let d = x - x2;
                (-d * d * inv_denominator).exp()
            }
            Self::Sobolev { coeffs } => {
                // B_{2m}(1 - u) = B_{2m}(u), so |x - x'| gives an exactly symmetric value.
                let u = (x - x2).abs().fract();
                let mut acc = 0.0;
                for c in coeffs.iter().rev() {
                    acc = acc * u + c;
                }
                1.0 + acc
            }
        }
    }

    pub fn eval(&self, x: f64, x2: f64) -> Result<f64> {
        if !x.is_finite() || !x2.is_finite() {
            return Err(Error::NonFinite("kernel argument"));
        }
        Ok(self.eval_unchecked(x, x2))
    }
}

/// `K(x, x')` for the given kernel.
pub fn eval_kernel(spec: &KernelSpec, x: f64, x2: f64) -> Result<f64> {
    spec.evaluator()?.eval(x, x2)
}

/// Bernoulli numbers `B_0..=B_n` with the `B_1 = -1/2` convention.
fn bernoulli_numbers(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n + 1];
    b[0] = 1.0;
    for m in 1..=n {
        // Σ_{k=0}^{m} C(m+1, k) B_k = 0
        let mut acc = 0.0;
        let mut binom = 1.0;
        for (k, bk) in b.iter().enumerate().take(m) {
            acc += binom * bk;
            binom *= (m + 1 - k) as f64 / (k + 1) as f64;
        }
        b[m] = -acc / (m + 1) as f64;
    }
    b
}

/// Coefficients of `B_n(u)` in increasing powers of `u`.
fn bernoulli_polynomial(n: usize) -> Vec<f64> {
    let b = bernoulli_numbers(n);
    let mut coeffs = vec![0.0; n + 1];
    let mut binom = 1.0;
    for (k, bk) in b.iter().enumerate() {
        coeffs[n - k] = binom * bk;
        binom *= (n - k) as f64 / (k + 1) as f64;
    }
    coeffs
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Population eigenvalue decay rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayModel {
    /// `μ_i = i^{-2m}`
    Polynomial { m: u32 },
    /// `μ_i = exp(-β i^p)`
    Exponential { beta: f64, p: f64 },
}

impl DecayModel {
    fn value(&self, i: usize) -> f64 {
        let i = i as f64;
        match *self {
            Self::Polynomial { m } => i.powf(-2.0 * m as f64),
            Self::Exponential { beta, p } => (-beta * i.powf(p)).exp(),
        }
    }

    /// Number of leading population eigenvalues with `μ_i ≥ threshold`.
    pub fn count_at_least(&self, threshold: f64) -> usize {
        if threshold <= 0.0 {
            return usize::MAX;
        }
        // Closed-form bound avoids walking millions of indices for tiny thresholds.
        let bound = match *self {
            Self::Polynomial { m } => threshold.powf(-1.0 / (2.0 * m as f64)).floor() as usize + 2,
            Self::Exponential { beta, p } => {
                ((-threshold.ln()).max(0.0) / beta).powf(1.0 / p).floor() as usize + 2
            }
        };
        let mut count = bound.saturating_sub(4);
        while count > 0 && self.value(count) < threshold {
            count -= 1;
        }
        while self.value(count + 1) >= threshold {
            count += 1;
        }
        count
    }
}

/// `μ_i` under the decay model (1-based index).
pub fn population_eigenvalue(model: &DecayModel, i: usize) -> Result<f64> {
    if i == 0 {
        return Err(Error::InvalidArgument("eigenvalue index is 1-based".into()));
    }
    Ok(model.value(i))
}

/// Largest `j` with `μ_j ≥ 1/η` (`0` if none). This is the population index
/// `κ = argmin{j : μ_j < 1/η} - 1`.
pub fn kappa_index(eigs: &[f64], eta: f64) -> Result<usize> {
    check_kappa_args(eigs, eta)?;
    let threshold = 1.0 / eta;
    Ok(eigs.iter().take_while(|&&mu| mu >= threshold).count())
}

/// Largest `j` with `μ̂_j > 1/η`; the empirical index
/// `κ̃ = argmin{j : μ̂_j ≤ 1/η} - 1`, which uses a non-strict comparison.
pub fn empirical_kappa_index(eigs: &[f64], eta: f64) -> Result<usize> {
    check_kappa_args(eigs, eta)?;
    let threshold = 1.0 / eta;
    Ok(eigs.iter().take_while(|&&mu| mu > threshold).count())
}

fn check_kappa_args(eigs: &[f64], eta: f64) -> Result<()> {
    if eigs.is_empty() {
        return Err(Error::InvalidArgument("empty eigenvalue sequence".into()));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    Ok(())
}

fn check_design(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("design must contain at least one point".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design point"));
    }
    Ok(())
}

/// `[K]_ij = K(x_i, x_j) / n`, exactly symmetric.
pub fn empirical_kernel_matrix(spec: &KernelSpec, x: &[f64]) -> Result<Mat<f64>> {
    check_design(x)?;
    let kernel = spec.evaluator()?;
    let n = x.len();
    let inv_n = 1.0 / n as f64;
    let mut m = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = kernel.eval_unchecked(x[i], x[j]) * inv_n;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// `[K(a_i, b_j)]` without the `1/n` factor.
pub fn cross_kernel_matrix(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<Mat<f64>> {
    check_design(a)?;
    check_design(b)?;
    let kernel = spec.evaluator()?;
    Ok(Mat::from_fn(a.len(), b.len(), |i, j| {
        kernel.eval_unchecked(a[i], b[j])
    }))
}

/// Sorts descending and clamps small or negative eigenvalues to zero.
/// Also returns the smallest raw eigenvalue.
fn sort_and_clamp(ascending: &[f64]) -> (Vec<f64>, f64) {
    let mut values: Vec<f64> = ascending.iter().rev().copied().collect();
    let raw_min = values.last().copied().unwrap_or(0.0);
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = EIGEN_CLAMP_RELATIVE * top;
    for v in &mut values {
        if *v < floor {
            *v = 0.0;
        }
    }
    (values, raw_min)
}

/// Eigenvalues of the empirical kernel only (sorted non-increasing, clamped).
/// Cheaper than [`EmpiricalKernelEigen::new`] when eigenvectors are not needed.
pub fn empirical_eigenvalues(spec: &KernelSpec, x: &[f64]) -> Result<Vec<f64>> {
    let m = empirical_kernel_matrix(spec, x)?;
    let n = m.nrows();
    let ascending = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::EigenNoConvergence { n })?;
    if ascending.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNoConvergence { n });
    }
    Ok(sort_and_clamp(&ascending).0)
}

/// The empirical kernel matrix together with its cached eigensystem.
#[derive(Debug, Clone)]
pub struct EmpiricalKernelEigen {
    matrix: Mat<f64>,
    vectors: Mat<f64>,
    values: Vec<f64>,
    raw_min: f64,
}

impl EmpiricalKernelEigen {
    pub fn new(spec: &KernelSpec, x: &[f64]) -> Result<Self> {
        Self::from_matrix(empirical_kernel_matrix(spec, x)?)
    }

    /// Decomposes an already-formed symmetric matrix (the lower triangle is read).
    pub fn from_matrix(matrix: Mat<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::InvalidArgument("matrix must be square and non-empty".into()));
        }
        let evd = matrix
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::EigenNoConvergence { n })?;
        let ascending: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
        if ascending.iter().any(|v| !v.is_finite()) {
            return Err(Error::EigenNoConvergence { n });
        }
        let (values, raw_min) = sort_and_clamp(&ascending);
        let u = evd.U();
        let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
        Ok(Self {
            matrix,
            vectors,
            values,
            raw_min,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    /// Orthogonal `U`; column `j` pairs with `eigenvalues()[j]`.
    pub fn eigenvectors(&self) -> &Mat<f64> {
        &self.vectors
    }

    /// `μ̂_1 ≥ … ≥ μ̂_n ≥ 0`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn top_eigenvalue(&self) -> f64 {
        self.values[0]
    }

    /// Smallest eigenvalue before clamping.
    pub fn raw_min_eigenvalue(&self) -> f64 {
        self.raw_min
    }

    /// Number of eigenvalues that survived clamping.
    pub fn rank(&self) -> usize {
        self.values.iter().take_while(|&&v| v > 0.0).count()
    }

    /// `Uᵀ v`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        crate::error::ensure_len(self.n(), v.len())?;
        Ok(crate::linalg::mat_t_vec(&self.vectors, v))
    }

    /// `U c`.
    pub fn expand(&self, coords: &[f64]) -> Result<Vec<f64>> {
        crate::error::ensure_len(self.n(), coords.len())?;
        Ok(crate::linalg::mat_vec(&self.vectors, coords))
    }

    /// `K v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        crate::error::ensure_len(self.n(), v.len())?;
        Ok(crate::linalg::mat_vec(&self.matrix, v))
    }

    /// `max |U diag(μ̂) Uᵀ - K|`.
    pub fn reconstruction_error(&self) -> f64 {
        let n = self.n();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let mu = self.values[j];
            for v in scaled.col_as_slice_mut(j) {
                *v *= mu;
            }
        }
        let rebuilt = &scaled * self.vectors.transpose();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((rebuilt[(i, j)] - self.matrix[(i, j)]).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_values() {
        let k = KernelSpec::gaussian();
        assert_eq!(eval_kernel(&k, 0.3, 0.3).unwrap(), 1.0);
        assert_abs_diff_eq!(eval_kernel(&k, 0.0, 1.0).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(eval_kernel(&k, 0.0, 1.0).unwrap(), 0.60653, epsilon = 1e-5);
    }

    #[test]
    fn sobolev_diagonal_matches_series() {
        // 1 + Σ_k 2/(2πk)^4, truncated at k = 1e5.
        let series: f64 = 1.0
            + (1..=100_000u64)
                .rev()
                .map(|k| 2.0 / (2.0 * std::f64::consts::PI * k as f64).powi(4))
                .sum::<f64>();
        let k = KernelSpec::sobolev2();
        for x in [0.0, 0.25, 0.9] {
            let v = eval_kernel(&k, x, x).unwrap();
            assert_abs_diff_eq!(v, series, epsilon = 1e-12);
            assert_abs_diff_eq!(v, 1.0 + 1.0 / 720.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sobolev_off_diagonal_matches_series() {
        let k = KernelSpec::sobolev2();
        for (x, x2) in [(0.1, 0.35), (0.0, 0.5), (0.9, 0.05)] {
            let u: f64 = x - x2;
            let series: f64 = 1.0
                + (1..=20_000u64)
                    .map(|k| {
                        let w = 2.0 * std::f64::consts::PI * k as f64;
                        2.0 * (w * u).cos() / w.powi(4)
                    })
                    .sum::<f64>();
            assert_abs_diff_eq!(eval_kernel(&k, x, x2).unwrap(), series, epsilon = 1e-12);
        }
    }

    #[test]
    fn sobolev_order_one_and_three_match_series() {
        for m in [1u32, 3] {
            let k = KernelSpec::PeriodicSobolev { order: m };
            let u: f64 = 0.3;
            let series: f64 = 1.0
                + (1..=200_000u64)
                    .rev()
                    .map(|k| {
                        let w = 2.0 * std::f64::consts::PI * k as f64;
                        2.0 * (w * u).cos() / w.powi(2 * m as i32)
                    })
                    .sum::<f64>();
            assert_abs_diff_eq!(eval_kernel(&k, 0.0, u).unwrap(), series, epsilon = 1e-9);
        }
    }

    #[test]
    fn sobolev_is_periodic() {
        let k = KernelSpec::sobolev2();
        let a = eval_kernel(&k, 0.2, 0.7).unwrap();
        let b = eval_kernel(&k, 1.2, 0.7).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn rejects_non_finite_and_bad_specs() {
        let k = KernelSpec::gaussian();
        assert!(matches!(eval_kernel(&k, f64::NAN, 0.0), Err(Error::NonFinite(_))));
        assert!(eval_kernel(&k, 0.0, f64::INFINITY).is_err());
        assert!(eval_kernel(&KernelSpec::Gaussian { denominator: 0.0 }, 0.0, 0.0).is_err());
        assert!(eval_kernel(&KernelSpec::PeriodicSobolev { order: 0 }, 0.0, 0.0).is_err());
        assert!(EmpiricalKernelEigen::new(&k, &[]).is_err());
        assert!(EmpiricalKernelEigen::new(&k, &[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn single_point() {
        let e = EmpiricalKernelEigen::new(&KernelSpec::gaussian(), &[0.5]).unwrap();
        assert_eq!(e.matrix()[(0, 0)], 1.0);
        assert_abs_diff_eq!(e.eigenvalues()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.eigenvectors()[(0, 0)].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_point_closed_form() {
        let e = EmpiricalKernelEigen::new(&KernelSpec::gaussian(), &[0.0, 1.0]).unwrap();
        let r = (-0.5f64).exp();
        assert_abs_diff_eq!(e.matrix()[(0, 1)], 0.5 * r, epsilon = 1e-15);
        assert_abs_diff_eq!(e.matrix()[(0, 0)], 0.5, epsilon = 1e-15);
        // [[a, b], [b, a]] has eigenvalues a ± b.
        assert_abs_diff_eq!(e.eigenvalues()[0], 0.5 * (1.0 + r), epsilon = 1e-14);
        assert_abs_diff_eq!(e.eigenvalues()[1], 0.5 * (1.0 - r), epsilon = 1e-14);
    }

    #[test]
    fn duplicate_points_rank_one() {
        for spec in [KernelSpec::gaussian(), KernelSpec::sobolev2()] {
            let e = EmpiricalKernelEigen::new(&spec, &[0.4, 0.4]).unwrap();
            assert_eq!(e.eigenvalues()[1], 0.0);
            assert_eq!(e.rank(), 1);
        }
    }

    #[test]
    fn population_rules() {
        let poly = DecayModel::Polynomial { m: 2 };
        assert_eq!(population_eigenvalue(&poly, 1).unwrap(), 1.0);
        assert_eq!(population_eigenvalue(&poly, 2).unwrap(), 0.0625);
        let exp = DecayModel::Exponential { beta: 1.0, p: 2.0 };
        assert_abs_diff_eq!(population_eigenvalue(&exp, 2).unwrap(), 0.018316, epsilon = 1e-6);
        assert!(population_eigenvalue(&poly, 0).is_err());
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa_index(&[1.0, 0.0625, 0.0123], 2.0).unwrap(), 1);
        assert_eq!(kappa_index(&[1.0, 0.5, 0.1], 100.0).unwrap(), 3);
        let model = DecayModel::Polynomial { m: 2 };
        let eigs: Vec<f64> = (1..=50).map(|i| population_eigenvalue(&model, i).unwrap()).collect();
        // Brute force: j^{-4} ≥ 1/16 ⇔ j ≤ 2.
        let brute = (1..=50).filter(|&j| (j as f64).powi(-4) >= 1.0 / 16.0).count();
        assert_eq!(brute, 2);
        assert_eq!(kappa_index(&eigs, 16.0).unwrap(), brute);
        assert_eq!(model.count_at_least(1.0 / 16.0), brute);
        assert!(kappa_index(&[], 1.0).is_err());
        assert!(kappa_index(&[1.0], 0.0).is_err());
    }

    #[test]
    fn kappa_tie_conventions() {
        // μ_j exactly at 1/η: population counts it, empirical does not.
        let eigs = [1.0, 0.5, 0.25];
        assert_eq!(kappa_index(&eigs, 2.0).unwrap(), 2);
        assert_eq!(empirical_kappa_index(&eigs, 2.0).unwrap(), 1);
    }

    #[test]
    fn count_at_least_matches_enumeration() {
        let models = [
            DecayModel::Polynomial { m: 2 },
            DecayModel::Polynomial { m: 1 },
            DecayModel::Exponential { beta: 1.0, p: 2.0 },
            DecayModel::Exponential { beta: 0.5, p: 1.0 },
        ];
        for model in models {
            for thr in [1.0, 0.3, 1e-2, 1e-4, 1e-7] {
                let brute = (1..100_000).take_while(|&i| model.value(i) >= thr).count();
                assert_eq!(model.count_at_least(thr), brute, "{model:?} {thr}");
            }
        }
    }

    #[test]
    fn labels() {
        assert_eq!(KernelSpec::gaussian().label(), "gaussian");
        assert_eq!(KernelSpec::sobolev2().label(), "sobolev2");
    }
}
