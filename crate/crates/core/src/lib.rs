//! Early-stopped functional gradient descent in a reproducing kernel Hilbert
//! space, used as a nonparametric test of `H0: f = 0`.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`kernels`] | kernel functions, empirical kernel matrix `K(x_i, x_j)/n` and its eigensystem |
//! | [`descent`] | gradient-descent recursion, step schedules, shrinkage factors, spectral closed form |
//! | [`testing`] | Wald-type statistic `D = ‖f_t‖²_n`, exact Gaussian null moments, decision rule |
//! | [`stopping`] | testing-optimal, estimation-optimal, oracle and bootstrap stopping rules |
//! | [`ridge`] | kernel ridge regression baseline with cross-validated penalty |
//! | [`harness`] | signal models, Monte Carlo size/power/MSE drivers, CSV/JSON reports |
//!
//! ```
//! use earlystop::kernels::{EmpiricalKernelEigen, KernelSpec};
//! use earlystop::descent::{make_schedule, spectral_fitted_values, StepSize};
//! use earlystop::testing::{null_moments_at, test_statistic, wald_decision};
//!
//! let x: Vec<f64> = (0..32).map(|i| i as f64 / 32.0).collect();
//! let y: Vec<f64> = x.iter().map(|v| (4.0 * std::f64::consts::PI * v).cos()).collect();
//! let eig = EmpiricalKernelEigen::new(&KernelSpec::gaussian(), &x).unwrap();
//! let schedule = make_schedule(eig.eigenvalues(), StepSize::Auto).unwrap();
//! let f = spectral_fitted_values(&eig, &y, &schedule, 20).unwrap();
//! let moments = null_moments_at(eig.eigenvalues(), &schedule, 20, 1.0).unwrap();
//! let report = wald_decision(test_statistic(&f), &moments, 0.05).unwrap();
//! assert!(report.statistic >= 0.0);
//! ```

pub mod descent;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod ridge;
pub mod rng;
pub mod stopping;
pub mod testing;

mod linalg;

pub use error::{Error, Result};
