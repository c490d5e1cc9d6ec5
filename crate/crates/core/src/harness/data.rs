//! Signal models and simulated datasets.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalId {
    /// `c cos(4πx)`
    MCos,
    /// `c (0.8 (x - 0.5)² + 0.2 sin(4πx))`
    MMix,
    /// `0.5 x² + 0.5 sin(4πx)`
    MSmooth,
    /// `0.5 x² + 0.5 |x - 0.5|`
    MKink,
}

impl SignalId {
    pub fn label(&self) -> &'static str {
        match self {
            Self::MCos => "mcos",
            Self::MMix => "mmix",
            Self::MSmooth => "msmooth",
            Self::MKink => "mkink",
        }
    }

    /// Whether the strength multiplier `c` scales the function.
    pub fn uses_strength(&self) -> bool {
        matches!(self, Self::MCos | Self::MMix)
    }
}

impl fmt::Display for SignalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SignalId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcos" => Ok(Self::MCos),
            "mmix" => Ok(Self::MMix),
            "msmooth" => Ok(Self::MSmooth),
            "mkink" => Ok(Self::MKink),
            other => Err(Error::InvalidArgument(format!("unknown signal '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub id: SignalId,
    /// Strength multiplier; ignored by `MSmooth` and `MKink`.
    pub c: f64,
}

impl SignalModel {
    pub fn new(id: SignalId, c: f64) -> Result<Self> {
        let model = Self { id, c };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidArgument(format!("signal strength must be ≥ 0, got {}", self.c)));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let wave = (4.0 * PI * x).sin();
        match self.id {
            SignalId::MCos => self.c * (4.0 * PI * x).cos(),
            SignalId::MMix => self.c * (0.8 * (x - 0.5).powi(2) + 0.2 * wave),
            SignalId::MSmooth => 0.5 * x * x + 0.5 * wave,
            SignalId::MKink => 0.5 * x * x + 0.5 * (x - 0.5).abs(),
        }
    }

    /// True when the signal is identically zero.
    pub fn is_null(&self) -> bool {
        self.id.uses_strength() && self.c == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Noise-free signal at the design points, when known.
    pub truth: Option<Vec<f64>>,
    pub noise_sd: f64,
    pub signal: Option<SignalModel>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Wraps observed data, checking lengths and the design range.
    pub fn from_observations(x: Vec<f64>, y: Vec<f64>, noise_sd: f64) -> Result<Self> {
        crate::error::ensure_len(x.len(), y.len())?;
        if x.is_empty() {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("design points must lie in [0, 1]".into()));
        }
        Ok(Self {
            x,
            y,
            truth: None,
            noise_sd,
            signal: None,
        })
    }
}

/// `x ~ U[0, 1]`, `y = f(x) + ε` with `ε ~ N(0, σ²)`; designs are drawn before
/// noise, from a single stream keyed by `seed`.
pub fn generate_dataset(signal: &SignalModel, n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(noise_sd > 0.0) || !noise_sd.is_finite() {
        return Err(Error::InvalidArgument(format!("noise sd must be positive, got {noise_sd}")));
    }
    signal.validate()?;
    let mut rng = stream(&[seed]);
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let truth: Vec<f64> = x.iter().map(|&v| signal.eval(v)).collect();
    let y = truth
        .iter()
        .map(|f| f + noise_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(Dataset {
        x,
        y,
        truth: Some(truth),
        noise_sd,
        signal: Some(*signal),
    })
}

#[derive(Debug, Deserialize)]
struct Row {
    x: f64,
    y: f64,
}

/// Reads a CSV with header columns `x,y`.
pub fn read_dataset_csv(path: &Path, noise_sd: f64) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        x.push(row.x);
        y.push(row.y);
    }
    Dataset::from_observations(x, y, noise_sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn signal_values() {
        let cos = SignalModel::new(SignalId::MCos, 1.0).unwrap();
        assert_abs_diff_eq!(cos.eval(0.5), 1.0, epsilon = 1e-15);
        let mix = SignalModel::new(SignalId::MMix, 1.0).unwrap();
        assert_abs_diff_eq!(mix.eval(0.5), 0.0, epsilon = 1e-15);
        let kink = SignalModel { id: SignalId::MKink, c: 0.0 };
        assert_abs_diff_eq!(kink.eval(1.0), 0.75, epsilon = 1e-15);
        assert!(!kink.is_null());
        assert!(SignalModel::new(SignalId::MCos, -1.0).is_err());
        assert_eq!("MSmooth".parse::<SignalId>().unwrap(), SignalId::MSmooth);
        assert!("wave".parse::<SignalId>().is_err());
    }

    #[test]
    fn null_dataset_is_pure_noise() {
        let m = SignalModel::new(SignalId::MCos, 0.0).unwrap();
        let d = generate_dataset(&m, 50, 1.0, 4).unwrap();
        assert!(d.truth.as_ref().unwrap().iter().all(|v| *v == 0.0));
        let again = generate_dataset(&m, 50, 1.0, 4).unwrap();
        assert_eq!(d, again);
        assert!(d.x.iter().all(|v| (0.0..1.0).contains(v)));
        let scaled = generate_dataset(&m, 50, 2.0, 4).unwrap();
        for (a, b) in d.y.iter().zip(&scaled.y) {
            assert_abs_diff_eq!(2.0 * a, b, epsilon = 1e-14);
        }
        assert!(generate_dataset(&m, 0, 1.0, 4).is_err());
        assert!(generate_dataset(&m, 5, 0.0, 4).is_err());
    }

    #[test]
    fn observations_are_validated() {
        assert!(Dataset::from_observations(vec![0.1, 1.5], vec![0.0, 0.0], 1.0).is_err());
        assert!(Dataset::from_observations(vec![0.1], vec![0.0, 0.0], 1.0).is_err());
        assert!(Dataset::from_observations(vec![], vec![], 1.0).is_err());
        assert!(Dataset::from_observations(vec![0.1], vec![f64::NAN], 1.0).is_err());
    }
}
