//! Experiment configuration, readable from JSON.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::data::{SignalId, SignalModel};
use crate::descent::StepSize;
use crate::kernels::KernelSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Bootstrap-stopped early-stopping test.
    Es,
    /// Early-stopping test stopped with the true signal.
    OracleEs,
    /// Kernel ridge test with a cross-validated penalty.
    PenalizedCv,
    /// Early-stopping test at a prescribed iteration count.
    FixedT,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Es => "es",
            Self::OracleEs => "oracle_es",
            Self::PenalizedCv => "penalized_cv",
            Self::FixedT => "fixed_t",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "es" => Ok(Self::Es),
            "oracle_es" | "oracle" => Ok(Self::OracleEs),
            "penalized_cv" | "cv" | "krr" => Ok(Self::PenalizedCv),
            "fixed_t" => Ok(Self::FixedT),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub signal: SignalId,
    /// Signal strengths; each value is its own cell.
    pub c: Vec<f64>,
    pub kernel: KernelSpec,
    pub n: Vec<usize>,
    pub replicates: usize,
    pub level: f64,
    pub methods: Vec<Method>,
    /// Forced-horizon exponents for the sweep.
    pub gamma: Vec<f64>,
    pub seed: u64,
    pub noise_sd: f64,
    pub step: StepSize,
    pub bootstrap_resamples: usize,
    pub cv_folds: usize,
    /// Stopping-rule horizon; `None` uses `50 n / α`.
    pub t_max: Option<usize>,
    /// Record wall-clock time per cell. Off by default so that reports are
    /// reproducible byte for byte.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            signal: SignalId::MCos,
            c: vec![0.0],
            kernel: KernelSpec::gaussian(),
            n: vec![200],
            replicates: 500,
            level: 0.05,
            methods: vec![Method::Es, Method::OracleEs, Method::PenalizedCv],
            gamma: Vec::new(),
            seed: 0,
            noise_sd: 1.0,
            step: StepSize::Auto,
            bootstrap_resamples: 10,
            cv_folds: 10,
            t_max: None,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!("level must be in (0, 1), got {}", self.level)));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(Error::InvalidArgument("n grid must be non-empty and positive".into()));
        }
        if self.c.is_empty() {
            return Err(Error::InvalidArgument("signal strength list is empty".into()));
        }
        for &c in &self.c {
            SignalModel::new(self.signal, c)?;
        }
        if self.gamma.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidArgument("gamma values must be positive".into()));
        }
        if !(self.noise_sd > 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::InvalidArgument("noise sd must be positive".into()));
        }
        if let StepSize::Fixed(a) = self.step {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidArgument("step size must be positive".into()));
            }
        }
        if self.bootstrap_resamples == 0 {
            return Err(Error::InvalidArgument("bootstrap needs at least one resample".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidArgument("cross-validation needs at least 2 folds".into()));
        }
        if self.t_max == Some(0) {
            return Err(Error::InvalidArgument("t_max must be at least 1".into()));
        }
        Ok(())
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_sd * self.noise_sd
    }

    pub fn signals(&self) -> Vec<SignalModel> {
        self.c.iter().map(|&c| SignalModel { id: self.signal, c }).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_and_defaults() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"n": [50, 100], "signal": "mmix"}"#).unwrap();
        assert_eq!(partial.n, vec![50, 100]);
        assert_eq!(partial.replicates, 500);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn validation() {
        let bad = [
            ExperimentConfig { replicates: 0, ..Default::default() },
            ExperimentConfig { level: 1.0, ..Default::default() },
            ExperimentConfig { n: vec![], ..Default::default() },
            ExperimentConfig { gamma: vec![0.0], ..Default::default() },
            ExperimentConfig { c: vec![-1.0], ..Default::default() },
            ExperimentConfig { cv_folds: 1, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
        assert_eq!("oracle-es".parse::<Method>().unwrap(), Method::OracleEs);
    }
}
