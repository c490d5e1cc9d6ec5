//! Simulation reports and their CSV/JSON serialisation.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::Result;

/// Aggregate over the replicates of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub method: String,
    pub kernel: String,
    pub signal: String,
    pub c: f64,
    pub n: usize,
    pub gamma: Option<f64>,
    pub replicates: usize,
    pub rejections: usize,
    pub rate: f64,
    /// Mean selected iteration over successful replicates.
    pub mean_t: Option<f64>,
    /// Mean `η_T`; for the penalized test, mean `1/λ`.
    pub mean_eta_t: Option<f64>,
    pub failures: usize,
    pub wall_ms: Option<f64>,
    pub seed: u64,
    /// False when more than 1% of replicates failed.
    pub valid: bool,
    /// Forced horizon of a sweep cell, after clamping.
    pub forced_t: Option<usize>,
    /// True when the forced horizon rounded below 1 and was raised to 1.
    pub clamped: bool,
}

impl CellRecord {
    fn sort_key(&self) -> (&str, &str, &str, f64, usize, f64) {
        (
            &self.method,
            &self.kernel,
            &self.signal,
            self.c,
            self.n,
            self.gamma.unwrap_or(f64::NEG_INFINITY),
        )
    }
}

/// Per-iteration averages of one curve run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub t: usize,
    pub eta_t: f64,
    /// Mean in-sample `‖f_t - f‖²_n`.
    pub mse: f64,
    /// Rejection rate at `t`; `None` at `t = 0` where the test is degenerate.
    pub power: Option<f64>,
    /// Null moments averaged over designs.
    pub mu_nt: f64,
    pub sigma_nt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub argmin_mse_t: usize,
    pub argmax_power_t: usize,
    pub max_power: f64,
    /// Median of the per-replicate `T*`.
    pub t_star: usize,
    /// Median of the per-replicate `T̃`.
    pub t_tilde: usize,
    pub horizon_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub crate_version: String,
    pub rng: String,
    pub normal_method: String,
    pub config: ExperimentConfig,
}

impl ReportMetadata {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            rng: "ChaCha8 keyed by splitmix64(seed, cell, replicate)".to_string(),
            normal_method: "rand_distr StandardNormal (ziggurat)".to_string(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub metadata: ReportMetadata,
    pub cells: Vec<CellRecord>,
    pub curves: Vec<CurveRecord>,
    pub curve_summary: Option<CurveSummary>,
}

impl SimulationReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            metadata: ReportMetadata::new(config),
            cells: Vec::new(),
            curves: Vec::new(),
            curve_summary: None,
        }
    }

    /// Sorts cells by (method, kernel, signal, c, n, gamma) and curves by t.
    pub fn sort(&mut self) {
        self.cells.sort_by(|a, b| {
            let (ka, kb) = (a.sort_key(), b.sort_key());
            ka.0.cmp(kb.0)
                .then(ka.1.cmp(kb.1))
                .then(ka.2.cmp(kb.2))
                .then(ka.3.total_cmp(&kb.3))
                .then(ka.4.cmp(&kb.4))
                .then(ka.5.total_cmp(&kb.5))
        });
        self.curves.sort_by_key(|r| r.t);
    }

    pub fn cell(&self, method: &str, n: usize) -> Option<&CellRecord> {
        self.cells.iter().find(|c| c.method == method && c.n == n)
    }

    pub fn all_valid(&self) -> bool {
        self.cells.iter().all(|c| c.valid)
    }
}

/// 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub const CELL_HEADER: [&str; 14] = [
    "method", "kernel", "signal", "c", "n", "gamma", "replicates", "rejections", "rate", "mean_T",
    "mean_eta_T", "failures", "wall_ms", "seed",
];

pub const CURVE_HEADER: [&str; 6] = ["t", "eta_t", "mse", "power", "mu_nt", "sigma_nt"];

pub fn write_cells_csv<W: Write>(cells: &[CellRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CELL_HEADER)?;
    for c in cells {
        w.write_record([
            c.method.clone(),
            c.kernel.clone(),
            c.signal.clone(),
            format_float(c.c),
            c.n.to_string(),
            opt_float(c.gamma),
            c.replicates.to_string(),
            c.rejections.to_string(),
            format_float(c.rate),
            opt_float(c.mean_t),
            opt_float(c.mean_eta_t),
            c.failures.to_string(),
            opt_float(c.wall_ms),
            c.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves_csv<W: Write>(curves: &[CurveRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    for r in curves {
        w.write_record([
            r.t.to_string(),
            format_float(r.eta_t),
            format_float(r.mse),
            opt_float(r.power),
            format_float(r.mu_nt),
            format_float(r.sigma_nt),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Writes the cell table (or the curve table when present) as CSV, or the
/// whole report as JSON.
pub fn write_report<W: Write>(report: &SimulationReport, format: OutputFormat, mut out: W) -> Result<()> {
    match format {
        OutputFormat::Csv if !report.curves.is_empty() => write_curves_csv(&report.curves, out),
        OutputFormat::Csv => write_cells_csv(&report.cells, out),
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            writeln!(out)?;
            Ok(())
        }
    }
}

pub fn write_report_file(report: &SimulationReport, format: OutputFormat, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_report(report, format, file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(method: &str, n: usize, gamma: Option<f64>) -> CellRecord {
        CellRecord {
            method: method.into(),
            kernel: "gaussian".into(),
            signal: "mcos".into(),
            c: 0.0,
            n,
            gamma,
            replicates: 4,
            rejections: 1,
            rate: 0.25,
            mean_t: Some(3.0),
            mean_eta_t: None,
            failures: 0,
            wall_ms: None,
            seed: 7,
            valid: true,
            forced_t: None,
            clamped: false,
        }
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(format_float(0.05), "5.0000000000000003e-2");
        assert_eq!(format_float(1.0), "1.0000000000000000e0");
        for v in [0.1, 1.0 / 3.0, 12345.678, -2.5e-300] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_layout_and_order() {
        let mut report = SimulationReport::new(&ExperimentConfig::default());
        report.cells = vec![
            cell("oracle_es", 100, None),
            cell("es", 200, None),
            cell("es", 100, Some(1.0)),
            cell("es", 100, Some(0.5)),
        ];
        report.sort();
        let mut buf = Vec::new();
        write_report(&report, OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CELL_HEADER.join(","));
        assert!(lines[1].starts_with("es,gaussian,mcos,0.0000000000000000e0,100,5.0000000000000000e-1,4,1,"));
        assert!(lines[2].contains(",100,1.0000000000000000e0,"));
        assert!(lines[3].starts_with("es,gaussian,mcos,0.0000000000000000e0,200,,"));
        assert!(lines[4].starts_with("oracle_es"));
        assert!(lines[1].ends_with(",0,,7"));
    }

    #[test]
    fn curves_csv_header() {
        let mut buf = Vec::new();
        let rows = [CurveRecord { t: 0, eta_t: 0.0, mse: 0.5, power: None, mu_nt: 0.0, sigma_nt: 0.0 }];
        write_curves_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,eta_t,mse,power,mu_nt,sigma_nt");
        assert_eq!(text.lines().nth(1).unwrap().split(',').nth(3).unwrap(), "");
    }
}
