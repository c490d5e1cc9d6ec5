use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use earlystop::descent::StepSize;
use earlystop::harness::{
    read_dataset_csv, run_gamma_sweep, run_iteration_curves, run_method_comparison, run_size_power, stop_dataset,
    write_report, ExperimentConfig, Method, OutputFormat, SignalId, StopRequest,
};
use earlystop::harness::format_float;
use earlystop::kernels::KernelSpec;
use earlystop::stopping::{RuleKind, StoppingDiagnostics};

#[derive(Parser)]
#[command(name = "earlystop", version, about = "Early-stopping kernel tests and their simulation studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Size/power over a grid of sample sizes
    Simulate(Common),
    /// Per-iteration MSE and power
    Curves {
        #[command(flatten)]
        common: Common,
        /// Last iteration of the curve (default: ten times the largest T*)
        #[arg(long)]
        t_max: Option<usize>,
    },
    /// Forced-horizon sharpness sweep
    Sweep(Common),
    /// Early stopping vs oracle vs penalized test on shared datasets
    Compare(Common),
    /// Stopping diagnosis for one dataset (CSV with columns x,y)
    Stop {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = RuleArg::Testing)]
        rule: RuleArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Gaussian,
    Sobolev2,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Testing,
    Estimation,
    Bootstrap,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    /// mcos, mmix, msmooth or mkink
    #[arg(long)]
    signal: Option<SignalId>,
    /// Signal strengths (comma list)
    #[arg(long, value_delimiter = ',')]
    c: Option<Vec<f64>>,
    /// Sample sizes (comma list)
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Significance level
    #[arg(long)]
    level: Option<f64>,
    /// Constant step size (clipped to min{1, 1/μ̂_1}); default is the cap
    #[arg(long)]
    alpha_step: Option<f64>,
    /// Noise standard deviation
    #[arg(long)]
    sigma: Option<f64>,
    /// Bootstrap resamples
    #[arg(long)]
    bootstrap_b: Option<usize>,
    /// Forced-horizon exponents (comma list)
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// Methods: es, oracle_es, penalized_cv (comma list)
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stopping-rule search horizon (default 50 n / α)
    #[arg(long)]
    horizon: Option<usize>,
    /// Record wall-clock time per cell (makes output non-reproducible)
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(k) = self.kernel {
            cfg.kernel = match k {
                KernelArg::Gaussian => KernelSpec::gaussian(),
                KernelArg::Sobolev2 => KernelSpec::sobolev2(),
            };
        }
        if let Some(s) = self.signal {
            cfg.signal = s;
        }
        if let Some(c) = &self.c {
            cfg.c = c.clone();
        }
        if let Some(n) = &self.n {
            cfg.n = n.clone();
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
        }
        if let Some(l) = self.level {
            cfg.level = l;
        }
        if let Some(a) = self.alpha_step {
            cfg.step = StepSize::Fixed(a);
        }
        if let Some(s) = self.sigma {
            cfg.noise_sd = s;
        }
        if let Some(b) = self.bootstrap_b {
            cfg.bootstrap_resamples = b;
        }
        if let Some(g) = &self.gamma {
            cfg.gamma = g.clone();
        }
        if let Some(m) = &self.methods {
            cfg.methods = m.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.horizon.is_some() {
            cfg.t_max = self.horizon;
        }
        cfg.timing |= self.timing;
        cfg.validate()?;
        Ok(cfg)
    }

    fn format(&self) -> OutputFormat {
        match self.format {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(std::io::BufWriter::new(
                std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
            )),
            None => Box::new(std::io::stdout().lock()),
        })
    }
}

fn write_trace(diag: &StoppingDiagnostics, format: OutputFormat, mut out: Box<dyn Write>) -> Result<()> {
    match format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, diag)?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["t", "eta_t", "bias_side", "threshold_side", "separation_sq"])?;
            for r in &diag.trace {
                w.write_record([
                    r.t.to_string(),
                    format_float(r.eta),
                    format_float(r.bias_side),
                    format_float(r.threshold_side),
                    format_float(r.separation_sq),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Simulate(c) | Command::Sweep(c) | Command::Compare(c) => c,
        Command::Curves { common, .. } | Command::Stop { common, .. } => common,
    };
    if let Some(threads) = common.threads {
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    let cfg = common.config()?;
    let report = match &cli.command {
        Command::Simulate(_) => run_size_power(&cfg)?,
        Command::Sweep(_) => run_gamma_sweep(&cfg)?,
        Command::Compare(_) => run_method_comparison(&cfg)?,
        Command::Curves { t_max, .. } => {
            let report = run_iteration_curves(&cfg, *t_max)?;
            if let Some(s) = &report.curve_summary {
                eprintln!(
                    "argmin MSE t = {}, argmax power t = {} (power {:.3}), median T* = {}, median T~ = {}",
                    s.argmin_mse_t, s.argmax_power_t, s.max_power, s.t_star, s.t_tilde
                );
            }
            report
        }
        Command::Stop { data, rule, .. } => {
            let dataset = read_dataset_csv(data, cfg.noise_sd)
                .with_context(|| format!("reading dataset {}", data.display()))?;
            let req = StopRequest {
                rule: match rule {
                    RuleArg::Testing => RuleKind::Testing,
                    RuleArg::Estimation => RuleKind::Estimation,
                    RuleArg::Bootstrap => RuleKind::Bootstrap,
                },
                step: cfg.step,
                noise_sd: cfg.noise_sd,
                bootstrap_resamples: cfg.bootstrap_resamples,
                seed: cfg.seed,
                t_max: cfg.t_max,
            };
            let diag = stop_dataset(&dataset, &cfg.kernel, &req)?;
            eprintln!(
                "rule {} stopped at T = {} (eta_T = {}), kappa_emp = {}, kappa_pop = {}",
                diag.rule.label(),
                diag.stop,
                diag.eta_stop,
                diag.kappa_empirical,
                diag.kappa_population.map(|k| k.to_string()).unwrap_or_default()
            );
            return write_trace(&diag, common.format(), common.sink()?);
        }
    };
    let invalid: Vec<String> = report
        .cells
        .iter()
        .filter(|c| !c.valid)
        .map(|c| format!("{} n={} c={} ({} failures)", c.method, c.n, c.c, c.failures))
        .collect();
    if !invalid.is_empty() {
        eprintln!("warning: cells with more than 1% failed replicates: {}", invalid.join("; "));
    }
    write_report(&report, common.format(), common.sink()?)?;
    Ok(())
}
