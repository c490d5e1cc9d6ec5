//! Simulation harness: signal models, Monte Carlo drivers and reports.

pub mod config;
pub mod data;
pub mod experiments;
pub mod report;

pub use config::{ExperimentConfig, Method};
pub use data::{generate_dataset, read_dataset_csv, Dataset, SignalId, SignalModel};
pub use experiments::{
    early_stopping_test, evaluate_method, forced_horizon, replicate_dataset, replicate_seed, run_gamma_sweep,
    run_iteration_curves, run_method_comparison, run_size_power, stop_dataset, sweep_base, ReplicateOutcome,
    StopRequest,
};
pub use report::{
    format_float, write_cells_csv, write_curves_csv, write_report, write_report_file, CellRecord, CurveRecord,
    CurveSummary, OutputFormat, ReportMetadata, SimulationReport,
};
