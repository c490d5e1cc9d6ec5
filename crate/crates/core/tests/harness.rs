use earlystop::descent::make_schedule;
use earlystop::harness::{
    early_stopping_test, forced_horizon, replicate_dataset, run_gamma_sweep, run_iteration_curves,
    run_method_comparison, run_size_power, ExperimentConfig, Method, SignalId, SignalModel,
};
use earlystop::kernels::{EmpiricalKernelEigen, KernelSpec};

fn small(n: usize) -> ExperimentConfig {
    ExperimentConfig {
        n: vec![n],
        replicates: 6,
        bootstrap_resamples: 2,
        cv_folds: 3,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn datasets_are_paired_across_kernels_and_methods() {
    let a = small(40);
    let b = ExperimentConfig {
        kernel: KernelSpec::sobolev2(),
        methods: vec![Method::PenalizedCv],
        gamma: vec![1.0],
        ..small(40)
    };
    let signal = SignalModel { id: SignalId::MMix, c: 0.5 };
    for r in 0..3 {
        let da = replicate_dataset(&a, &signal, 40, r).unwrap();
        let db = replicate_dataset(&b, &signal, 40, r).unwrap();
        assert_eq!(da.x, db.x);
        assert_eq!(da.y, db.y);
    }
    let other = replicate_dataset(&a, &SignalModel { id: SignalId::MMix, c: 0.25 }, 40, 0).unwrap();
    assert_ne!(other.x, replicate_dataset(&a, &signal, 40, 0).unwrap().x);
}

#[test]
fn rates_are_rejection_fractions_and_runs_repeat() {
    let cfg = ExperimentConfig { c: vec![0.0, 1.0], ..small(30) };
    let first = run_size_power(&cfg).unwrap();
    let second = run_size_power(&cfg).unwrap();
    assert_eq!(first.cells.len(), 6);
    for (a, b) in first.cells.iter().zip(&second.cells) {
        assert_eq!(a.rate, a.rejections as f64 / a.replicates as f64);
        assert_eq!(a.rejections, b.rejections);
        assert_eq!(a.mean_eta_t, b.mean_eta_t);
        assert!(a.wall_ms.is_none());
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = ExperimentConfig { c: vec![0.5], ..small(30) };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_method_comparison(&cfg).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(serde_json::to_string(&one.cells).unwrap(), serde_json::to_string(&four.cells).unwrap());
}

#[test]
fn level_near_one_rejects_everything() {
    let cfg = ExperimentConfig {
        c: vec![0.0],
        level: 0.999999,
        methods: vec![Method::OracleEs],
        ..small(30)
    };
    let report = run_size_power(&cfg).unwrap();
    let cell = &report.cells[0];
    assert_eq!(cell.failures, 0);
    assert_eq!(cell.rate, 1.0);
}

#[test]
fn sweep_cell_matches_direct_forced_test() {
    let cfg = ExperimentConfig {
        c: vec![1.0],
        kernel: KernelSpec::sobolev2(),
        gamma: vec![0.8],
        ..small(35)
    };
    let report = run_gamma_sweep(&cfg).unwrap();
    let cell = &report.cells[0];
    let (t, clamped) = forced_horizon(&cfg.kernel, 35, 0.8);
    assert_eq!(cell.forced_t, Some(t));
    assert!(!clamped);
    let signal = SignalModel { id: cfg.signal, c: 1.0 };
    let mut rejections = 0;
    for r in 0..cfg.replicates {
        let data = replicate_dataset(&cfg, &signal, 35, r).unwrap();
        let eig = EmpiricalKernelEigen::new(&cfg.kernel, &data.x).unwrap();
        let schedule = make_schedule(eig.eigenvalues(), cfg.step).unwrap();
        let o = early_stopping_test(&eig, &data.y, &schedule, t, 1.0, cfg.level).unwrap();
        rejections += o.reject as usize;
    }
    assert_eq!(cell.rejections, rejections);
    assert_eq!(cell.method, "fixed_t");
}

#[test]
fn tiny_gamma_gives_one_iteration() {
    let (t, clamped) = forced_horizon(&KernelSpec::sobolev2(), 100, 1e-3);
    assert_eq!((t, clamped), (1, false));
}

#[test]
fn curves_cover_every_iteration() {
    let cfg = ExperimentConfig { c: vec![1.0], ..small(25) };
    let report = run_iteration_curves(&cfg, Some(15)).unwrap();
    let curves = &report.curves;
    assert_eq!(curves.len(), 16);
    assert!(curves[0].power.is_none());
    assert!(curves[1..].iter().all(|c| c.power.is_some()));
    assert!(curves.windows(2).all(|w| w[1].mu_nt >= w[0].mu_nt && w[1].eta_t > w[0].eta_t));
    let summary = report.curve_summary.as_ref().unwrap();
    assert!((1..=15).contains(&summary.argmin_mse_t));
    assert!((1..=15).contains(&summary.argmax_power_t));
}

#[test]
fn comparison_rejects_forced_method() {
    let cfg = ExperimentConfig { methods: vec![Method::FixedT], ..small(20) };
    assert!(run_method_comparison(&cfg).is_err());
}
