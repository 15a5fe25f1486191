use super::*;
use crate::dynamics::{LorenzParams, RampSchedule, SystemSpec};
use crate::hpo::{GridAxis, GridSpec};
use crate::reservoir::{Architecture, HyperParams};
use std::collections::HashSet;
use std::path::Path;
use tempfile::tempdir;

fn tiny_config(name: &str, horizon: f64, ensemble: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        system: SystemSpec::Lorenz(LorenzParams {
            sigma: 10.0,
            beta: 8.0 / 3.0,
            rho: RampSchedule::constant(28.0),
            noise_bound: 0.0,
        }),
        ensemble_size: ensemble,
        spin_up: 20.0,
        observed_span: 30.0,
        horizon,
        hyperparams: HyperParams {
            n_nodes: 60,
            mean_degree: 3.0,
            spectral_radius: 0.7,
            input_scale: 0.4,
            control_scale: None,
            leakage: 1.0,
            tikhonov: 1e-8,
            activation_bias: 0.0,
            control_slope: 0.0,
            control_intercept: 1.0,
            obs_noise: 0.0,
            training_passes: 1,
            train_length: 20.0,
            rc_dt: 0.01,
            architecture: Architecture::Plain,
        },
        knowledge: None,
        observable: ObservableSpec::Maxima { coord: 2 },
        gamma_window: Some(2.0),
        gamma_range: None,
        snapshot_times: vec![1.0],
        valid_threshold: 0.4,
        sync_time: 1.0,
        stochastic: true,
        master_seed: 42,
        workers: 0,
    }
}

fn walk_files(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_string_lossy().to_string());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn horizon_zero_emits_training_artifacts_only() {
    let dir = tempdir().unwrap();
    let config = tiny_config("train_only", 0.0, 1);
    let outcome = run_ensemble_experiment(&config, dir.path()).unwrap();
    assert!(outcome.gamma.is_none());
    let categories: HashSet<String> =
        outcome.manifest.files.iter().map(|f| f.category.clone()).collect();
    assert!(categories.contains("model"));
    assert!(!categories.contains("gamma"));
    assert_eq!(outcome.manifest.used_members, 1);
}

#[test]
fn rerun_reproduces_identical_outputs() {
    let dir_a = tempdir().unwrap();
    let dir_b = tempdir().unwrap();
    let config = tiny_config("repro", 3.0, 2);
    let a = run_ensemble_experiment(&config, dir_a.path()).unwrap();
    let b = run_ensemble_experiment(&config, dir_b.path()).unwrap();
    assert_eq!(a.manifest.manifest_hash, b.manifest.manifest_hash);
    let files_a = walk_files(dir_a.path());
    let files_b = walk_files(dir_b.path());
    assert_eq!(files_a, files_b);
    for rel in files_a.iter().filter(|f| *f != "manifest.json") {
        let bytes_a = std::fs::read(dir_a.path().join(rel)).unwrap();
        let bytes_b = std::fs::read(dir_b.path().join(rel)).unwrap();
        assert_eq!(bytes_a, bytes_b, "file {rel} differs between reruns");
    }
}

#[test]
fn manifest_lists_exactly_the_emitted_files() {
    let dir = tempdir().unwrap();
    let config = tiny_config("complete", 3.0, 2);
    let outcome = run_ensemble_experiment(&config, dir.path()).unwrap();
    let listed: HashSet<String> =
        outcome.manifest.files.iter().map(|f| f.path.clone()).collect();
    let on_disk: HashSet<String> = walk_files(dir.path())
        .into_iter()
        .filter(|f| f != "manifest.json")
        .collect();
    assert_eq!(listed, on_disk);
    // ledger invariant: used + excluded = ensemble size
    let excluded = outcome.manifest.diverged_pred_members.len() + outcome.manifest.member_errors.len();
    assert_eq!(outcome.manifest.used_members + excluded, config.ensemble_size);
}

#[test]
fn gamma_is_emitted_and_small_for_stationary_truth() {
    let dir = tempdir().unwrap();
    let config = tiny_config("gamma", 6.0, 3);
    let outcome = run_ensemble_experiment(&config, dir.path()).unwrap();
    let gamma = outcome.gamma.expect("gamma series");
    assert!(!gamma.gamma.is_empty());
    assert!(gamma.gamma.iter().all(|g| (0.0..=2.0).contains(g)));
    assert!(dir.path().join("gamma.csv").exists());
}

#[test]
fn emit_returns_paths_and_names_missing_artifacts() {
    let dir = tempdir().unwrap();
    let config = tiny_config("emit", 3.0, 1);
    run_ensemble_experiment(&config, dir.path()).unwrap();
    let manifest_path = dir.path().join("manifest.json");
    let gammas = emit_plot_data(&manifest_path, "gamma", dir.path()).unwrap();
    assert_eq!(gammas.len(), 1);
    let events = emit_plot_data(&manifest_path, "events", dir.path()).unwrap();
    assert!(!events.is_empty());
    // deleting an artifact makes emit name it
    std::fs::remove_file(&gammas[0]).unwrap();
    let err = emit_plot_data(&manifest_path, "gamma", dir.path()).unwrap_err();
    assert!(err.to_string().contains("gamma.csv"), "error was: {err}");
    // unknown category errors too
    assert!(emit_plot_data(&manifest_path, "sweep", dir.path()).is_err());
}

#[test]
fn config_json_round_trip() {
    let config = tiny_config("json", 5.0, 2);
    let text = serde_json::to_string_pretty(&config).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    back.validate().unwrap();
    assert_eq!(back.hash(), config.hash());
    // defaults apply when optional fields are omitted
    let minimal = r#"{
        "name": "minimal",
        "system": {"kind": "lorenz", "sigma": 10.0, "beta": 2.6666666666666665,
                   "rho": {"base": 28.0, "amplitude": 0.0, "timescale": 1.0},
                   "noise_bound": 0.0},
        "ensemble_size": 1,
        "observed_span": 30.0,
        "horizon": 2.0,
        "hyperparams": {
            "n_nodes": 10, "mean_degree": 2.0, "spectral_radius": 0.5,
            "input_scale": 0.4, "leakage": 1.0, "tikhonov": 1e-8,
            "activation_bias": 0.0, "control_slope": 0.0,
            "obs_noise": 0.0, "training_passes": 1, "train_length": 10.0,
            "rc_dt": 0.01, "architecture": "plain"
        },
        "observable": {"kind": "maxima", "coord": 2},
        "master_seed": 7
    }"#;
    let parsed: ExperimentConfig = serde_json::from_str(minimal).unwrap();
    parsed.validate().unwrap();
    assert_eq!(parsed.valid_threshold, 0.4);
    assert_eq!(parsed.sync_time, 1.0);
    assert!(parsed.stochastic);
    assert_eq!(parsed.hyperparams.control_intercept, 1.0);
    assert_eq!(parsed.effective_gamma_window(), 1.0);
}

#[test]
fn sweep_single_value_gives_one_row() {
    let spec = SweepSpec {
        system: SystemSpec::Lorenz(LorenzParams {
            sigma: 10.0,
            beta: 8.0 / 3.0,
            rho: RampSchedule::constant(28.0),
            noise_bound: 0.0,
        }),
        values: vec![28.0],
        direction: SweepDirection::Independent,
        transient: 10.0,
        record: 10.0,
        observable: SweepObservable::Maxima { coord: 2 },
        initial: None,
        keep_noise: false,
        seed: 1,
    };
    let rows = stationary_sweep(&spec).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(!rows[0].diverged);
    assert!(rows[0].samples.len() > 5);
}

#[test]
fn lorenz_down_sweep_lands_on_fixed_point_branch() {
    // hysteresis: starting on the chaotic branch near rho = 28 and sweeping
    // down, the orbit collapses onto the fixed point z* = rho - 1 once the
    // chaotic attractor ceases to exist
    let values: Vec<f64> = (0..15).map(|i| 28.0 - 0.5 * i as f64).collect(); // 28 .. 21
    let spec = SweepSpec {
        system: SystemSpec::Lorenz(LorenzParams {
            sigma: 10.0,
            beta: 8.0 / 3.0,
            rho: RampSchedule::constant(28.0),
            noise_bound: 0.0,
        }),
        values: values.clone(),
        direction: SweepDirection::Down,
        transient: 100.0,
        record: 20.0,
        observable: SweepObservable::Samples { coord: 2, every: 10 },
        initial: Some(vec![1.0, 1.0, 20.0]),
        keep_noise: false,
        seed: 5,
    };
    let rows = stationary_sweep(&spec).unwrap();
    let last = rows.last().unwrap();
    assert_eq!(last.value, 21.0);
    let z_star = 20.0;
    for s in &last.samples {
        assert!((s - z_star).abs() < 0.5, "sample {s} not on the fixed-point branch");
    }
    // and the first row is still visibly chaotic (wide z range)
    let first = &rows[0];
    let lo = first.samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = first.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo > 5.0, "chaotic branch expected at rho = 28, range {}", hi - lo);
}

#[test]
fn compare_objectives_smoke() {
    let dir = tempdir().unwrap();
    let mut config = tiny_config("compare", 4.0, 2);
    config.observed_span = 40.0;
    let grid = GridSpec {
        axes: vec![GridAxis { name: "spectral_radius".to_string(), values: vec![0.5, 0.9] }],
        m1: 2,
        m2: 1,
        t1: 2.0,
        t2: Some(22.0),
        t3: 35.0,
        seed: 9,
    };
    let outcome = compare_objectives(&config, &grid, dir.path()).unwrap();
    assert!(dir.path().join("hpo_scores.csv").exists());
    assert!(dir.path().join("compare_report.json").exists());
    assert!(dir.path().join("combined/manifest.json").exists());
    assert!(outcome.gamma_combined.is_some());
    if !outcome.report.identical_winners {
        assert!(dir.path().join("valid_time/manifest.json").exists());
        assert_ne!(
            outcome.report.combined_winner.index,
            outcome.report.valid_time_winner.index
        );
    }
}
