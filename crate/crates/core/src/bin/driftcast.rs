//! Command-line front end: simulate the test systems, run parameter sweeps,
//! train/predict single models, search hyperparameters, run ensemble
//! experiments, compare selection objectives, and emit plot data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use driftcast::dynamics::{random_initial_state, simulate, SystemSpec};
use driftcast::error::Error;
use driftcast::harness::{
    compare_objectives, emit_plot_data, install_pool, run_ensemble_experiment, ExperimentConfig,
    ManifestFile, RunManifest, stationary_sweep, SweepSpec, Timings,
};
use driftcast::hpo::{grid_search, EvalSettings, GridSpec};
use driftcast::io;
use driftcast::reservoir::{predict, train_model, TrainSpec};
use driftcast::rng::fan_out;

#[derive(Parser)]
#[command(name = "driftcast", version, about = "Tipping-point prediction of non-stationary dynamical systems with reservoir computing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOut {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per CPU).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory of a configured system.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonOut,
    },
    /// Stationary bifurcation / hysteresis sweep over a parameter list.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonOut,
    },
    /// Train a single model on freshly simulated observed data.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonOut,
    },
    /// Closed-loop prediction from a saved model and observed data.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Observed trajectory (.dctr) whose tail synchronizes the reservoir.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: usize,
        /// Synchronization segment length in time units.
        #[arg(long, default_value_t = 1.0)]
        sync_time: f64,
        /// Disable residual-resampling noise.
        #[arg(long)]
        deterministic: bool,
        #[command(flatten)]
        common: CommonOut,
    },
    /// Grid-search hyperparameters with the two-horizon objective.
    Hpo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// Optional observed trajectory; simulated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOut,
    },
    /// Full ensemble experiment: simulate, train, predict, score.
    Ensemble {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonOut,
    },
    /// Run the hyperparameter-objective comparison experiment.
    CompareHpo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[command(flatten)]
        common: CommonOut,
    },
    /// List (and verify) plot-data artifacts recorded in a manifest.
    Emit {
        #[arg(long)]
        manifest: PathBuf,
        /// Artifact category: gamma | cdf | events | snapshot | sweep.
        #[arg(long)]
        what: String,
        /// Directory the manifest paths are relative to (defaults to the
        /// manifest's own directory).
        #[arg(long)]
        root: Option<PathBuf>,
    },
}

/// Stand-alone simulation request.
#[derive(Deserialize)]
struct SimulateConfig {
    system: SystemSpec,
    t_start: f64,
    t_end: f64,
    #[serde(default)]
    initial: Option<Vec<f64>>,
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes, anything else is a config error
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Json(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> driftcast::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> driftcast::Result<()> {
    match cli.command {
        Command::Simulate { config, common } => {
            let mut sim: SimulateConfig = load_json(&config)?;
            if let Some(seed) = common.seed {
                sim.seed = seed;
            }
            std::fs::create_dir_all(&common.out)?;
            let initial = sim
                .initial
                .unwrap_or_else(|| random_initial_state(&sim.system, fan_out(sim.seed, 1)));
            let traj = simulate(&sim.system, &initial, sim.t_start, sim.t_end, sim.seed)?;
            if traj.diverged {
                eprintln!("warning: trajectory diverged at t = {}", traj.end_time());
            }
            let bin = common.out.join("trajectory.dctr");
            let csv = common.out.join("trajectory.csv");
            io::write_trajectory(&bin, &traj)?;
            io::write_trajectory_csv(&csv, &traj)?;
            println!("{}", bin.display());
            println!("{}", csv.display());
            Ok(())
        }
        Command::Sweep { config, common } => {
            let mut spec: SweepSpec = load_json(&config)?;
            if let Some(seed) = common.seed {
                spec.seed = seed;
            }
            std::fs::create_dir_all(&common.out)?;
            let rows = install_pool(common.workers, || stationary_sweep(&spec))?;
            let table: Vec<(f64, Vec<f64>)> =
                rows.iter().map(|r| (r.value, r.samples.clone())).collect();
            let csv = common.out.join("sweep.csv");
            io::write_sweep_csv(&csv, &table)?;
            let mut manifest = RunManifest {
                kind: "sweep".to_string(),
                name: "sweep".to_string(),
                config_hash: String::new(),
                master_seed: spec.seed,
                member_seeds: Vec::new(),
                ensemble_size: 0,
                diverged_pred_members: rows
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.diverged)
                    .map(|(i, _)| i)
                    .collect(),
                diverged_true_members: Vec::new(),
                member_errors: Vec::new(),
                used_members: rows.iter().filter(|r| !r.diverged).count(),
                files: vec![ManifestFile { path: "sweep.csv".to_string(), category: "sweep".to_string() }],
                skipped: Vec::new(),
                manifest_hash: String::new(),
                timings: Timings::default(),
            };
            manifest.config_hash =
                format!("{:016x}", driftcast::rng::fnv1a(serde_json::to_string(&spec)?.as_bytes()));
            manifest.save(&common.out.join("manifest.json"))?;
            println!("{}", csv.display());
            Ok(())
        }
        Command::Train { config, common } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = common.seed {
                config.master_seed = seed;
            }
            std::fs::create_dir_all(&common.out)?;
            let seed = fan_out(config.master_seed, 0);
            let system = &config.system;
            let t_start = -(config.spin_up + config.observed_span);
            let ic = random_initial_state(system, fan_out(seed, 1));
            let full = simulate(system, &ic, t_start, 0.0, fan_out(seed, 2))?;
            let observed = full.slice_time(-config.observed_span, 0.0)?;
            let model = train_model(&TrainSpec {
                data: &observed,
                window: (-config.hyperparams.train_length, 0.0),
                rms_window: (-config.observed_span, 0.0),
                hyperparams: &config.hyperparams,
                knowledge: config.knowledge_model(),
                seed: fan_out(seed, 3),
            })?;
            let model_path = common.out.join("model.dcmd");
            let data_path = common.out.join("observed.dctr");
            io::write_model(&model_path, &model)?;
            io::write_trajectory(&data_path, &observed)?;
            println!("{}", model_path.display());
            println!("{}", data_path.display());
            Ok(())
        }
        Command::Predict { model, data, steps, sync_time, deterministic, common } => {
            let model = io::read_model(&model)?;
            let observed = io::read_trajectory(&data)?;
            std::fs::create_dir_all(&common.out)?;
            let end = observed.end_time();
            let sync = observed.slice_time(end - sync_time, end)?;
            let seed = common.seed.unwrap_or(0);
            let prediction = predict(&model, &sync, steps, !deterministic, seed)?;
            match prediction.trajectory {
                Some(traj) => {
                    if prediction.diverged {
                        eprintln!("warning: prediction diverged at t = {}", traj.end_time());
                    }
                    let bin = common.out.join("pred.dctr");
                    let csv = common.out.join("pred.csv");
                    io::write_trajectory(&bin, &traj)?;
                    io::write_trajectory_csv(&csv, &traj)?;
                    println!("{}", bin.display());
                    println!("{}", csv.display());
                }
                None => eprintln!("no prediction produced (zero steps or immediate divergence)"),
            }
            Ok(())
        }
        Command::Hpo { config, grid, data, common } => {
            let config = ExperimentConfig::load(&config)?;
            let grid: GridSpec = load_json(&grid)?;
            grid.validate()?;
            std::fs::create_dir_all(&common.out)?;
            let observed = match data {
                Some(path) => io::read_trajectory(&path)?,
                None => {
                    let seed = common.seed.unwrap_or(fan_out(config.master_seed, 0xCAFE_0001));
                    let span = grid.t3 + config.sync_time;
                    let ic = random_initial_state(&config.system, fan_out(seed, 1));
                    let full = simulate(
                        &config.system,
                        &ic,
                        -(config.spin_up + span),
                        0.0,
                        fan_out(seed, 2),
                    )?;
                    full.slice_time(-span, 0.0)?
                }
            };
            let eval = EvalSettings {
                m1: grid.m1,
                m2: grid.m2,
                sync_time: config.sync_time,
                valid_threshold: config.valid_threshold,
                stochastic: config.stochastic,
            };
            let scores = install_pool(common.workers, || {
                grid_search(&grid, &config.hyperparams, &observed, &eval, config.knowledge_model())
            })?;
            let csv = common.out.join("hpo_scores.csv");
            io::write_hpo_csv(&csv, &scores)?;
            let best = serde_json::to_string_pretty(&scores[0])?;
            std::fs::write(common.out.join("best.json"), best)?;
            println!("{}", csv.display());
            println!(
                "best: index {} (valid time {:.4}, wasserstein {:.4}, score {:.4})",
                scores[0].index,
                scores[0].median_valid_time,
                scores[0].mean_wasserstein,
                scores[0].score
            );
            Ok(())
        }
        Command::Ensemble { config, common } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = common.seed {
                config.master_seed = seed;
            }
            if common.workers > 0 {
                config.workers = common.workers;
            }
            let outcome = run_ensemble_experiment(&config, &common.out)?;
            println!("{}", common.out.join("manifest.json").display());
            println!(
                "members: {} used, {} diverged, {} failed",
                outcome.manifest.used_members,
                outcome.manifest.diverged_pred_members.len(),
                outcome.manifest.member_errors.len()
            );
            Ok(())
        }
        Command::CompareHpo { config, grid, common } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = common.seed {
                config.master_seed = seed;
            }
            if common.workers > 0 {
                config.workers = common.workers;
            }
            let grid: GridSpec = load_json(&grid)?;
            let outcome = compare_objectives(&config, &grid, &common.out)?;
            println!("{}", common.out.join("compare_report.json").display());
            println!(
                "combined winner: candidate {}; valid-time winner: candidate {}{}",
                outcome.report.combined_winner.index,
                outcome.report.valid_time_winner.index,
                if outcome.report.identical_winners { " (identical)" } else { "" }
            );
            Ok(())
        }
        Command::Emit { manifest, what, root } => {
            let root = root.unwrap_or_else(|| {
                manifest.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
            });
            let paths = emit_plot_data(&manifest, &what, &root)?;
            for p in paths {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}
