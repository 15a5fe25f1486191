//! The ensemble experiment: simulate, train, and predict each member
//! independently (in parallel, seeded per member), then merge the climate
//! statistics and write every artifact plus a manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::dynamics::{random_initial_state, simulate, Trajectory};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{gamma_series, ClimateErrorSeries};
use crate::observables::{scale_trajectory, EventSeries};
use crate::reservoir::{predict, train_model, TrainSpec};
use crate::rng::{fan_out, fnv1a};

/// One artifact path plus the category `emit` filters on.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestFile {
    pub path: String,
    pub category: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Timings {
    pub total_seconds: f64,
}

/// Record of one ensemble (or sweep/compare) run. Every field except
/// `timings` is deterministic in (config, master seed); `manifest_hash`
/// fingerprints exactly that deterministic part.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub name: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub member_seeds: Vec<u64>,
    pub ensemble_size: usize,
    /// Members excluded from prediction statistics (diverged prediction).
    pub diverged_pred_members: Vec<usize>,
    /// Members whose true simulation hit the divergence guard.
    pub diverged_true_members: Vec<usize>,
    /// Members that failed outright, with the error message.
    pub member_errors: Vec<(usize, String)>,
    /// Members contributing to the merged statistics.
    pub used_members: usize,
    pub files: Vec<ManifestFile>,
    /// Artifacts that were requested but had no data (e.g. empty windows).
    pub skipped: Vec<String>,
    pub manifest_hash: String,
    pub timings: Timings,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub(crate) fn seal(&mut self) {
        #[derive(Serialize)]
        struct Deterministic<'a> {
            kind: &'a str,
            name: &'a str,
            config_hash: &'a str,
            master_seed: u64,
            member_seeds: &'a [u64],
            ensemble_size: usize,
            diverged_pred_members: &'a [usize],
            diverged_true_members: &'a [usize],
            member_errors: &'a [(usize, String)],
            used_members: usize,
            files: &'a [ManifestFile],
            skipped: &'a [String],
        }
        let det = Deterministic {
            kind: &self.kind,
            name: &self.name,
            config_hash: &self.config_hash,
            master_seed: self.master_seed,
            member_seeds: &self.member_seeds,
            ensemble_size: self.ensemble_size,
            diverged_pred_members: &self.diverged_pred_members,
            diverged_true_members: &self.diverged_true_members,
            member_errors: &self.member_errors,
            used_members: self.used_members,
            files: &self.files,
            skipped: &self.skipped,
        };
        let text = serde_json::to_string(&det).expect("manifest serializes");
        self.manifest_hash = format!("{:016x}", fnv1a(text.as_bytes()));
    }
}

/// Everything the merge step needs from one member.
struct MemberOutcome {
    index: usize,
    diverged_true: bool,
    diverged_pred: bool,
    /// Observable events of the true trajectory (normalized), full span.
    events_true: EventSeries,
    /// Observable events of the prediction (normalized); empty if none.
    events_pred: EventSeries,
    /// Normalized true/predicted states at each requested snapshot time.
    snapshots_true: Vec<Option<Vec<f64>>>,
    snapshots_pred: Vec<Option<Vec<f64>>>,
    files: Vec<ManifestFile>,
}

/// Outcome of a full ensemble run: the manifest plus the merged Γ series
/// (when a prediction horizon was requested).
pub struct EnsembleOutcome {
    pub manifest: RunManifest,
    pub gamma: Option<ClimateErrorSeries>,
}

/// Run the configured ensemble experiment, writing all artifacts under
/// `out_dir`. Per-member failures are recorded in the manifest rather than
/// aborting the run; the merged statistics use the surviving members.
pub fn run_ensemble_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<EnsembleOutcome> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();

    let outcome = install_pool(config.workers, || -> Result<Vec<std::result::Result<MemberOutcome, (usize, String)>>> {
        Ok((0..config.ensemble_size)
            .into_par_iter()
            .map(|i| {
                run_member(config, out_dir, i).map_err(|e| (i, e.to_string()))
            })
            .collect())
    })?;

    // merge in member order regardless of completion order
    let mut members: Vec<MemberOutcome> = Vec::new();
    let mut member_errors: Vec<(usize, String)> = Vec::new();
    for r in outcome {
        match r {
            Ok(m) => members.push(m),
            Err(e) => member_errors.push(e),
        }
    }
    members.sort_by_key(|m| m.index);
    member_errors.sort_by_key(|e| e.0);

    let mut files: Vec<ManifestFile> = members.iter().flat_map(|m| m.files.clone()).collect();
    let mut skipped: Vec<String> = Vec::new();

    let diverged_pred: Vec<usize> =
        members.iter().filter(|m| m.diverged_pred).map(|m| m.index).collect();
    let diverged_true: Vec<usize> =
        members.iter().filter(|m| m.diverged_true).map(|m| m.index).collect();

    let mut gamma = None;
    if config.horizon > 0.0 {
        let used: Vec<&MemberOutcome> = members.iter().filter(|m| !m.diverged_pred).collect();
        let true_events: Vec<EventSeries> =
            members.iter().map(|m| m.events_true.clone()).collect();
        let pred_events: Vec<EventSeries> =
            used.iter().map(|m| m.events_pred.clone()).collect();
        if pred_events.is_empty() {
            skipped.push("gamma.csv (no surviving predictions)".to_string());
        } else {
            match gamma_series(
                &true_events,
                &pred_events,
                config.effective_gamma_range(),
                config.effective_gamma_window(),
                None,
                &config.observable.label(),
            ) {
                Ok(series) => {
                    let path = out_dir.join("gamma.csv");
                    io::write_gamma_csv(&path, &series)?;
                    files.push(file_entry(out_dir, &path, "gamma"));
                    gamma = Some(series);
                }
                Err(e) => skipped.push(format!("gamma.csv ({e})")),
            }
        }

        // snapshot CDFs of the observable over [t, t + window)
        let window = config.effective_gamma_window();
        for &t in &config.snapshot_times {
            let pool = |evs: Vec<&EventSeries>| -> Vec<f64> {
                evs.iter().flat_map(|e| e.values_in(t, t + window)).collect()
            };
            let tv = pool(members.iter().map(|m| &m.events_true).collect());
            let pv = pool(used.iter().map(|m| &m.events_pred).collect());
            let name = format!("cdf/cdf_t{t}.csv");
            if tv.is_empty() || pv.is_empty() {
                skipped.push(format!("{name} (empty window)"));
                continue;
            }
            let path = out_dir.join(&name);
            io::write_cdf_csv(&path, &tv, &pv)?;
            files.push(file_entry(out_dir, &path, "cdf"));
        }
    }

    // snapshot state clouds
    for (j, &t) in config.snapshot_times.iter().enumerate() {
        let tstates: Vec<Vec<f64>> =
            members.iter().filter_map(|m| m.snapshots_true[j].clone()).collect();
        if !tstates.is_empty() {
            let path = out_dir.join(format!("snapshots/true_t{t}.csv"));
            io::write_snapshot_csv(&path, &tstates)?;
            files.push(file_entry(out_dir, &path, "snapshot"));
        } else {
            skipped.push(format!("snapshots/true_t{t}.csv (out of range)"));
        }
        let pstates: Vec<Vec<f64>> = members
            .iter()
            .filter(|m| !m.diverged_pred)
            .filter_map(|m| m.snapshots_pred[j].clone())
            .collect();
        if !pstates.is_empty() {
            let path = out_dir.join(format!("snapshots/pred_t{t}.csv"));
            io::write_snapshot_csv(&path, &pstates)?;
            files.push(file_entry(out_dir, &path, "snapshot"));
        } else {
            skipped.push(format!("snapshots/pred_t{t}.csv (out of range)"));
        }
    }

    let used_members = members.iter().filter(|m| !m.diverged_pred).count();
    let mut manifest = RunManifest {
        kind: "ensemble".to_string(),
        name: config.name.clone(),
        config_hash: config.hash(),
        master_seed: config.master_seed,
        member_seeds: (0..config.ensemble_size as u64)
            .map(|i| fan_out(config.master_seed, i))
            .collect(),
        ensemble_size: config.ensemble_size,
        diverged_pred_members: diverged_pred,
        diverged_true_members: diverged_true,
        member_errors,
        used_members,
        files,
        skipped,
        manifest_hash: String::new(),
        timings: Timings::default(),
    };
    manifest.seal();
    manifest.timings.total_seconds = started.elapsed().as_secs_f64();
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(EnsembleOutcome { manifest, gamma })
}

fn run_member(config: &ExperimentConfig, out_dir: &Path, index: usize) -> Result<MemberOutcome> {
    let seed = fan_out(config.master_seed, index as u64);
    let system = &config.system;
    let dt = system.native_dt();
    let t_start = -(config.spin_up + config.observed_span);

    let ic = random_initial_state(system, fan_out(seed, 1));
    let t_end = if config.horizon > 0.0 { config.horizon } else { 0.0 };
    let full = simulate(system, &ic, t_start, t_end, fan_out(seed, 2))?;
    let diverged_true = full.diverged;
    if full.end_time() < t_end - 0.5 * dt {
        return Err(Error::numeric(format!(
            "true trajectory diverged at t = {}",
            full.end_time()
        )));
    }

    let observed = full.slice_time(-config.observed_span, 0.0)?;
    let hp = &config.hyperparams;
    let model = train_model(&TrainSpec {
        data: &observed,
        window: (-hp.train_length, 0.0),
        rms_window: (-config.observed_span, 0.0),
        hyperparams: hp,
        knowledge: config.knowledge_model(),
        seed: fan_out(seed, 3),
    })?;

    let mut files = Vec::new();
    let model_path = out_dir.join(format!("models/member_{index:03}.dcmd"));
    ensure_parent(&model_path)?;
    io::write_model(&model_path, &model)?;
    files.push(file_entry(out_dir, &model_path, "model"));

    let true_path = out_dir.join(format!("trajectories/true_{index:03}.dctr"));
    ensure_parent(&true_path)?;
    io::write_trajectory(&true_path, &full)?;
    files.push(file_entry(out_dir, &true_path, "trajectory"));

    // events come from the raw trajectory (sections live in raw coordinates)
    // with values reported in normalized units; snapshots use normalized states
    let full_norm = scale_trajectory(&full, &model.scales, true);
    let events_true = config.observable.extract(&full, &model.scales)?;
    let events_path = out_dir.join(format!("events/true_{index:03}.csv"));
    io::write_events_csv(&events_path, &events_true)?;
    files.push(file_entry(out_dir, &events_path, "events"));

    let mut diverged_pred = false;
    let mut events_pred = EventSeries::default();
    let mut pred_norm: Option<Trajectory> = None;
    if config.horizon > 0.0 {
        let sync = observed.slice_time(-config.sync_time, 0.0)?;
        let n_steps = (config.horizon / dt).round() as usize;
        let prediction = predict(&model, &sync, n_steps, config.stochastic, fan_out(seed, 4))?;
        diverged_pred = prediction.diverged;
        if let Some(pred) = prediction.trajectory {
            let pred_path = out_dir.join(format!("trajectories/pred_{index:03}.dctr"));
            ensure_parent(&pred_path)?;
            io::write_trajectory(&pred_path, &pred)?;
            files.push(file_entry(out_dir, &pred_path, "trajectory"));

            let normed = scale_trajectory(&pred, &model.scales, true);
            events_pred = config.observable.extract(&pred, &model.scales)?;
            let pe_path = out_dir.join(format!("events/pred_{index:03}.csv"));
            io::write_events_csv(&pe_path, &events_pred)?;
            files.push(file_entry(out_dir, &pe_path, "events"));
            pred_norm = Some(normed);
        } else {
            diverged_pred = true;
        }
    }

    let state_at = |traj: &Trajectory, t: f64| -> Option<Vec<f64>> {
        traj.index_at(t).ok().map(|i| traj.state(i).to_vec())
    };
    let snapshots_true: Vec<Option<Vec<f64>>> =
        config.snapshot_times.iter().map(|&t| state_at(&full_norm, t)).collect();
    let snapshots_pred: Vec<Option<Vec<f64>>> = config
        .snapshot_times
        .iter()
        .map(|&t| pred_norm.as_ref().and_then(|p| state_at(p, t)))
        .collect();

    Ok(MemberOutcome {
        index,
        diverged_true,
        diverged_pred,
        events_true,
        events_pred,
        snapshots_true,
        snapshots_pred,
        files,
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub(crate) fn file_entry(root: &Path, path: &Path, category: &str) -> ManifestFile {
    let rel = path.strip_prefix(root).unwrap_or(path);
    ManifestFile { path: rel.to_string_lossy().to_string(), category: category.to_string() }
}

/// Run `f` inside a dedicated rayon pool when a worker count is pinned;
/// otherwise use the global pool.
pub fn install_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool")
            .install(f)
    }
}

/// Paths of artifacts in `manifest` matching `category`, verified to exist.
pub fn emit_plot_data(manifest_path: &Path, category: &str, root: &Path) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::load(manifest_path)?;
    let matches: Vec<&ManifestFile> =
        manifest.files.iter().filter(|f| f.category == category).collect();
    if matches.is_empty() {
        return Err(Error::MissingArtifact(format!(
            "manifest lists no '{category}' artifacts"
        )));
    }
    let mut out = Vec::with_capacity(matches.len());
    for f in matches {
        let path = root.join(&f.path);
        if !path.exists() {
            return Err(Error::MissingArtifact(f.path.clone()));
        }
        out.push(path);
    }
    Ok(out)
}
