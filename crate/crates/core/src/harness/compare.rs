//! Objective comparison: select hyperparameters twice from the same grid
//! evaluations (combined two-horizon score vs valid-time-only), run the full
//! ensemble experiment with each winner, and emit both Γ(t) series side by
//! side.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::ensemble::{file_entry, run_ensemble_experiment, ManifestFile, RunManifest, Timings};
use crate::dynamics::{random_initial_state, simulate};
use crate::error::{Error, Result};
use crate::hpo::{grid_search, select_by_valid_time, CandidateScore, EvalSettings, GridSpec};
use crate::io::write_hpo_csv;
use crate::metrics::ClimateErrorSeries;
use crate::rng::{fan_out, fnv1a};

/// Result of the two-objective comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub combined_winner: CandidateScore,
    pub valid_time_winner: CandidateScore,
    /// True when both objectives picked the same candidate.
    pub identical_winners: bool,
    pub combined_manifest: String,
    pub valid_time_manifest: String,
}

pub struct CompareOutcome {
    pub report: CompareReport,
    pub gamma_combined: Option<ClimateErrorSeries>,
    pub gamma_valid_time: Option<ClimateErrorSeries>,
    pub manifest: RunManifest,
}

/// Run the comparison experiment under `out_dir`.
pub fn compare_objectives(
    config: &ExperimentConfig,
    grid: &GridSpec,
    out_dir: &Path,
) -> Result<CompareOutcome> {
    config.validate()?;
    grid.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let started = std::time::Instant::now();

    // one observed trajectory drives the hyperparameter search
    let hpo_seed = fan_out(config.master_seed, 0xCAFE_0001);
    let system = &config.system;
    let span = grid.t3 + config.sync_time;
    let ic = random_initial_state(system, fan_out(hpo_seed, 1));
    let data = simulate(system, &ic, -(config.spin_up + span), 0.0, fan_out(hpo_seed, 2))?;
    let data = data.slice_time(-span, 0.0)?;

    let eval = EvalSettings {
        m1: grid.m1,
        m2: grid.m2,
        sync_time: config.sync_time,
        valid_threshold: config.valid_threshold,
        stochastic: config.stochastic,
    };
    let scores = grid_search(&grid.clone(), &config.hyperparams, &data, &eval, config.knowledge_model())?;
    let scores_path = out_dir.join("hpo_scores.csv");
    write_hpo_csv(&scores_path, &scores)?;

    let combined = scores[0].clone(); // grid_search sorts best-first
    let vt_idx = select_by_valid_time(&scores)?;
    let valid_time_winner = scores[vt_idx].clone();
    let identical = combined.index == valid_time_winner.index;

    let run_with = |hp: &crate::reservoir::HyperParams, sub: &str| -> Result<_> {
        let mut sub_config = config.clone();
        sub_config.hyperparams = hp.clone();
        sub_config.name = format!("{}_{sub}", config.name);
        run_ensemble_experiment(&sub_config, &out_dir.join(sub))
    };
    let combined_run = run_with(&combined.hyperparams, "combined")?;
    let vt_run = if identical {
        None
    } else {
        Some(run_with(&valid_time_winner.hyperparams, "valid_time")?)
    };
    let (gamma_vt, vt_manifest_path) = match &vt_run {
        Some(run) => (run.gamma.clone(), "valid_time/manifest.json".to_string()),
        None => (combined_run.gamma.clone(), "combined/manifest.json".to_string()),
    };

    // side-by-side Γ table over the shared window grid
    let mut files = vec![ManifestFile {
        path: "hpo_scores.csv".to_string(),
        category: "hpo".to_string(),
    }];
    if let (Some(gc), Some(gv)) = (&combined_run.gamma, &gamma_vt) {
        let path = out_dir.join("compare_gamma.csv");
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "t,gamma_combined,gamma_valid_time")?;
        for (t, g) in gc.centers.iter().zip(&gc.gamma) {
            if let Some(pos) = gv.centers.iter().position(|c| (c - t).abs() < 1e-9) {
                writeln!(w, "{t},{g},{}", gv.gamma[pos])?;
            }
        }
        w.flush()?;
        files.push(file_entry(out_dir, &path, "gamma"));
    }

    let report = CompareReport {
        combined_winner: combined,
        valid_time_winner,
        identical_winners: identical,
        combined_manifest: "combined/manifest.json".to_string(),
        valid_time_manifest: vt_manifest_path,
    };
    let report_path = out_dir.join("compare_report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    files.push(ManifestFile { path: "compare_report.json".to_string(), category: "report".to_string() });

    let mut manifest = RunManifest {
        kind: "compare".to_string(),
        name: config.name.clone(),
        config_hash: format!(
            "{:016x}",
            fnv1a(format!("{}|{}", config.hash(), serde_json::to_string(grid)?).as_bytes())
        ),
        master_seed: config.master_seed,
        member_seeds: Vec::new(),
        ensemble_size: config.ensemble_size,
        diverged_pred_members: Vec::new(),
        diverged_true_members: Vec::new(),
        member_errors: Vec::new(),
        used_members: 0,
        files,
        skipped: Vec::new(),
        manifest_hash: String::new(),
        timings: Timings::default(),
    };
    manifest.seal();
    manifest.timings.total_seconds = started.elapsed().as_secs_f64();
    manifest.save(&out_dir.join("manifest.json"))?;

    if combined_run.gamma.is_none() {
        return Err(Error::numeric(
            "comparison produced no Γ series for the combined winner".to_string(),
        ));
    }
    Ok(CompareOutcome {
        report,
        gamma_combined: combined_run.gamma,
        gamma_valid_time: gamma_vt,
        manifest,
    })
}
