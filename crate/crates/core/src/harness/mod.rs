//! Experiment orchestration: configs, seeded parallel ensembles, stationary
//! sweeps, objective comparison, and plot-data emission. The `driftcast`
//! binary is a thin CLI over this module.

mod compare;
mod config;
mod ensemble;
mod sweep;

pub use compare::{compare_objectives, CompareOutcome, CompareReport};
pub use config::{ExperimentConfig, KnowledgeSpec, ObservableSpec};
pub use ensemble::{
    emit_plot_data, install_pool, run_ensemble_experiment, EnsembleOutcome, ManifestFile,
    RunManifest, Timings,
};
pub use sweep::{stationary_sweep, SweepDirection, SweepObservable, SweepRow, SweepSpec};

#[cfg(test)]
mod tests;
