//! Experiment configuration: one JSON document describes the system, the
//! data windows, the reservoir setup, the scored observable, and the seeds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{SystemSpec, Trajectory};
use crate::error::{Error, Result};
use crate::observables::{coordinate_series, local_maxima, section_crossings, EventSeries, SectionSpec};
use crate::reservoir::{HyperParams, KnowledgeModel};
use crate::rng::fnv1a;

/// Which scalar observable the climate metrics are computed on. Extraction
/// always happens in normalized coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableSpec {
    /// Local maxima of one component.
    Maxima { coord: usize },
    /// Surface-of-section crossings.
    Section(SectionSpec),
    /// Every sample of one component.
    Coordinate { coord: usize },
}

impl ObservableSpec {
    /// Extract events from a raw trajectory, reporting values in normalized
    /// units. Section functions are evaluated on the raw coordinates (the
    /// surface is defined there); only the recorded value is rescaled.
    pub fn extract(&self, raw: &Trajectory, scales: &crate::dynamics::RmsScales) -> Result<EventSeries> {
        let scale_of = |coord: usize| -> Result<f64> {
            scales.0.get(coord).copied().ok_or_else(|| {
                Error::config(format!(
                    "observable coordinate {coord} out of range for dimension {}",
                    raw.dim()
                ))
            })
        };
        match self {
            ObservableSpec::Maxima { coord } => {
                let s = scale_of(*coord)?;
                let mut ev = local_maxima(&raw.component(*coord), raw.t0, raw.dt);
                ev.values.iter_mut().for_each(|v| *v /= s);
                Ok(ev)
            }
            ObservableSpec::Section(spec) => {
                let s = scale_of(spec.value_coord)?;
                let mut ev = section_crossings(raw, spec)?;
                ev.values.iter_mut().for_each(|v| *v /= s);
                Ok(ev)
            }
            ObservableSpec::Coordinate { coord } => {
                let s = scale_of(*coord)?;
                let mut ev = coordinate_series(raw, *coord)?;
                ev.values.iter_mut().for_each(|v| *v /= s);
                Ok(ev)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ObservableSpec::Maxima { coord } => format!("maxima_v{}", coord + 1),
            ObservableSpec::Section(spec) => format!("section_v{}", spec.value_coord + 1),
            ObservableSpec::Coordinate { coord } => format!("v{}", coord + 1),
        }
    }
}

/// Parameters of the (deliberately wrong) physics model used by the hybrid
/// architecture; it shares the true system's ramp and step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KnowledgeSpec {
    pub sigma: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: SystemSpec,
    pub ensemble_size: usize,
    /// Pre-data integration discarded as transient ("far past" start).
    #[serde(default = "default_spin_up")]
    pub spin_up: f64,
    /// Observed data covers [-observed_span, 0].
    pub observed_span: f64,
    /// Prediction window (0, horizon].
    pub horizon: f64,
    pub hyperparams: HyperParams,
    #[serde(default)]
    pub knowledge: Option<KnowledgeSpec>,
    pub observable: ObservableSpec,
    /// Γ window δt; defaults to 1 time unit for the flows, 250 for the map.
    #[serde(default)]
    pub gamma_window: Option<f64>,
    /// Time range scored by Γ; defaults to (0, horizon).
    #[serde(default)]
    pub gamma_range: Option<(f64, f64)>,
    /// Times at which snapshot states and observable CDFs are emitted.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_threshold")]
    pub valid_threshold: f64,
    /// Synchronization segment length before each prediction.
    #[serde(default = "default_sync_time")]
    pub sync_time: f64,
    /// Residual-resampling stochastic prediction.
    #[serde(default = "default_stochastic")]
    pub stochastic: bool,
    pub master_seed: u64,
    /// Worker threads for ensemble members; 0 means one per CPU.
    #[serde(default)]
    pub workers: usize,
}

fn default_spin_up() -> f64 {
    200.0
}

fn default_threshold() -> f64 {
    0.4
}

fn default_sync_time() -> f64 {
    1.0
}

fn default_stochastic() -> bool {
    true
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.hyperparams.validate()?;
        if self.ensemble_size == 0 {
            return Err(Error::config("ensemble_size must be >= 1".to_string()));
        }
        if self.horizon < 0.0 {
            return Err(Error::config("horizon must be >= 0".to_string()));
        }
        if self.spin_up < 0.0 {
            return Err(Error::config("spin_up must be >= 0".to_string()));
        }
        if self.observed_span < self.hyperparams.train_length {
            return Err(Error::config(format!(
                "observed_span {} is shorter than train_length {}",
                self.observed_span, self.hyperparams.train_length
            )));
        }
        if self.sync_time <= 0.0 || self.sync_time > self.observed_span {
            return Err(Error::config("sync_time must lie within the observed span".to_string()));
        }
        let native = self.system.native_dt();
        if ((self.hyperparams.rc_dt - native) / native).abs() > 1e-9 {
            return Err(Error::config(format!(
                "rc_dt {} must match the system's native step {}",
                self.hyperparams.rc_dt, native
            )));
        }
        if self.knowledge.is_some() {
            if !matches!(self.system, SystemSpec::Lorenz(_)) {
                return Err(Error::config(
                    "knowledge model is only defined for the Lorenz system".to_string(),
                ));
            }
            if self.hyperparams.architecture != crate::reservoir::Architecture::Hybrid {
                return Err(Error::config(
                    "knowledge model requires the hybrid architecture".to_string(),
                ));
            }
        }
        if let Some((a, b)) = self.gamma_range {
            if !(a < b) {
                return Err(Error::config("gamma_range must be increasing".to_string()));
            }
        }
        Ok(())
    }

    /// Γ window with the per-system default applied.
    pub fn effective_gamma_window(&self) -> f64 {
        self.gamma_window.unwrap_or(match self.system {
            SystemSpec::Ikeda(_) => 250.0,
            _ => 1.0,
        })
    }

    pub fn effective_gamma_range(&self) -> (f64, f64) {
        self.gamma_range.unwrap_or((0.0, self.horizon))
    }

    /// Knowledge model assembled from the spec plus the system's own ramp.
    pub fn knowledge_model(&self) -> Option<KnowledgeModel> {
        self.knowledge.map(|ks| KnowledgeModel {
            sigma: ks.sigma,
            beta: ks.beta,
            rho: *self.system.ramp(),
            dt: self.system.native_dt(),
        })
    }

    /// Stable fingerprint of the configuration document.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a(text.as_bytes()))
    }
}
