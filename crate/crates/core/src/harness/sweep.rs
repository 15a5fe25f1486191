//! Stationary parameter sweeps: evolve the frozen system at each parameter
//! value past a transient, record an observable, and optionally carry the
//! final state to the next value (hysteresis continuation).

use serde::{Deserialize, Serialize};

use crate::dynamics::{random_initial_state, simulate, SystemSpec};
use crate::error::{Error, Result};
use crate::observables::{local_maxima, section_crossings, SectionSpec};
use crate::rng::fan_out;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepDirection {
    /// Continuation in listed order (ascending parameter values).
    Up,
    /// Continuation in listed order (descending parameter values).
    Down,
    /// Fresh initial condition per parameter value.
    Independent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepObservable {
    /// Diagonal of the bounding box of the recorded orbit (one sample per row).
    ExtentDiagonal,
    /// Local maxima of one coordinate.
    Maxima { coord: usize },
    /// Surface-of-section crossing values.
    Section(SectionSpec),
    /// Raw values of one coordinate, subsampled.
    Samples { coord: usize, every: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Base system; its ramp is replaced by each frozen parameter value.
    pub system: SystemSpec,
    pub values: Vec<f64>,
    pub direction: SweepDirection,
    /// Settling time per value before recording.
    pub transient: f64,
    /// Recording window per value.
    pub record: f64,
    pub observable: SweepObservable,
    /// Starting state for the first value (continuation) or all values
    /// (independent); random box draw when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    /// Keep the system's dynamical noise during the sweep.
    #[serde(default)]
    pub keep_noise: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub samples: Vec<f64>,
    pub diverged: bool,
}

/// Run the sweep and return one row per parameter value.
pub fn stationary_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.values.is_empty() {
        return Err(Error::config("sweep needs at least one parameter value".to_string()));
    }
    if !(spec.record > 0.0) {
        return Err(Error::config("sweep record window must be positive".to_string()));
    }
    if let Some(init) = &spec.initial {
        if init.len() != spec.system.dim() {
            return Err(Error::config(format!(
                "sweep initial state has dimension {}, system needs {}",
                init.len(),
                spec.system.dim()
            )));
        }
    }
    let continuation = spec.direction != SweepDirection::Independent;
    let mut carried: Option<Vec<f64>> = None;
    let mut rows = Vec::with_capacity(spec.values.len());

    for (idx, &value) in spec.values.iter().enumerate() {
        let system = spec.system.frozen_at(value, spec.keep_noise);
        let mut state = match (&carried, &spec.initial) {
            (Some(s), _) if continuation => s.clone(),
            (_, Some(init)) => init.clone(),
            _ => random_initial_state(&system, fan_out(spec.seed, 3 * idx as u64)),
        };
        let mut diverged = false;

        if spec.transient > 0.0 {
            let warm = simulate(&system, &state, 0.0, spec.transient, fan_out(spec.seed, 3 * idx as u64 + 1))?;
            diverged |= warm.diverged;
            state = warm.state(warm.len() - 1).to_vec();
        }

        let mut samples = Vec::new();
        if !diverged {
            let rec = simulate(&system, &state, 0.0, spec.record, fan_out(spec.seed, 3 * idx as u64 + 2))?;
            diverged |= rec.diverged;
            samples = match &spec.observable {
                SweepObservable::ExtentDiagonal => {
                    let mut diag = 0.0;
                    for c in 0..rec.dim() {
                        let col = rec.data.column(c);
                        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        diag += (hi - lo) * (hi - lo);
                    }
                    vec![diag.sqrt()]
                }
                SweepObservable::Maxima { coord } => {
                    if *coord >= rec.dim() {
                        return Err(Error::config(format!(
                            "sweep maxima coordinate {coord} out of range"
                        )));
                    }
                    local_maxima(&rec.component(*coord), rec.t0, rec.dt).values
                }
                SweepObservable::Section(section) => section_crossings(&rec, section)?.values,
                SweepObservable::Samples { coord, every } => {
                    if *coord >= rec.dim() {
                        return Err(Error::config(format!(
                            "sweep sample coordinate {coord} out of range"
                        )));
                    }
                    rec.component(*coord).into_iter().step_by((*every).max(1)).collect()
                }
            };
            if continuation {
                carried = Some(rec.state(rec.len() - 1).to_vec());
            }
        } else if continuation {
            // restart the continuation from a fresh draw after a blow-up
            carried = None;
        }

        rows.push(SweepRow { value, samples, diverged });
    }
    Ok(rows)
}
