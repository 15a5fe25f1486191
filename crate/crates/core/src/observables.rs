//! Scalar event extraction from trajectories: RMS normalization, local
//! maxima, and Poincare-style section crossings.

use serde::{Deserialize, Serialize};

use crate::dynamics::{RmsScales, Trajectory};
use crate::error::{Error, Result};

/// A time-stamped scalar event sequence (maxima values, section map points).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl EventSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::input("event times and values must have equal length".to_string()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("event times must be strictly increasing".to_string()));
        }
        Ok(Self { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Values of events with time in `[a, b)`.
    pub fn values_in(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        let lo = self.times.partition_point(|&t| t < a);
        let hi = self.times.partition_point(|&t| t < b);
        self.values[lo..hi].iter().copied()
    }
}

/// Divide every component of `trajectory` by its root-mean-square over the
/// reference window `[a, b]`, returning the normalized trajectory and the
/// scales needed to invert the mapping.
pub fn rms_normalize(trajectory: &Trajectory, window: (f64, f64)) -> Result<(Trajectory, RmsScales)> {
    let ia = trajectory.index_at(window.0)?;
    let ib = trajectory.index_at(window.1)?;
    if ib < ia {
        return Err(Error::input("empty RMS reference window".to_string()));
    }
    let count = (ib - ia + 1) as f64;
    let mut scales = vec![0.0; trajectory.dim()];
    for (c, scale) in scales.iter_mut().enumerate() {
        let ss: f64 = (ia..=ib).map(|i| trajectory.data[[i, c]].powi(2)).sum();
        let rms = (ss / count).sqrt();
        if rms == 0.0 {
            return Err(Error::input(format!(
                "component {c} has zero RMS over the reference window"
            )));
        }
        *scale = rms;
    }
    let scales = RmsScales(scales);
    Ok((scale_trajectory(trajectory, &scales, true), scales))
}

/// Apply (`forward = true`) or invert the per-component scaling.
pub fn scale_trajectory(trajectory: &Trajectory, scales: &RmsScales, forward: bool) -> Trajectory {
    let mut data = trajectory.data.clone();
    for (c, &s) in scales.0.iter().enumerate() {
        let f = if forward { 1.0 / s } else { s };
        data.column_mut(c).mapv_inplace(|v| v * f);
    }
    Trajectory {
        t0: trajectory.t0,
        dt: trajectory.dt,
        data,
        seed: trajectory.seed,
        diverged: trajectory.diverged,
    }
}

/// Interior local maxima of a uniformly sampled scalar series.
///
/// Sample i is an event iff `s[i-1] < s[i] >= s[i+1]`, so plateau ties break
/// toward the earlier sample. Event time is the grid time of sample i.
pub fn local_maxima(series: &[f64], t0: f64, dt: f64) -> EventSeries {
    let mut times = Vec::new();
    let mut values = Vec::new();
    for i in 1..series.len().saturating_sub(1) {
        if series[i - 1] < series[i] && series[i] >= series[i + 1] {
            times.push(t0 + i as f64 * dt);
            values.push(series[i]);
        }
    }
    EventSeries { times, values }
}

/// Requested sign-change direction of the section function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingDirection {
    Up,
    Down,
    Both,
}

/// Scalar section function evaluable on a state vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SectionFunction {
    /// g(v) = v[coord]
    Coordinate { coord: usize },
    /// g(v) = x*y - beta*z, the rate of change of the Lorenz z coordinate;
    /// its zeros mark local z extrema.
    LorenzZdot { beta: f64 },
}

impl SectionFunction {
    pub fn eval(&self, state: &[f64]) -> f64 {
        match *self {
            SectionFunction::Coordinate { coord } => state[coord],
            SectionFunction::LorenzZdot { beta } => state[0] * state[1] - beta * state[2],
        }
    }
}

/// Surface-of-section specification: where to cut, which direction counts,
/// and which coordinate to record at the crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub function: SectionFunction,
    pub direction: CrossingDirection,
    /// Coordinate whose linearly interpolated value becomes the event value.
    pub value_coord: usize,
}

/// Events where the section function changes sign between consecutive
/// samples in the requested direction. Event time and value are linear
/// interpolations between the bracketing samples.
pub fn section_crossings(trajectory: &Trajectory, section: &SectionSpec) -> Result<EventSeries> {
    if section.value_coord >= trajectory.dim() {
        return Err(Error::input(format!(
            "section value coordinate {} out of range for dimension {}",
            section.value_coord,
            trajectory.dim()
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    let n = trajectory.len();
    if n < 2 {
        return Ok(EventSeries::default());
    }
    let mut g_prev = section.function.eval(trajectory.state(0).as_slice().unwrap());
    for i in 1..n {
        let g_cur = section.function.eval(trajectory.state(i).as_slice().unwrap());
        // a sample exactly on the surface counts with the arriving pair only,
        // so -,0,+ yields one crossing and 0,+ after a touch yields none
        let up = g_prev < 0.0 && g_cur >= 0.0;
        let down = g_prev > 0.0 && g_cur <= 0.0;
        let hit = match section.direction {
            CrossingDirection::Up => up,
            CrossingDirection::Down => down,
            CrossingDirection::Both => up || down,
        };
        if hit {
            let theta = g_prev / (g_prev - g_cur);
            let t = trajectory.time(i - 1) + theta * trajectory.dt;
            let a = trajectory.data[[i - 1, section.value_coord]];
            let b = trajectory.data[[i, section.value_coord]];
            times.push(t);
            values.push(a + theta * (b - a));
        }
        g_prev = g_cur;
    }
    Ok(EventSeries { times, values })
}

/// Every sample of one coordinate as an event series; used when the scored
/// observable is the raw state distribution rather than a derived event.
pub fn coordinate_series(trajectory: &Trajectory, coord: usize) -> Result<EventSeries> {
    if coord >= trajectory.dim() {
        return Err(Error::input(format!(
            "coordinate {coord} out of range for dimension {}",
            trajectory.dim()
        )));
    }
    let times = (0..trajectory.len()).map(|i| trajectory.time(i)).collect();
    Ok(EventSeries { times, values: trajectory.component(coord) })
}
