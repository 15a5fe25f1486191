//! Climate and forecast-quality metrics: empirical CDFs, the 1-D Wasserstein
//! distance, the sliding-window ensemble climate error Γ(t), valid time, and
//! a Benettin largest-Lyapunov-exponent estimator.

use crate::dynamics::{frozen_stepper, random_initial_state, SystemSpec, Trajectory};
use crate::error::{Error, Result};
use crate::observables::EventSeries;
use crate::rng::{stream_rng, Stream};
use rand::Rng;

/// Right-continuous empirical CDF with jumps of 1/n at each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::input("empirical CDF needs at least one sample".to_string()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("empirical CDF samples must be finite".to_string()));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { sorted: samples })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        *self.sorted.last().unwrap()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }
}

/// Exact integral of |F_a - F_b| over `[lo, hi]`, computed from the merged
/// step functions.
pub fn wasserstein1(a: &EmpiricalCdf, b: &EmpiricalCdf, bounds: (f64, f64)) -> Result<f64> {
    let (lo, hi) = bounds;
    if !(lo < hi) {
        return Err(Error::input(format!("wasserstein bounds must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    let na = a.sorted.len() as f64;
    let nb = b.sorted.len() as f64;
    let mut ia = a.sorted.partition_point(|&v| v <= lo);
    let mut ib = b.sorted.partition_point(|&v| v <= lo);
    let mut x = lo;
    let mut total = 0.0;
    loop {
        let next_a = a.sorted.get(ia).copied().unwrap_or(f64::INFINITY);
        let next_b = b.sorted.get(ib).copied().unwrap_or(f64::INFINITY);
        let next = next_a.min(next_b).min(hi);
        let fa = ia as f64 / na;
        let fb = ib as f64 / nb;
        total += (fa - fb).abs() * (next - x);
        if next >= hi {
            break;
        }
        x = next;
        while a.sorted.get(ia).is_some_and(|&v| v <= x) {
            ia += 1;
        }
        while b.sorted.get(ib).is_some_and(|&v| v <= x) {
            ib += 1;
        }
    }
    Ok(total)
}

/// Γ(t) samples over the sliding windows that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ClimateErrorSeries {
    /// Center time of each window with a defined Γ value.
    pub centers: Vec<f64>,
    /// Γ value per center, always in [0, 2].
    pub gamma: Vec<f64>,
    /// Centers of windows where either ensemble had no samples (gaps).
    pub skipped: Vec<f64>,
    /// Window length δt.
    pub window: f64,
    pub observable: String,
}

impl ClimateErrorSeries {
    /// Mean Γ over windows whose center lies in `[a, b]`.
    pub fn mean_over(&self, a: f64, b: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .centers
            .iter()
            .zip(&self.gamma)
            .filter(|(c, _)| **c >= a && **c <= b)
            .map(|(_, g)| *g)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// Γ for a single window: `(2/Δx) ∫ |F_true - F_pred| dx` over `bounds`,
/// where `Δx` is the bounds width.
pub fn gamma_window(true_samples: &[f64], pred_samples: &[f64], bounds: (f64, f64)) -> Result<f64> {
    let fa = EmpiricalCdf::new(true_samples.to_vec())?;
    let fp = EmpiricalCdf::new(pred_samples.to_vec())?;
    let width = bounds.1 - bounds.0;
    Ok(2.0 / width * wasserstein1(&fa, &fp, bounds)?)
}

/// Γ(t) over windows `[t, t + δt)` tiling `t_range`, pooling each ensemble's
/// observable samples per window.
///
/// `bounds` defaults to the min/max of the pooled true samples over the whole
/// range; both the integration limits and the Δx scaling use it, which pins
/// Γ to [0, 2]. Windows where either ensemble is empty are reported as gaps
/// rather than zeros.
pub fn gamma_series(
    true_events: &[EventSeries],
    pred_events: &[EventSeries],
    t_range: (f64, f64),
    window: f64,
    bounds: Option<(f64, f64)>,
    observable: &str,
) -> Result<ClimateErrorSeries> {
    if !(window > 0.0) {
        return Err(Error::input(format!("gamma window must be positive, got {window}")));
    }
    if !(t_range.0 < t_range.1) {
        return Err(Error::input("gamma time range must be non-empty".to_string()));
    }
    let bounds = match bounds {
        Some(b) if b.0 < b.1 => b,
        Some(b) => {
            return Err(Error::input(format!("gamma bounds must satisfy lo < hi, got {b:?}")));
        }
        None => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for ev in true_events {
                for v in ev.values_in(t_range.0, t_range.1) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if !(lo < hi) {
                return Err(Error::input(
                    "cannot infer gamma bounds: true ensemble has degenerate range".to_string(),
                ));
            }
            (lo, hi)
        }
    };

    let n_windows = ((t_range.1 - t_range.0) / window).floor() as usize;
    let mut centers = Vec::new();
    let mut gamma = Vec::new();
    let mut skipped = Vec::new();
    for j in 0..n_windows {
        let a = t_range.0 + j as f64 * window;
        let b = a + window;
        let center = 0.5 * (a + b);
        let t_pool: Vec<f64> = true_events.iter().flat_map(|e| e.values_in(a, b)).collect();
        let p_pool: Vec<f64> = pred_events.iter().flat_map(|e| e.values_in(a, b)).collect();
        if t_pool.is_empty() || p_pool.is_empty() {
            skipped.push(center);
            continue;
        }
        centers.push(center);
        gamma.push(gamma_window(&t_pool, &p_pool, bounds)?);
    }
    Ok(ClimateErrorSeries {
        centers,
        gamma,
        skipped,
        window,
        observable: observable.to_string(),
    })
}

/// Valid-time report: where the normalized prediction error first crossed
/// the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidTimeReport {
    /// Time from prediction start to the first threshold crossing, or the
    /// full horizon when the error never crosses.
    pub valid_time: f64,
    pub threshold: f64,
    /// Normalized error at each compared sample.
    pub error_curve: Vec<f64>,
    /// Duration of the compared overlap.
    pub horizon: f64,
}

/// Normalized Euclidean error `|v_pred - v_true| / rms(|v_true|)` over the
/// common samples of two aligned trajectories, and the first time it exceeds
/// `threshold`.
pub fn valid_time(predicted: &Trajectory, truth: &Trajectory, threshold: f64) -> Result<ValidTimeReport> {
    if predicted.dim() != truth.dim() {
        return Err(Error::input(format!(
            "dimension mismatch: predicted {} vs truth {}",
            predicted.dim(),
            truth.dim()
        )));
    }
    let dt = truth.dt;
    if ((predicted.dt - dt) / dt).abs() > 1e-9 {
        return Err(Error::input("trajectories must share the sampling step".to_string()));
    }
    // align on the truth grid
    let offset = (predicted.t0 - truth.t0) / dt;
    if (offset - offset.round()).abs() > 1e-6 {
        return Err(Error::input("trajectories are not sampled on a common grid".to_string()));
    }
    // truth index i pairs with predicted index i - offset
    let offset = offset.round() as i64;
    let i_lo = offset.max(0) as usize;
    let i_hi = truth.len().min((predicted.len() as i64 + offset).max(0) as usize);
    if i_lo >= i_hi {
        return Err(Error::input("trajectories do not overlap in time".to_string()));
    }

    let mut rms = 0.0;
    for i in i_lo..i_hi {
        let row = truth.state(i);
        rms += row.iter().map(|v| v * v).sum::<f64>();
    }
    rms = (rms / (i_hi - i_lo) as f64).sqrt();
    if rms == 0.0 {
        return Err(Error::input("truth trajectory has zero RMS over the overlap".to_string()));
    }

    let mut error_curve = Vec::with_capacity(i_hi - i_lo);
    let mut crossing: Option<usize> = None;
    for i in i_lo..i_hi {
        let p = predicted.state((i as i64 - offset) as usize);
        let t = truth.state(i);
        let e = p
            .iter()
            .zip(t.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / rms;
        if crossing.is_none() && e > threshold {
            crossing = Some(error_curve.len());
        }
        error_curve.push(e);
    }
    let horizon = (error_curve.len() - 1) as f64 * dt;
    let valid_time = match crossing {
        Some(k) => k as f64 * dt,
        None => horizon,
    };
    Ok(ValidTimeReport { valid_time, threshold, error_curve, horizon })
}

/// One state per non-diverged ensemble member at time `t`, plus the count of
/// excluded (diverged) members.
pub fn snapshot_samples(ensemble: &[Trajectory], t: f64) -> Result<(Vec<Vec<f64>>, usize)> {
    let mut states = Vec::new();
    let mut excluded = 0;
    for member in ensemble {
        if member.diverged {
            excluded += 1;
            continue;
        }
        let i = member.index_at(t)?;
        states.push(member.state(i).to_vec());
    }
    Ok((states, excluded))
}

/// Settings for the Benettin two-trajectory Lyapunov estimate.
#[derive(Debug, Clone, Copy)]
pub struct LyapunovSettings {
    /// Total time span to average over (after spin-up).
    pub t_span: f64,
    /// Renormalize the shadow separation every this many time units.
    pub renorm_interval: f64,
    /// Initial and renormalized separation.
    pub delta0: f64,
    /// Fraction of the earliest stretch estimates to discard as transient.
    pub discard_frac: f64,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        Self { t_span: 1000.0, renorm_interval: 1.0, delta0: 1e-8, discard_frac: 0.1 }
    }
}

/// Benettin estimate of the largest Lyapunov exponent for an arbitrary
/// one-step map `step` with time step `dt`, starting from `x0` (assumed
/// already on the attractor).
pub fn largest_lyapunov_flow(
    mut step: impl FnMut(&mut [f64]),
    dt: f64,
    x0: &[f64],
    settings: &LyapunovSettings,
    seed: u64,
) -> Result<f64> {
    let dim = x0.len();
    let steps_per_interval = (settings.renorm_interval / dt).round().max(1.0) as usize;
    let intervals = (settings.t_span / (steps_per_interval as f64 * dt)).floor() as usize;
    if intervals < 10 {
        return Err(Error::input(format!(
            "lyapunov span too short: {} renormalization intervals",
            intervals
        )));
    }

    // seeded random offset direction
    let mut rng = stream_rng(seed, Stream::Simulate);
    let mut dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        dir[0] = 1.0;
    } else {
        dir.iter_mut().for_each(|v| *v /= norm);
    }

    let mut fiducial = x0.to_vec();
    let mut shadow: Vec<f64> = x0.iter().zip(&dir).map(|(x, d)| x + settings.delta0 * d).collect();

    let mut stretches = Vec::with_capacity(intervals);
    for _ in 0..intervals {
        for _ in 0..steps_per_interval {
            step(&mut fiducial);
            step(&mut shadow);
        }
        if fiducial.iter().chain(shadow.iter()).any(|v| !v.is_finite()) {
            return Err(Error::numeric("lyapunov shadow trajectory diverged".to_string()));
        }
        let d: f64 = fiducial
            .iter()
            .zip(&shadow)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if d == 0.0 {
            return Err(Error::numeric("lyapunov separation collapsed to zero".to_string()));
        }
        stretches.push((d / settings.delta0).ln() / (steps_per_interval as f64 * dt));
        // pull the shadow back to delta0 along the current offset
        let scale = settings.delta0 / d;
        for (s, f) in shadow.iter_mut().zip(&fiducial) {
            *s = f + (*s - f) * scale;
        }
    }
    let discard = ((stretches.len() as f64) * settings.discard_frac).floor() as usize;
    let kept = &stretches[discard..];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Largest Lyapunov exponent of a noiseless system at a frozen parameter.
///
/// Spins up from a seeded random initial condition (200 time units for the
/// flows, 5000 iterates for the map) before averaging log stretch rates over
/// `t_span` with the given renormalization interval.
pub fn largest_lyapunov(
    system: &SystemSpec,
    t_span: f64,
    renorm_interval: f64,
    seed: u64,
) -> Result<f64> {
    let mut step = frozen_stepper(system)?;
    let dt = system.native_dt();
    let spin_up_steps = match system {
        SystemSpec::Ikeda(_) => 5000,
        _ => (200.0 / dt).round() as usize,
    };
    let mut x0 = random_initial_state(system, seed);
    for _ in 0..spin_up_steps {
        step(&mut x0);
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("lyapunov spin-up diverged".to_string()));
    }
    let settings = LyapunovSettings { t_span, renorm_interval, ..Default::default() };
    largest_lyapunov_flow(step, dt, &x0, &settings, seed)
}
