//! Ground-truth trajectory generation for the three non-stationary test
//! systems: the Lorenz flow, the Ikeda map, and the Kuramoto-Sivashinsky
//! equation, each driven by an exponential parameter ramp and optional
//! bounded dynamical noise.

mod integrators;
mod ks;

pub use integrators::{ikeda_step, lorenz_rhs, rk4_noisy_step};
pub use ks::KsStepper;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Any state component beyond this magnitude flags the trajectory diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Native integration step of the Lorenz system.
pub const LORENZ_DT: f64 = 0.01;

/// Exponential drift of a system parameter: `base + amplitude * exp(t / timescale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSchedule {
    pub base: f64,
    pub amplitude: f64,
    pub timescale: f64,
}

impl RampSchedule {
    pub fn new(base: f64, amplitude: f64, timescale: f64) -> Result<Self> {
        if !(timescale > 0.0) {
            return Err(Error::config(format!(
                "ramp timescale must be positive, got {timescale}"
            )));
        }
        Ok(Self { base, amplitude, timescale })
    }

    /// A schedule frozen at `value` for all t.
    pub fn constant(value: f64) -> Self {
        Self { base: value, amplitude: 0.0, timescale: 1.0 }
    }

    /// Parameter value at time `t`. Overflow for enormous `t` yields +/-inf,
    /// which downstream divergence checks reject.
    pub fn value(&self, t: f64) -> f64 {
        self.base + self.amplitude * (t / self.timescale).exp()
    }

    pub fn is_frozen(&self) -> bool {
        self.amplitude == 0.0
    }
}

/// Lorenz '63 with a ramped rho and per-component uniform dynamical noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub beta: f64,
    pub rho: RampSchedule,
    /// Half-width of the uniform per-step state increment each component
    /// receives, applied as a forcing held constant across the RK4 stages
    /// (the same per-step convention the map and the PDE use).
    pub noise_bound: f64,
}

/// Ikeda map with a ramped eta and additive uniform noise on both variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkedaParams {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub eta: RampSchedule,
    pub noise_bound: f64,
}

/// Kuramoto-Sivashinsky on [0, 2pi) with a ramped fourth-order coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsParams {
    pub grid_points: usize,
    pub kappa: RampSchedule,
    /// Half-width of the uniform noise added per grid point after each step.
    pub noise_bound: f64,
    pub dt: f64,
}

/// One of the three supported systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    Lorenz(LorenzParams),
    Ikeda(IkedaParams),
    Ks(KsParams),
}

impl SystemSpec {
    pub fn validate(&self) -> Result<()> {
        let noise = match self {
            SystemSpec::Lorenz(p) => p.noise_bound,
            SystemSpec::Ikeda(p) => p.noise_bound,
            SystemSpec::Ks(p) => {
                if !p.grid_points.is_power_of_two() || p.grid_points < 8 {
                    return Err(Error::config(format!(
                        "KS grid_points must be a power of two >= 8, got {}",
                        p.grid_points
                    )));
                }
                if !(p.dt > 0.0) {
                    return Err(Error::config(format!("KS dt must be positive, got {}", p.dt)));
                }
                p.noise_bound
            }
        };
        if noise < 0.0 {
            return Err(Error::config(format!("noise_bound must be >= 0, got {noise}")));
        }
        if !(self.ramp().timescale > 0.0) {
            return Err(Error::config("ramp timescale must be positive".to_string()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::Lorenz(_) => 3,
            SystemSpec::Ikeda(_) => 2,
            SystemSpec::Ks(p) => p.grid_points,
        }
    }

    /// Native sampling step: fixed for the flow systems, 1 per iterate for the map.
    pub fn native_dt(&self) -> f64 {
        match self {
            SystemSpec::Lorenz(_) => LORENZ_DT,
            SystemSpec::Ikeda(_) => 1.0,
            SystemSpec::Ks(p) => p.dt,
        }
    }

    pub fn ramp(&self) -> &RampSchedule {
        match self {
            SystemSpec::Lorenz(p) => &p.rho,
            SystemSpec::Ikeda(p) => &p.eta,
            SystemSpec::Ks(p) => &p.kappa,
        }
    }

    /// Copy of this system with the ramped parameter frozen at `value` and,
    /// optionally, noise removed. Used by stationary sweeps and Lyapunov runs.
    pub fn frozen_at(&self, value: f64, keep_noise: bool) -> SystemSpec {
        let mut out = *self;
        match &mut out {
            SystemSpec::Lorenz(p) => {
                p.rho = RampSchedule::constant(value);
                if !keep_noise {
                    p.noise_bound = 0.0;
                }
            }
            SystemSpec::Ikeda(p) => {
                p.eta = RampSchedule::constant(value);
                if !keep_noise {
                    p.noise_bound = 0.0;
                }
            }
            SystemSpec::Ks(p) => {
                p.kappa = RampSchedule::constant(value);
                if !keep_noise {
                    p.noise_bound = 0.0;
                }
            }
        }
        out
    }
}

/// Per-component RMS scales produced by normalization; see
/// [`crate::observables::rms_normalize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsScales(pub Vec<f64>);

/// A uniformly sampled trajectory: row i is the state at `t0 + i * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub data: Array2<f64>,
    /// Seed that produced this trajectory (provenance; 0 for derived data).
    pub seed: u64,
    /// True when integration hit the divergence limit and was truncated.
    pub diverged: bool,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, data: Array2<f64>, seed: u64) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::input("trajectory must contain at least one state".to_string()));
        }
        Ok(Self { t0, dt, data, seed, diverged: false })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn state(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    /// Index of the sample at time `t`, requiring `t` to sit on the grid
    /// within a relative tolerance.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        let x = (t - self.t0) / self.dt;
        let i = x.round();
        if (x - i).abs() > 1e-6 {
            return Err(Error::input(format!(
                "time {t} is not on the sampling grid (t0={}, dt={})",
                self.t0, self.dt
            )));
        }
        if i < 0.0 || i as usize >= self.len() {
            return Err(Error::input(format!(
                "time {t} outside trajectory span [{}, {}]",
                self.t0,
                self.end_time()
            )));
        }
        Ok(i as usize)
    }

    /// Copy of the sub-trajectory covering `[a, b]` (grid-aligned, inclusive).
    pub fn slice_time(&self, a: f64, b: f64) -> Result<Trajectory> {
        let ia = self.index_at(a)?;
        let ib = self.index_at(b)?;
        if ib < ia {
            return Err(Error::input(format!("empty time slice [{a}, {b}]")));
        }
        Ok(Trajectory {
            t0: self.time(ia),
            dt: self.dt,
            data: self.data.slice(ndarray::s![ia..=ib, ..]).to_owned(),
            seed: self.seed,
            diverged: false,
        })
    }

    /// Scalar series of one coordinate.
    pub fn component(&self, coord: usize) -> Vec<f64> {
        self.data.column(coord).to_vec()
    }
}

/// Uniform draw from the per-system initial-condition box.
///
/// Boxes: Lorenz [-10,10]^3, Ikeda [-1,1]^2, KS [-0.5,0.5] per grid point.
/// Any box inside the basin works; spin-up discards the transient.
pub fn random_initial_state(system: &SystemSpec, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::InitialState);
    let half = match system {
        SystemSpec::Lorenz(_) => 10.0,
        SystemSpec::Ikeda(_) => 1.0,
        SystemSpec::Ks(_) => 0.5,
    };
    (0..system.dim()).map(|_| rng.random_range(-half..half)).collect()
}

/// Integrate `system` from `initial_state` over `[t_start, t_end]` at the
/// native step. All randomness derives from `seed`; rerunning with the same
/// arguments reproduces the trajectory bit for bit. On divergence the
/// trajectory is truncated to the finite prefix and flagged.
pub fn simulate(
    system: &SystemSpec,
    initial_state: &[f64],
    t_start: f64,
    t_end: f64,
    seed: u64,
) -> Result<Trajectory> {
    system.validate()?;
    if !(t_start < t_end) {
        return Err(Error::input(format!("need t_start < t_end, got [{t_start}, {t_end}]")));
    }
    if initial_state.len() != system.dim() {
        return Err(Error::input(format!(
            "initial state dimension {} does not match system dimension {}",
            initial_state.len(),
            system.dim()
        )));
    }
    let dt = system.native_dt();
    let n_steps = ((t_end - t_start) / dt).round() as usize;
    let dim = system.dim();

    let mut rng = stream_rng(seed, Stream::Simulate);
    let mut rows: Vec<f64> = Vec::with_capacity((n_steps + 1) * dim);
    rows.extend_from_slice(initial_state);

    let mut state = initial_state.to_vec();
    let mut diverged = false;

    match system {
        SystemSpec::Lorenz(p) => {
            let mut noise = vec![0.0; 3];
            let mut next = vec![0.0; 3];
            // noise_bound is a per-step state increment; the equivalent
            // step-constant forcing is that increment divided by dt
            let forcing = p.noise_bound / dt;
            for i in 0..n_steps {
                let t = t_start + i as f64 * dt;
                if p.noise_bound > 0.0 {
                    for v in noise.iter_mut() {
                        *v = rng.random_range(-forcing..forcing);
                    }
                }
                let rho = &p.rho;
                let (sigma, beta) = (p.sigma, p.beta);
                rk4_noisy_step(
                    |tt, s, out| lorenz_rhs(s, sigma, beta, rho.value(tt), out),
                    &state,
                    t,
                    dt,
                    &noise,
                    &mut next,
                );
                if !push_or_diverge(&mut rows, &next) {
                    diverged = true;
                    break;
                }
                state.copy_from_slice(&next);
            }
        }
        SystemSpec::Ikeda(p) => {
            let mut noise = [0.0; 2];
            for i in 0..n_steps {
                let n = t_start + i as f64;
                if p.noise_bound > 0.0 {
                    noise[0] = rng.random_range(-p.noise_bound..p.noise_bound);
                    noise[1] = rng.random_range(-p.noise_bound..p.noise_bound);
                } else {
                    noise = [0.0; 2];
                }
                let eta_n = p.eta.value(n);
                let next = ikeda_step([state[0], state[1]], eta_n, p, noise);
                if !push_or_diverge(&mut rows, &next) {
                    diverged = true;
                    break;
                }
                state[0] = next[0];
                state[1] = next[1];
            }
        }
        SystemSpec::Ks(p) => {
            let mut stepper = KsStepper::new(p.grid_points);
            let mut next = vec![0.0; dim];
            for i in 0..n_steps {
                let t = t_start + i as f64 * dt;
                let kappa = p.kappa.value(t);
                if !(kappa > 0.0) {
                    return Err(Error::input(format!("KS kappa must stay positive, got {kappa} at t={t}")));
                }
                stepper.step(&state, kappa, dt, &mut next);
                if p.noise_bound > 0.0 {
                    for v in next.iter_mut() {
                        *v += rng.random_range(-p.noise_bound..p.noise_bound);
                    }
                }
                if !push_or_diverge(&mut rows, &next) {
                    diverged = true;
                    break;
                }
                state.copy_from_slice(&next);
            }
        }
    }

    let count = rows.len() / dim;
    let data = Array2::from_shape_vec((count, dim), rows)
        .expect("row buffer length is a multiple of dim");
    let mut traj = Trajectory::new(t_start, dt, data, seed)?;
    traj.diverged = diverged;
    Ok(traj)
}

/// Append `state` to `rows` unless it breaches the divergence limit.
fn push_or_diverge(rows: &mut Vec<f64>, state: &[f64]) -> bool {
    if state.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
        return false;
    }
    rows.extend_from_slice(state);
    true
}

/// One noiseless native step of `system` with the ramp frozen at its base
/// value, for stationary analyses (sweeps, Lyapunov estimation).
///
/// Errors unless the schedule is frozen and the system noiseless.
pub fn frozen_stepper(system: &SystemSpec) -> Result<Box<dyn FnMut(&mut [f64]) + Send>> {
    system.validate()?;
    let noise = match system {
        SystemSpec::Lorenz(p) => p.noise_bound,
        SystemSpec::Ikeda(p) => p.noise_bound,
        SystemSpec::Ks(p) => p.noise_bound,
    };
    if noise != 0.0 || !system.ramp().is_frozen() {
        return Err(Error::input(
            "frozen_stepper requires a noiseless system with a frozen ramp".to_string(),
        ));
    }
    match *system {
        SystemSpec::Lorenz(p) => {
            let rho = p.rho.base;
            let dt = LORENZ_DT;
            let zero = [0.0; 3];
            let mut out = vec![0.0; 3];
            Ok(Box::new(move |state: &mut [f64]| {
                rk4_noisy_step(
                    |_, s, o| lorenz_rhs(s, p.sigma, p.beta, rho, o),
                    state,
                    0.0,
                    dt,
                    &zero,
                    &mut out,
                );
                state.copy_from_slice(&out);
            }))
        }
        SystemSpec::Ikeda(p) => {
            let eta = p.eta.base;
            Ok(Box::new(move |state: &mut [f64]| {
                let next = ikeda_step([state[0], state[1]], eta, &p, [0.0, 0.0]);
                state[0] = next[0];
                state[1] = next[1];
            }))
        }
        SystemSpec::Ks(p) => {
            let kappa = p.kappa.base;
            let mut stepper = KsStepper::new(p.grid_points);
            let mut out = vec![0.0; p.grid_points];
            Ok(Box::new(move |state: &mut [f64]| {
                stepper.step(state, kappa, p.dt, &mut out);
                state.copy_from_slice(&out);
            }))
        }
    }
}
