//! The reservoir computer: sparse random topology, open-loop driving, ridge
//! readout training with optional prior, residual-resampling stochastic
//! closed-loop prediction, the split-input/quadratic variant, and the hybrid
//! variant that feeds an imperfect physics model into the feature vector.

mod predict;
mod topology;
mod train;

pub use predict::{predict, Prediction};
pub use topology::{
    build_topology, drive_open_loop, reservoir_step, CsrMatrix, InputLayer, ReservoirDriver,
    ReservoirTopology,
};
pub use train::{
    compute_residuals, trailing_window, train_model, train_readout, GramAccumulator, TrainSpec,
};

use serde::{Deserialize, Serialize};

use crate::dynamics::{lorenz_rhs, rk4_noisy_step, RampSchedule, RmsScales};
use crate::error::{Error, Result};
use ndarray::Array2;

/// Which feature map and input wiring the reservoir uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Single input layer over [v; s], features [r; u; 1].
    Plain,
    /// Separate input couplings for v and s, features [r; r^2; u; 1].
    SplitQuadratic,
    /// Plain wiring plus a knowledge-model prediction: features [r; v; 1; v_kb].
    Hybrid,
}

/// The full reservoir configuration searched by the hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n_nodes: usize,
    /// Expected connections per node of the random adjacency.
    pub mean_degree: f64,
    pub spectral_radius: f64,
    /// Half-width of the input coupling weights (chi, or chi_1 when split).
    pub input_scale: f64,
    /// Half-width of the control-signal coupling (chi_2); split variant only.
    #[serde(default)]
    pub control_scale: Option<f64>,
    /// Leakage alpha in (0, 1].
    pub leakage: f64,
    /// Tikhonov regularization lambda.
    pub tikhonov: f64,
    /// Constant activation bias b_r.
    pub activation_bias: f64,
    /// Slope a of the linear control signal s = a k + b.
    pub control_slope: f64,
    /// Intercept b of the control signal; conventionally fixed at 1.
    #[serde(default = "default_intercept")]
    pub control_intercept: f64,
    /// Half-width of observational noise added to training inputs per pass.
    pub obs_noise: f64,
    pub training_passes: usize,
    /// Training window length t_t, in time units.
    pub train_length: f64,
    /// Reservoir step; must match the data sampling step.
    pub rc_dt: f64,
    pub architecture: Architecture,
}

fn default_intercept() -> f64 {
    1.0
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::config("n_nodes must be >= 1".to_string()));
        }
        if !(self.spectral_radius > 0.0) {
            return Err(Error::config("spectral_radius must be positive".to_string()));
        }
        if !(self.leakage > 0.0 && self.leakage <= 1.0) {
            return Err(Error::config(format!("leakage must be in (0, 1], got {}", self.leakage)));
        }
        if self.tikhonov < 0.0 {
            return Err(Error::config("tikhonov must be >= 0".to_string()));
        }
        if self.obs_noise < 0.0 {
            return Err(Error::config("obs_noise must be >= 0".to_string()));
        }
        if self.training_passes == 0 {
            return Err(Error::config("training_passes must be >= 1".to_string()));
        }
        if !(self.train_length > 0.0) {
            return Err(Error::config("train_length must be positive".to_string()));
        }
        if !(self.rc_dt > 0.0) {
            return Err(Error::config("rc_dt must be positive".to_string()));
        }
        if self.architecture == Architecture::SplitQuadratic && self.control_scale.is_none() {
            return Err(Error::config(
                "split_quadratic architecture requires control_scale".to_string(),
            ));
        }
        Ok(())
    }

    /// Feature vector length for input dimension `l`.
    pub fn feature_len(&self, l: usize) -> usize {
        let n = self.n_nodes;
        let k = l + 1;
        match self.architecture {
            Architecture::Plain => n + k + 1,
            Architecture::SplitQuadratic => 2 * n + k + 1,
            Architecture::Hybrid => n + l + 1 + l,
        }
    }
}

/// The linear control signal s = a k + b, with the step index k anchored so
/// the first training input is k = 1. The same anchor serves synchronization
/// and prediction at any other time, keeping s globally consistent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub slope: f64,
    pub intercept: f64,
    /// Time of the k = 1 step.
    pub t_k1: f64,
    pub dt: f64,
}

impl ControlSignal {
    pub fn step_index(&self, t: f64) -> i64 {
        ((t - self.t_k1) / self.dt).round() as i64 + 1
    }

    pub fn value(&self, t: f64) -> f64 {
        self.slope * self.step_index(t) as f64 + self.intercept
    }
}

/// An intentionally imperfect one-step physics predictor (Lorenz-form) that
/// shares the true system's parameter ramp. Operates on raw (un-normalized)
/// states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeModel {
    pub sigma: f64,
    pub beta: f64,
    pub rho: RampSchedule,
    pub dt: f64,
}

impl KnowledgeModel {
    /// One noiseless RK4 step from raw state `v` at time `t`.
    pub fn step(&self, v: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; 3];
        rk4_noisy_step(
            |tt, s, o| lorenz_rhs(s, self.sigma, self.beta, self.rho.value(tt), o),
            v,
            t,
            self.dt,
            &[0.0; 3],
            &mut out,
        );
        out
    }
}

/// A frozen reservoir model: fixed topology, learned readout, the residual
/// pool that mimics dynamical noise, and the normalization scales tying the
/// model to raw state space.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub topology: ReservoirTopology,
    pub hyperparams: HyperParams,
    /// L x F readout.
    pub readout: Array2<f64>,
    /// One training-step residual per row (T x L), in time order.
    pub residual_pool: Array2<f64>,
    pub scales: RmsScales,
    pub control: ControlSignal,
    pub train_seed: u64,
    pub knowledge: Option<KnowledgeModel>,
    /// Total diagonal boost the ridge solve needed beyond lambda (0 normally).
    pub diag_boost: f64,
}

impl TrainedModel {
    pub fn state_dim(&self) -> usize {
        self.readout.nrows()
    }

    pub fn feature_len(&self) -> usize {
        self.readout.ncols()
    }
}

/// Write the feature vector for one step into `buf`.
///
/// `r` is the post-step reservoir state, `u` the input that produced it, and
/// `kb` the knowledge-model prediction (hybrid only).
pub(crate) fn fill_features(
    buf: &mut [f64],
    arch: Architecture,
    l: usize,
    r: &[f64],
    u: &[f64],
    kb: Option<&[f64]>,
) {
    let n = r.len();
    match arch {
        Architecture::Plain => {
            buf[..n].copy_from_slice(r);
            buf[n..n + u.len()].copy_from_slice(u);
            buf[n + u.len()] = 1.0;
        }
        Architecture::SplitQuadratic => {
            buf[..n].copy_from_slice(r);
            for (b, ri) in buf[n..2 * n].iter_mut().zip(r) {
                *b = ri * ri;
            }
            buf[2 * n..2 * n + u.len()].copy_from_slice(u);
            buf[2 * n + u.len()] = 1.0;
        }
        Architecture::Hybrid => {
            let kb = kb.expect("hybrid features require a knowledge-model prediction");
            buf[..n].copy_from_slice(r);
            buf[n..n + l].copy_from_slice(&u[..l]);
            buf[n + l] = 1.0;
            buf[n + l + 1..n + l + 1 + l].copy_from_slice(kb);
        }
    }
}

/// Readout prior for the hybrid cost: zeros except an identity over the
/// knowledge-model block, expressing that the physics prediction is a
/// reasonable default output.
pub fn hybrid_prior(l: usize, feature_len: usize) -> Array2<f64> {
    let mut p = Array2::zeros((l, feature_len));
    let off = feature_len - l;
    for i in 0..l {
        p[[i, off + i]] = 1.0;
    }
    p
}

#[cfg(test)]
mod tests;
