//! Readout training: streaming Gram accumulation over (possibly repeated,
//! noise-augmented) training passes, and the regularized normal-equations
//! solve, optionally against a readout prior.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2};
use rand::Rng;

use super::{
    fill_features, hybrid_prior, Architecture, ControlSignal, HyperParams, KnowledgeModel,
    ReservoirDriver, TrainedModel,
};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, symmetrize_upper, syrk_upper};
use crate::observables::rms_normalize;
use crate::rng::{fan_out, stream_rng, Stream};

const BLOCK_ROWS: usize = 1024;

/// Streaming accumulator for the normal equations: gathers the mean feature
/// Gram G = E[f f^T] and cross term H = E[v f^T] in row blocks so the full
/// feature matrix never materializes.
pub struct GramAccumulator {
    g: Array2<f64>,
    h: Array2<f64>,
    feat_block: Array2<f64>,
    tgt_block: Array2<f64>,
    fill: usize,
    rows: usize,
}

impl GramAccumulator {
    pub fn new(feature_len: usize, target_len: usize) -> Self {
        Self {
            g: Array2::zeros((feature_len, feature_len)),
            h: Array2::zeros((target_len, feature_len)),
            feat_block: Array2::zeros((BLOCK_ROWS, feature_len)),
            tgt_block: Array2::zeros((BLOCK_ROWS, target_len)),
            fill: 0,
            rows: 0,
        }
    }

    pub fn push(&mut self, feature: &[f64], target: &[f64]) {
        self.feat_block.row_mut(self.fill).iter_mut().zip(feature).for_each(|(o, v)| *o = *v);
        self.tgt_block.row_mut(self.fill).iter_mut().zip(target).for_each(|(o, v)| *o = *v);
        self.fill += 1;
        self.rows += 1;
        if self.fill == BLOCK_ROWS {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.fill == 0 {
            return;
        }
        let x = self.feat_block.slice(s![..self.fill, ..]);
        let y = self.tgt_block.slice(s![..self.fill, ..]);
        syrk_upper(&mut self.g, &x);
        general_mat_mul(1.0, &y.t(), &x, 1.0, &mut self.h);
        self.fill = 0;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Solve for the readout minimizing
    /// `mean ||W f - v||^2 + lambda ||W - P||^2` (P = 0 when absent).
    ///
    /// Returns the L x F readout and the total diagonal boost that was needed
    /// to make the factorization succeed (0.0 in the well-conditioned case).
    pub fn solve(mut self, lambda: f64, prior: Option<&Array2<f64>>) -> Result<(Array2<f64>, f64)> {
        if self.rows == 0 {
            return Err(Error::input("no training pairs accumulated".to_string()));
        }
        self.flush();
        let f = self.g.nrows();
        let inv = 1.0 / self.rows as f64;
        self.g.mapv_inplace(|v| v * inv);
        self.h.mapv_inplace(|v| v * inv);
        symmetrize_upper(&mut self.g);

        if let Some(p) = prior {
            if p.shape() != self.h.shape() {
                return Err(Error::input(format!(
                    "prior shape {:?} does not match readout shape {:?}",
                    p.shape(),
                    self.h.shape()
                )));
            }
        }

        // rhs = H^T + lambda P^T
        let mut rhs = self.h.t().to_owned();
        if let Some(p) = prior {
            rhs += &(p.t().to_owned() * lambda);
        }

        let mean_diag = self.g.diag().sum() / f as f64;
        let mut boost = 0.0;
        for attempt in 0..4 {
            let mut a = self.g.clone();
            let shift = lambda + boost;
            for i in 0..f {
                a[[i, i]] += shift;
            }
            match solve_spd(a, &rhs) {
                Ok(x) => {
                    return Ok((x.t().to_owned(), boost));
                }
                Err(_) if lambda > 0.0 && attempt < 3 => {
                    // nearly rank-deficient Gram; nudge the diagonal and retry
                    boost = if boost == 0.0 {
                        (1e-14 * mean_diag).max(f64::MIN_POSITIVE)
                    } else {
                        boost * 100.0
                    };
                }
                Err(_) => {
                    return Err(Error::numeric(if lambda == 0.0 {
                        "feature Gram is singular; set tikhonov > 0".to_string()
                    } else {
                        format!("ridge solve failed even with diagonal boost {boost:e}")
                    }));
                }
            }
        }
        unreachable!("solve loop always returns");
    }
}

/// Ridge readout from explicit feature and target matrices (T x F and T x L):
/// the minimizer of `mean ||W f - v||^2 + lambda ||W - P||^2`.
pub fn train_readout(
    features: &Array2<f64>,
    targets: &Array2<f64>,
    lambda: f64,
    prior: Option<&Array2<f64>>,
) -> Result<Array2<f64>> {
    if features.nrows() == 0 || features.nrows() != targets.nrows() {
        return Err(Error::input(format!(
            "need matching non-empty rows, got {} features and {} targets",
            features.nrows(),
            targets.nrows()
        )));
    }
    let mut acc = GramAccumulator::new(features.ncols(), targets.ncols());
    for (f, t) in features.outer_iter().zip(targets.outer_iter()) {
        acc.push(f.as_slice().unwrap(), t.as_slice().unwrap());
    }
    acc.solve(lambda, prior).map(|(w, _)| w)
}

/// Everything `train_model` needs beyond the hyperparameters.
pub struct TrainSpec<'a> {
    /// Raw (un-normalized) observed data.
    pub data: &'a Trajectory,
    /// Training window [a, b] within the data (grid-aligned).
    pub window: (f64, f64),
    /// Window over which normalization scales are computed.
    pub rms_window: (f64, f64),
    pub hyperparams: &'a HyperParams,
    /// Required for the hybrid architecture; rejected otherwise.
    pub knowledge: Option<KnowledgeModel>,
    pub seed: u64,
}

/// Train a reservoir model on one trajectory window.
///
/// Normalizes the data, builds the seeded topology, drives the reservoir
/// `training_passes` times (fresh observational noise on the inputs each
/// pass, clean targets), solves the regularized readout, and records the
/// clean-drive residual pool.
pub fn train_model(spec: &TrainSpec) -> Result<TrainedModel> {
    let hp = spec.hyperparams;
    hp.validate()?;
    let data = spec.data;
    if ((data.dt - hp.rc_dt) / hp.rc_dt).abs() > 1e-9 {
        return Err(Error::config(format!(
            "rc_dt {} does not match data sampling step {}",
            hp.rc_dt, data.dt
        )));
    }
    match (hp.architecture, &spec.knowledge) {
        (Architecture::Hybrid, None) => {
            return Err(Error::config("hybrid architecture requires a knowledge model".to_string()))
        }
        (arch, Some(_)) if arch != Architecture::Hybrid => {
            return Err(Error::config(
                "knowledge model supplied but architecture is not hybrid".to_string(),
            ))
        }
        _ => {}
    }

    let l = data.dim();
    let (normed, scales) = rms_normalize(data, spec.rms_window)?;
    let ia = normed.index_at(spec.window.0)?;
    let ib = normed.index_at(spec.window.1)?;
    if ib < ia + 1 {
        return Err(Error::input("training window must contain at least one step".to_string()));
    }

    let topology = super::build_topology(hp, l, fan_out(spec.seed, 0x0070_0001))?;
    let control = ControlSignal {
        slope: hp.control_slope,
        intercept: hp.control_intercept,
        t_k1: normed.time(ia),
        dt: hp.rc_dt,
    };

    let kb = spec.knowledge;
    let f_len = hp.feature_len(l);
    let mut acc = GramAccumulator::new(f_len, l);
    let mut driver = ReservoirDriver::new(&topology, hp);
    let mut noise_rng = stream_rng(fan_out(spec.seed, 0x0070_0002), Stream::TrainNoise);

    let mut u = vec![0.0; l + 1];
    let mut feature = vec![0.0; f_len];

    for _pass in 0..hp.training_passes {
        driver.reset();
        for i in ia..ib {
            let t = normed.time(i);
            for (c, out) in u.iter_mut().take(l).enumerate() {
                let mut v = normed.data[[i, c]];
                if hp.obs_noise > 0.0 {
                    v += noise_rng.random_range(-hp.obs_noise..hp.obs_noise);
                }
                *out = v;
            }
            u[l] = control.value(t);
            let kb_pred = match (&kb, hp.architecture) {
                (Some(km), Architecture::Hybrid) => {
                    Some(knowledge_prediction(km, &u[..l], t, &scales.0))
                }
                _ => None,
            };
            let r = driver.step(&u);
            fill_features(&mut feature, hp.architecture, l, r, &u, kb_pred.as_deref());
            acc.push(&feature, normed.state(i + 1).as_slice().unwrap());
        }
    }

    let prior = match hp.architecture {
        Architecture::Hybrid => Some(hybrid_prior(l, f_len)),
        _ => None,
    };
    let (readout, diag_boost) = acc.solve(hp.tikhonov, prior.as_ref())?;

    // residual pool from a clean (noise-free) drive with the learned readout
    let steps = ib - ia;
    let mut residuals = Array2::zeros((steps, l));
    driver.reset();
    for i in ia..ib {
        let t = normed.time(i);
        u[..l].copy_from_slice(normed.state(i).as_slice().unwrap());
        u[l] = control.value(t);
        let kb_pred = match (&kb, hp.architecture) {
            (Some(km), Architecture::Hybrid) => {
                Some(knowledge_prediction(km, &u[..l], t, &scales.0))
            }
            _ => None,
        };
        let r = driver.step(&u);
        fill_features(&mut feature, hp.architecture, l, r, &u, kb_pred.as_deref());
        for c in 0..l {
            let pred: f64 =
                readout.row(c).iter().zip(&feature).map(|(w, f)| w * f).sum();
            residuals[[i - ia, c]] = normed.data[[i + 1, c]] - pred;
        }
    }

    Ok(TrainedModel {
        topology,
        hyperparams: hp.clone(),
        readout,
        residual_pool: residuals,
        scales,
        control,
        train_seed: spec.seed,
        knowledge: kb,
        diag_boost,
    })
}

/// Knowledge-model one-step prediction in normalized coordinates: scale the
/// normalized state up, step the physics model, scale back down.
pub(crate) fn knowledge_prediction(km: &KnowledgeModel, v_norm: &[f64], t: f64, scales: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = v_norm.iter().zip(scales).map(|(v, s)| v * s).collect();
    let next = km.step(&raw, t);
    next.iter().zip(scales).map(|(v, s)| v / s).collect()
}

/// Residuals of a readout against explicit features/targets, one row per step.
pub fn compute_residuals(
    readout: &Array2<f64>,
    features: &Array2<f64>,
    targets: &Array2<f64>,
) -> Array2<f64> {
    let mut out = targets.clone();
    general_mat_mul(-1.0, features, &readout.t(), 1.0, &mut out);
    out
}

/// Convenience: training window as the trailing `train_length` of the data,
/// ending at the final sample.
pub fn trailing_window(data: &Trajectory, train_length: f64) -> (f64, f64) {
    let end = data.end_time();
    (end - train_length, end)
}
