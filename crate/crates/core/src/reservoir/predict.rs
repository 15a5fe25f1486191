//! Closed-loop prediction: open-loop resynchronization on an observed
//! segment, then autonomous iteration feeding each (optionally residual-
//! perturbed) output back as the next input.

use ndarray::Array2;
use rand::Rng;

use super::{fill_features, Architecture, ReservoirDriver, TrainedModel};
use crate::dynamics::{Trajectory, DIVERGENCE_LIMIT};
use crate::error::{Error, Result};
use crate::observables::scale_trajectory;
use crate::rng::{stream_rng, Stream};

/// Outcome of a closed-loop run.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Predicted trajectory in raw (un-normalized) units, starting one step
    /// after the end of the synchronization segment. `None` when zero steps
    /// were requested or the very first output already diverged.
    pub trajectory: Option<Trajectory>,
    pub diverged: bool,
    /// Reservoir state after synchronization and prediction.
    pub reservoir_state: Vec<f64>,
}

/// Resynchronize on `sync_data` (raw units, ending where prediction should
/// begin) and predict `n_steps` forward.
///
/// With `stochastic` set, each one-step output is perturbed by a residual
/// vector drawn with replacement from the model's pool before being fed
/// back, reproducing the dynamical-noise statistics learned in training.
pub fn predict(
    model: &TrainedModel,
    sync_data: &Trajectory,
    n_steps: usize,
    stochastic: bool,
    seed: u64,
) -> Result<Prediction> {
    let hp = &model.hyperparams;
    let l = model.state_dim();
    if sync_data.dim() != l {
        return Err(Error::input(format!(
            "sync data dimension {} does not match model dimension {l}",
            sync_data.dim()
        )));
    }
    if ((sync_data.dt - hp.rc_dt) / hp.rc_dt).abs() > 1e-9 {
        return Err(Error::input("sync data must be sampled at the model's rc_dt".to_string()));
    }
    if sync_data.len() < 1 {
        return Err(Error::input("synchronization segment must contain at least one sample".to_string()));
    }
    if stochastic && model.residual_pool.nrows() == 0 {
        return Err(Error::input("stochastic prediction needs a non-empty residual pool".to_string()));
    }
    if model.readout.ncols() != hp.feature_len(l) {
        return Err(Error::input(format!(
            "readout has {} columns but the {:?} feature map needs {}",
            model.readout.ncols(),
            hp.architecture,
            hp.feature_len(l)
        )));
    }

    let synced = scale_trajectory(sync_data, &model.scales, true);
    let mut driver = ReservoirDriver::new(&model.topology, hp);
    let mut u = vec![0.0; l + 1];
    for i in 0..synced.len() {
        let t = synced.time(i);
        u[..l].copy_from_slice(synced.state(i).as_slice().unwrap());
        u[l] = model.control.value(t);
        driver.step(&u);
    }
    let mut t_cur = synced.end_time();

    if n_steps == 0 {
        return Ok(Prediction {
            trajectory: None,
            diverged: false,
            reservoir_state: driver.state().to_vec(),
        });
    }

    let mut rng = stream_rng(seed, Stream::Predict);
    let pool_len = model.residual_pool.nrows();
    let mut feature = vec![0.0; model.feature_len()];
    let mut rows: Vec<f64> = Vec::with_capacity(n_steps * l);
    let mut diverged = false;

    for _ in 0..n_steps {
        // knowledge prediction from the current input state, before advancing
        let kb_pred = match (&model.knowledge, hp.architecture) {
            (Some(km), Architecture::Hybrid) => {
                Some(super::train::knowledge_prediction(km, &u[..l], t_cur, &model.scales.0))
            }
            _ => None,
        };
        fill_features(&mut feature, hp.architecture, l, driver.state(), &u, kb_pred.as_deref());
        let mut out = vec![0.0; l];
        for (c, o) in out.iter_mut().enumerate() {
            *o = model.readout.row(c).iter().zip(&feature).map(|(w, f)| w * f).sum();
        }
        if stochastic {
            let k = rng.random_range(0..pool_len);
            for (c, o) in out.iter_mut().enumerate() {
                *o += model.residual_pool[[k, c]];
            }
        }
        // divergence check in raw units
        let raw_bad = out
            .iter()
            .zip(&model.scales.0)
            .any(|(v, s)| !v.is_finite() || (v * s).abs() > DIVERGENCE_LIMIT);
        if raw_bad {
            diverged = true;
            break;
        }
        t_cur += hp.rc_dt;
        for (c, v) in out.iter().enumerate() {
            rows.push(v * model.scales.0[c]);
        }
        // feed back as the next input
        u[..l].copy_from_slice(&out);
        u[l] = model.control.value(t_cur);
        driver.step(&u);
    }

    let count = rows.len() / l;
    let trajectory = if count == 0 {
        None
    } else {
        let data = Array2::from_shape_vec((count, l), rows).expect("row count times dim");
        let mut t = Trajectory::new(synced.end_time() + hp.rc_dt, hp.rc_dt, data, seed)?;
        t.diverged = diverged;
        Some(t)
    };
    Ok(Prediction { trajectory, diverged, reservoir_state: driver.state().to_vec() })
}
