//! Hyperparameter selection for non-stationary prediction: a three-way
//! temporal partition of the observed data, per-candidate evaluation
//! (median valid time on the short recent window, mean Wasserstein distance
//! on the long early window), and combined scoring over a grid.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::metrics::{valid_time, wasserstein1, EmpiricalCdf};
use crate::observables::scale_trajectory;
use crate::reservoir::{predict, train_model, HyperParams, KnowledgeModel, TrainSpec};
use crate::rng::{fan_out, stream_rng, Stream};

/// Partition boundaries, all positive, in time units before the present:
/// short validation (-T1, 0], training [-T2, -T1], long validation [-T3, -T2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionTimes {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

/// Index views of one trajectory for the three partition segments
/// (inclusive sample ranges).
#[derive(Debug, Clone, PartialEq)]
pub struct DataPartition {
    pub short: (usize, usize),
    pub train: (usize, usize),
    pub long: (usize, usize),
    pub times: PartitionTimes,
}

/// Split `data` (which must span at least [-T3, 0]) into the three
/// contiguous, disjoint segments in the documented temporal order.
pub fn partition(data: &Trajectory, times: &PartitionTimes) -> Result<DataPartition> {
    let PartitionTimes { t1, t2, t3 } = *times;
    if !(0.0 < t1 && t1 < t2 && t2 < t3) {
        return Err(Error::config(format!(
            "partition needs 0 < T1 < T2 < T3, got ({t1}, {t2}, {t3})"
        )));
    }
    if data.t0 > -t3 || data.end_time() < 0.0 {
        return Err(Error::input(format!(
            "data spans [{}, {}] but the partition requires at least [{}, 0]",
            data.t0,
            data.end_time(),
            -t3
        )));
    }
    let i_zero = data.index_at(0.0)?;
    let i_t1 = data.index_at(-t1)?;
    let i_t2 = data.index_at(-t2)?;
    let i_t3 = data.index_at(-t3)?;
    let part = DataPartition {
        short: (i_t1 + 1, i_zero),
        train: (i_t2, i_t1),
        long: (i_t3, i_t2 - 1),
        times: *times,
    };
    if part.short.0 > part.short.1 || part.long.0 > part.long.1 || part.train.0 + 1 > part.train.1 {
        return Err(Error::config("partition produces an empty segment".to_string()));
    }
    Ok(part)
}

/// Evaluation knobs shared by every candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Number of short-window predictions whose valid times are medianed.
    pub m1: usize,
    /// Number of long-window predictions whose Wasserstein distances are averaged.
    pub m2: usize,
    /// Synchronization segment length (time units).
    pub sync_time: f64,
    /// Valid-time threshold on the normalized error.
    pub valid_threshold: f64,
    /// Residual-resampling predictions during evaluation.
    pub stochastic: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { m1: 8, m2: 4, sync_time: 1.0, valid_threshold: 0.4, stochastic: true }
    }
}

/// One evaluated hyperparameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateScore {
    /// Position in grid enumeration order (ties fall back to it).
    pub index: usize,
    pub hyperparams: HyperParams,
    pub median_valid_time: f64,
    pub mean_wasserstein: f64,
    /// Combined score; NaN until `score_and_select` runs.
    pub score: f64,
    /// Long-window predictions that went unstable.
    pub diverged: usize,
    /// Set when the candidate could not be evaluated at all.
    pub failed: Option<String>,
}

/// Train one candidate on the training segment and measure it on both
/// validation segments.
///
/// Valid-time starts are drawn from the first quarter of the short window
/// (nearest -T1); long-window predictions resynchronize near -T3 and their
/// per-variable Wasserstein distances are measured in normalized units
/// against the true long-window distribution. A diverged long prediction
/// contributes the maximal distance (the bounds width) instead of being
/// dropped, so instability is penalized.
pub fn evaluate_candidate(
    hp: &HyperParams,
    data: &Trajectory,
    times: &PartitionTimes,
    eval: &EvalSettings,
    knowledge: Option<KnowledgeModel>,
    seed: u64,
) -> Result<CandidateScore> {
    let part = partition(data, times)?;
    let dt = data.dt;
    let sync_steps = (eval.sync_time / dt).round().max(1.0) as usize;

    let spec = TrainSpec {
        data,
        window: (data.time(part.train.0), data.time(part.train.1)),
        rms_window: (data.t0, data.time(data.index_at(0.0)?)),
        hyperparams: hp,
        knowledge,
        seed: fan_out(seed, 0x7E57_0001),
    };
    let model = train_model(&spec)?;
    let mut rng = stream_rng(fan_out(seed, 0x7E57_0002), Stream::Hpo);

    // --- median valid time over m1 short-window predictions ---
    let draw_range = |seg: (usize, usize), rng: &mut rand_chacha::ChaCha8Rng| -> Result<usize> {
        let len = seg.1 - seg.0 + 1;
        let quarter_end = seg.0 + (len / 4).max(1);
        // the sync segment and at least one compared sample must fit
        let latest = seg.1.checked_sub(sync_steps).ok_or_else(|| {
            Error::config(format!(
                "validation segment too short for a {sync_steps}-step synchronization"
            ))
        })?;
        let hi = quarter_end.min(latest);
        if hi <= seg.0 {
            return Err(Error::config(
                "validation segment too short for the requested sync length".to_string(),
            ));
        }
        Ok(rng.random_range(seg.0..hi))
    };

    let mut valid_times = Vec::with_capacity(eval.m1);
    for j in 0..eval.m1 {
        let start = draw_range(part.short, &mut rng)?;
        let sync_end = start + sync_steps - 1;
        let sync = data.slice_time(data.time(start), data.time(sync_end))?;
        let n_steps = part.short.1 - sync_end;
        let pred = predict(&model, &sync, n_steps, eval.stochastic, fan_out(seed, 0x51_0000 + j as u64))?;
        match pred.trajectory {
            Some(traj) => {
                let truth = data.slice_time(data.time(sync_end + 1), data.time(part.short.1))?;
                let report = valid_time(&traj, &truth, eval.valid_threshold)?;
                valid_times.push(report.valid_time);
            }
            None => valid_times.push(0.0),
        }
    }
    valid_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_valid_time = median_of_sorted(&valid_times);

    // --- mean Wasserstein distance over m2 long-window predictions ---
    let long_true = data.slice_time(data.time(part.long.0), data.time(part.long.1))?;
    let long_true_norm = scale_trajectory(&long_true, &model.scales, true);
    let l = data.dim();
    let mut bounds = Vec::with_capacity(l);
    let mut true_cdfs = Vec::with_capacity(l);
    for c in 0..l {
        let col = long_true_norm.component(c);
        let cdf = EmpiricalCdf::new(col)?;
        let (lo, hi) = (cdf.min(), cdf.max());
        if !(lo < hi) {
            return Err(Error::input(format!(
                "long validation segment is degenerate in component {c}"
            )));
        }
        bounds.push((lo, hi));
        true_cdfs.push(cdf);
    }

    let mut distances = Vec::with_capacity(eval.m2);
    let mut diverged = 0usize;
    for j in 0..eval.m2 {
        let start = draw_range(part.long, &mut rng)?;
        let sync_end = start + sync_steps - 1;
        let sync = data.slice_time(data.time(start), data.time(sync_end))?;
        let n_steps = part.long.1 - sync_end;
        let pred = predict(&model, &sync, n_steps, eval.stochastic, fan_out(seed, 0x52_0000 + j as u64))?;
        let width_mean = bounds.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / l as f64;
        match pred.trajectory {
            Some(traj) if !pred.diverged => {
                let traj_norm = scale_trajectory(&traj, &model.scales, true);
                let mut acc = 0.0;
                for c in 0..l {
                    let pred_cdf = EmpiricalCdf::new(traj_norm.component(c))?;
                    acc += wasserstein1(&pred_cdf, &true_cdfs[c], bounds[c])?;
                }
                distances.push(acc / l as f64);
            }
            _ => {
                diverged += 1;
                distances.push(width_mean);
            }
        }
    }
    let mean_wasserstein = distances.iter().sum::<f64>() / distances.len() as f64;

    Ok(CandidateScore {
        index: 0,
        hyperparams: hp.clone(),
        median_valid_time,
        mean_wasserstein,
        score: f64::NAN,
        diverged,
        failed: None,
    })
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Combined score: `E_W / max(E_W) - t_v / max(t_v)`, each normalization
/// taken over the candidate set; a degenerate axis (max = 0) contributes 0.
/// Returns the index (into the slice) of the minimizer; ties break toward
/// larger valid time, then smaller Wasserstein distance, then input order.
pub fn score_and_select(candidates: &mut [CandidateScore]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::input("no candidates to score".to_string()));
    }
    let max_ew = candidates.iter().map(|c| c.mean_wasserstein).fold(0.0f64, f64::max);
    let max_tv = candidates.iter().map(|c| c.median_valid_time).fold(0.0f64, f64::max);
    for c in candidates.iter_mut() {
        let term_e = if max_ew > 0.0 { c.mean_wasserstein / max_ew } else { 0.0 };
        let term_t = if max_tv > 0.0 { c.median_valid_time / max_tv } else { 0.0 };
        c.score = term_e - term_t;
    }
    let mut best = 0;
    for i in 1..candidates.len() {
        if better(&candidates[i], &candidates[best]) {
            best = i;
        }
    }
    Ok(best)
}

fn better(a: &CandidateScore, b: &CandidateScore) -> bool {
    if a.score != b.score {
        return a.score < b.score;
    }
    if a.median_valid_time != b.median_valid_time {
        return a.median_valid_time > b.median_valid_time;
    }
    if a.mean_wasserstein != b.mean_wasserstein {
        return a.mean_wasserstein < b.mean_wasserstein;
    }
    a.index < b.index
}

/// Winner under the valid-time-only objective (the conventional scheme):
/// maximal median valid time, ties toward smaller Wasserstein, then order.
pub fn select_by_valid_time(candidates: &[CandidateScore]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::input("no candidates to score".to_string()));
    }
    let mut best = 0;
    for i in 1..candidates.len() {
        let (a, b) = (&candidates[i], &candidates[best]);
        let wins = if a.median_valid_time != b.median_valid_time {
            a.median_valid_time > b.median_valid_time
        } else if a.mean_wasserstein != b.mean_wasserstein {
            a.mean_wasserstein < b.mean_wasserstein
        } else {
            a.index < b.index
        };
        if wins {
            best = i;
        }
    }
    Ok(best)
}

/// Grid definition: named per-hyperparameter value lists (Cartesian product),
/// evaluation counts, partition times, and the master seed.
///
/// `t2` may be omitted, in which case each candidate's training segment ends
/// at `t1 + train_length` for that candidate's own `train_length`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
    pub m1: usize,
    pub m2: usize,
    pub t1: f64,
    #[serde(default)]
    pub t2: Option<f64>,
    pub t3: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 {
            return Err(Error::config("m1 and m2 must be >= 1".to_string()));
        }
        for axis in &self.axes {
            if axis.values.is_empty() {
                return Err(Error::config(format!("grid axis '{}' is empty", axis.name)));
            }
        }
        Ok(())
    }

    /// Number of candidates in the Cartesian product.
    pub fn candidate_count(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product::<usize>().max(1)
    }

    /// Hyperparameters of candidate `index` (mixed-radix odometer over the
    /// axes in listed order).
    pub fn candidate(&self, base: &HyperParams, index: usize) -> Result<HyperParams> {
        let mut hp = base.clone();
        let mut rem = index;
        for axis in self.axes.iter().rev() {
            let n = axis.values.len();
            let v = axis.values[rem % n];
            rem /= n;
            apply_axis(&mut hp, &axis.name, v)?;
        }
        Ok(hp)
    }
}

/// Set one named hyperparameter from a grid value.
pub fn apply_axis(hp: &mut HyperParams, name: &str, value: f64) -> Result<()> {
    match name {
        "n_nodes" => hp.n_nodes = value as usize,
        "mean_degree" => hp.mean_degree = value,
        "spectral_radius" => hp.spectral_radius = value,
        "input_scale" => hp.input_scale = value,
        "control_scale" => hp.control_scale = Some(value),
        "leakage" => hp.leakage = value,
        "tikhonov" => hp.tikhonov = value,
        "activation_bias" => hp.activation_bias = value,
        "control_slope" => hp.control_slope = value,
        "obs_noise" => hp.obs_noise = value,
        "training_passes" => hp.training_passes = value as usize,
        "train_length" => hp.train_length = value,
        other => {
            return Err(Error::config(format!("unknown grid axis '{other}'")));
        }
    }
    Ok(())
}

/// Evaluate the full grid (candidates in parallel), score with the combined
/// objective, and return the scores sorted best-first. Fully deterministic
/// in (grid, data, base hyperparameters, seed): per-candidate seeds derive
/// from the candidate index, and results merge in index order regardless of
/// which worker finished first.
pub fn grid_search(
    grid: &GridSpec,
    base: &HyperParams,
    data: &Trajectory,
    eval: &EvalSettings,
    knowledge: Option<KnowledgeModel>,
) -> Result<Vec<CandidateScore>> {
    grid.validate()?;
    let count = grid.candidate_count();
    let mut scores: Vec<CandidateScore> = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = fan_out(grid.seed, i as u64);
            let hp = match grid.candidate(base, i) {
                Ok(hp) => hp,
                Err(e) => return failed_candidate(i, base.clone(), e.to_string()),
            };
            let times = PartitionTimes {
                t1: grid.t1,
                t2: grid.t2.unwrap_or(grid.t1 + hp.train_length),
                t3: grid.t3,
            };
            match evaluate_candidate(&hp, data, &times, eval, knowledge, seed) {
                Ok(mut s) => {
                    s.index = i;
                    s
                }
                Err(e) => failed_candidate(i, hp, e.to_string()),
            }
        })
        .collect();
    // failed candidates score as the worst possible entries and never win
    let usable = scores.iter().filter(|s| s.failed.is_none()).count();
    if usable == 0 {
        return Err(Error::numeric(
            "every grid candidate failed to evaluate; see per-candidate messages".to_string(),
        ));
    }
    let worst_ew = scores
        .iter()
        .filter(|s| s.failed.is_none())
        .map(|s| s.mean_wasserstein)
        .fold(0.0f64, f64::max);
    for s in scores.iter_mut() {
        if s.failed.is_some() {
            s.median_valid_time = 0.0;
            s.mean_wasserstein = worst_ew.max(1.0) * 2.0;
        }
    }
    score_and_select(&mut scores)?;
    scores.sort_by(|a, b| {
        if better(a, b) {
            std::cmp::Ordering::Less
        } else if better(b, a) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    Ok(scores)
}

fn failed_candidate(index: usize, hp: HyperParams, message: String) -> CandidateScore {
    CandidateScore {
        index,
        hyperparams: hp,
        median_valid_time: 0.0,
        mean_wasserstein: f64::NAN,
        score: f64::NAN,
        diverged: 0,
        failed: Some(message),
    }
}

#[cfg(test)]
mod tests;
