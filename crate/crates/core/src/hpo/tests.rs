use super::*;
use crate::dynamics::Trajectory;
use crate::reservoir::Architecture;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sine_data(span: f64, dt: f64) -> Trajectory {
    let n = (span / dt).round() as usize + 1;
    let t0 = -span;
    let mut data = Array2::zeros((n, 1));
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        data[[i, 0]] = (1.3 * t).sin() + 0.2 * (0.37 * t).cos();
    }
    Trajectory::new(t0, dt, data, 0).unwrap()
}

fn toy_hp(lambda: f64) -> HyperParams {
    HyperParams {
        n_nodes: 60,
        mean_degree: 3.0,
        spectral_radius: 0.7,
        input_scale: 0.5,
        control_scale: None,
        leakage: 1.0,
        tikhonov: lambda,
        activation_bias: 0.0,
        control_slope: 0.0,
        control_intercept: 1.0,
        obs_noise: 0.0,
        training_passes: 1,
        train_length: 10.0,
        rc_dt: 0.01,
        architecture: Architecture::Plain,
    }
}

#[test]
fn partition_splits_in_documented_order() {
    let data = sine_data(300.0, 0.1);
    let times = PartitionTimes { t1: 2.0, t2: 52.0, t3: 252.0 };
    let p = partition(&data, &times).unwrap();
    // lengths in samples: short 2/0.1, train 50/0.1 + 1, long 200/0.1
    assert_eq!(p.short.1 - p.short.0 + 1, 20);
    assert_eq!(p.train.1 - p.train.0 + 1, 501);
    assert_eq!(p.long.1 - p.long.0 + 1, 2000);
    // disjoint and contiguous: long | train | short covering [-T3, 0]
    assert_eq!(p.long.1 + 1, p.train.0);
    assert_eq!(p.train.1 + 1, p.short.0);
    assert_eq!(data.time(p.long.0), -252.0);
    assert_eq!(data.time(p.short.1), 0.0);
}

#[test]
fn partition_rejects_bad_ordering_and_short_data() {
    let data = sine_data(300.0, 0.1);
    assert!(partition(&data, &PartitionTimes { t1: 52.0, t2: 2.0, t3: 252.0 }).is_err());
    assert!(partition(&data, &PartitionTimes { t1: 2.0, t2: 52.0, t3: 400.0 }).is_err());
}

#[test]
fn score_hand_example() {
    let mk = |i, ew, tv| CandidateScore {
        index: i,
        hyperparams: toy_hp(1e-9),
        median_valid_time: tv,
        mean_wasserstein: ew,
        score: f64::NAN,
        diverged: 0,
        failed: None,
    };
    let mut cands = vec![mk(0, 1.0, 1.0), mk(1, 2.0, 2.0), mk(2, 2.0, 1.0)];
    let best = score_and_select(&mut cands).unwrap();
    assert_eq!(cands[0].score, 0.0);
    assert_eq!(cands[1].score, 0.0);
    assert_eq!(cands[2].score, 0.5);
    // tie between the first two breaks toward larger valid time
    assert_eq!(best, 1);
}

#[test]
fn score_single_candidate_is_zero() {
    let mut cands = vec![CandidateScore {
        index: 0,
        hyperparams: toy_hp(1e-9),
        median_valid_time: 3.0,
        mean_wasserstein: 0.5,
        score: f64::NAN,
        diverged: 0,
        failed: None,
    }];
    let best = score_and_select(&mut cands).unwrap();
    assert_eq!(best, 0);
    assert_eq!(cands[0].score, 0.0);
}

#[test]
fn score_best_on_both_axes_wins() {
    let mk = |i, ew, tv| CandidateScore {
        index: i,
        hyperparams: toy_hp(1e-9),
        median_valid_time: tv,
        mean_wasserstein: ew,
        score: f64::NAN,
        diverged: 0,
        failed: None,
    };
    let mut cands = vec![mk(0, 0.9, 2.0), mk(1, 0.1, 5.0), mk(2, 0.5, 3.0)];
    assert_eq!(score_and_select(&mut cands).unwrap(), 1);
}

#[test]
fn score_bounds_and_extremal_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let n = rng.random_range(1..8usize);
        let mut cands: Vec<CandidateScore> = (0..n)
            .map(|i| CandidateScore {
                index: i,
                hyperparams: toy_hp(1e-9),
                median_valid_time: rng.random_range(0.0..5.0),
                mean_wasserstein: rng.random_range(0.0..2.0),
                score: f64::NAN,
                diverged: 0,
                failed: None,
            })
            .collect();
        score_and_select(&mut cands).unwrap();
        let max_tv = cands.iter().map(|c| c.median_valid_time).fold(0.0f64, f64::max);
        for c in &cands {
            assert!(c.score >= -1.0 - 1e-12 && c.score <= 1.0 + 1e-12);
            let is_minus_one = (c.score + 1.0).abs() < 1e-12;
            let expects = c.mean_wasserstein == 0.0 && c.median_valid_time == max_tv && max_tv > 0.0;
            assert_eq!(is_minus_one, expects, "score {} ew {} tv {}", c.score, c.mean_wasserstein, c.median_valid_time);
        }
    }
}

#[test]
fn argmin_invariant_under_axis_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = rng.random_range(2..10usize);
        let base: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.random_range(0.01..2.0), rng.random_range(0.01..5.0))).collect();
        let mk = |vals: &[(f64, f64)]| {
            vals.iter()
                .enumerate()
                .map(|(i, (ew, tv))| CandidateScore {
                    index: i,
                    hyperparams: toy_hp(1e-9),
                    median_valid_time: *tv,
                    mean_wasserstein: *ew,
                    score: f64::NAN,
                    diverged: 0,
                    failed: None,
                })
                .collect::<Vec<_>>()
        };
        let mut plain = mk(&base);
        let best_plain = score_and_select(&mut plain).unwrap();
        let s_ew = rng.random_range(0.1..10.0);
        let s_tv = rng.random_range(0.1..10.0);
        let scaled: Vec<(f64, f64)> = base.iter().map(|(e, t)| (e * s_ew, t * s_tv)).collect();
        let mut scaled = mk(&scaled);
        let best_scaled = score_and_select(&mut scaled).unwrap();
        assert_eq!(best_plain, best_scaled);
    }
}

#[test]
fn adequate_candidate_beats_crippled_regularization() {
    let data = sine_data(60.0, 0.01);
    let times = PartitionTimes { t1: 4.0, t2: 14.0, t3: 60.0 };
    let eval = EvalSettings { m1: 3, m2: 2, sync_time: 0.5, valid_threshold: 0.4, stochastic: false };
    let good = evaluate_candidate(&toy_hp(1e-9), &data, &times, &eval, None, 5).unwrap();
    let crippled = evaluate_candidate(&toy_hp(1e6), &data, &times, &eval, None, 5).unwrap();
    assert!(
        good.median_valid_time > crippled.median_valid_time,
        "valid times: good {} vs crippled {}",
        good.median_valid_time,
        crippled.median_valid_time
    );
    assert!(
        good.mean_wasserstein < crippled.mean_wasserstein,
        "wasserstein: good {} vs crippled {}",
        good.mean_wasserstein,
        crippled.mean_wasserstein
    );
}

#[test]
fn perfect_predictor_scores_perfectly() {
    // a candidate that learns a pure sine essentially exactly: long valid
    // time and near-zero long-window distance
    let n = 6001;
    let mut data = Array2::zeros((n, 1));
    for i in 0..n {
        let t = -60.0 + i as f64 * 0.01;
        data[[i, 0]] = (1.3 * t).sin();
    }
    let data = Trajectory::new(-60.0, 0.01, data, 0).unwrap();
    let times = PartitionTimes { t1: 4.0, t2: 14.0, t3: 60.0 };
    let eval = EvalSettings { m1: 2, m2: 2, sync_time: 1.0, valid_threshold: 0.4, stochastic: false };
    let score = evaluate_candidate(&toy_hp(1e-10), &data, &times, &eval, None, 8).unwrap();
    // short window is 4 time units; sync start within the first quarter
    assert!(score.median_valid_time > 2.0, "valid time {}", score.median_valid_time);
    assert!(score.mean_wasserstein < 0.1, "wasserstein {}", score.mean_wasserstein);
    assert_eq!(score.diverged, 0);
}

#[test]
fn grid_search_is_deterministic_and_matches_serial() {
    let data = sine_data(40.0, 0.01);
    let base = toy_hp(1e-9);
    let grid = GridSpec {
        axes: vec![
            GridAxis { name: "spectral_radius".to_string(), values: vec![0.5, 0.9] },
            GridAxis { name: "tikhonov".to_string(), values: vec![1e-9, 1e2] },
        ],
        m1: 2,
        m2: 1,
        t1: 3.0,
        t2: Some(13.0),
        t3: 40.0,
        seed: 77,
    };
    let eval = EvalSettings { m1: 2, m2: 1, sync_time: 0.5, valid_threshold: 0.4, stochastic: false };
    let a = grid_search(&grid, &base, &data, &eval, None).unwrap();
    let b = grid_search(&grid, &base, &data, &eval, None).unwrap();
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.index, y.index);
        assert_eq!(x.score, y.score);
        assert_eq!(x.median_valid_time, y.median_valid_time);
    }
    // serial re-evaluation in index order gives the same numbers
    for s in &a {
        let hp = grid.candidate(&base, s.index).unwrap();
        let times = PartitionTimes { t1: 3.0, t2: 13.0, t3: 40.0 };
        let solo =
            evaluate_candidate(&hp, &data, &times, &eval, None, crate::rng::fan_out(77, s.index as u64))
                .unwrap();
        assert_eq!(solo.median_valid_time, s.median_valid_time);
        assert_eq!(solo.mean_wasserstein, s.mean_wasserstein);
    }
}

#[test]
fn grid_single_cell_returns_one_candidate() {
    let data = sine_data(40.0, 0.01);
    let base = toy_hp(1e-9);
    let grid = GridSpec {
        axes: vec![GridAxis { name: "leakage".to_string(), values: vec![1.0] }],
        m1: 1,
        m2: 1,
        t1: 3.0,
        t2: Some(13.0),
        t3: 40.0,
        seed: 1,
    };
    let eval = EvalSettings { m1: 1, m2: 1, sync_time: 0.5, valid_threshold: 0.4, stochastic: false };
    let out = grid_search(&grid, &base, &data, &eval, None).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].score, 0.0);
}

#[test]
fn m1_equal_one_uses_single_valid_time() {
    let data = sine_data(40.0, 0.01);
    let times = PartitionTimes { t1: 3.0, t2: 13.0, t3: 40.0 };
    let eval = EvalSettings { m1: 1, m2: 1, sync_time: 0.5, valid_threshold: 0.4, stochastic: false };
    let s = evaluate_candidate(&toy_hp(1e-9), &data, &times, &eval, None, 4).unwrap();
    assert!(s.median_valid_time >= 0.0);
}

#[test]
fn unknown_axis_name_is_rejected() {
    let mut hp = toy_hp(1e-9);
    assert!(apply_axis(&mut hp, "does_not_exist", 1.0).is_err());
    assert!(apply_axis(&mut hp, "spectral_radius", 0.8).is_ok());
    assert_eq!(hp.spectral_radius, 0.8);
}
