use super::*;
use crate::dynamics::{simulate, LorenzParams, RampSchedule, SystemSpec, Trajectory};
use approx::assert_relative_eq;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_hp(arch: Architecture) -> HyperParams {
    HyperParams {
        n_nodes: 50,
        mean_degree: 3.0,
        spectral_radius: 0.6,
        input_scale: 0.4,
        control_scale: Some(0.3),
        leakage: 1.0,
        tikhonov: 1e-8,
        activation_bias: 0.0,
        control_slope: 0.0,
        control_intercept: 1.0,
        obs_noise: 0.0,
        training_passes: 1,
        train_length: 10.0,
        rc_dt: 0.01,
        architecture: arch,
    }
}

fn dense_adjacency(topo: &ReservoirTopology) -> Array2<f64> {
    let mut a = Array2::zeros((topo.n, topo.n));
    for (r, c, w) in topo.adjacency.coo() {
        a[[r as usize, c as usize]] = w;
    }
    a
}

#[test]
fn topology_nonzero_count_near_binomial_mean() {
    let mut hp = small_hp(Architecture::Plain);
    hp.n_nodes = 100;
    let topo = build_topology(&hp, 3, 1).unwrap();
    let nnz = topo.adjacency.nnz() as i64;
    assert!((nnz - 300).abs() <= 60, "nnz {nnz}");
}

#[test]
fn topology_spectral_radius_matches_dense_eigenvalues() {
    let mut hp = small_hp(Architecture::Plain);
    hp.n_nodes = 150;
    hp.spectral_radius = 0.7;
    let topo = build_topology(&hp, 3, 9).unwrap();
    let a = dense_adjacency(&topo);
    let dm = nalgebra::DMatrix::from_fn(150, 150, |i, j| a[[i, j]]);
    let radius = dm.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    assert!((radius - 0.7).abs() <= 1e-6, "dense radius {radius}");
}

#[test]
fn topology_is_deterministic_in_seed() {
    let hp = small_hp(Architecture::Plain);
    let a = build_topology(&hp, 3, 12).unwrap();
    let b = build_topology(&hp, 3, 12).unwrap();
    assert_eq!(a, b);
    let c = build_topology(&hp, 3, 13).unwrap();
    assert_ne!(a, c);
}

#[test]
fn split_control_column_half_populated() {
    let mut hp = small_hp(Architecture::SplitQuadratic);
    hp.n_nodes = 200;
    let mut nonzero = 0usize;
    let mut total = 0usize;
    for seed in 0..30 {
        let topo = build_topology(&hp, 2, seed).unwrap();
        match &topo.input {
            InputLayer::Split { s_weights, .. } => {
                nonzero += s_weights.iter().filter(|w| **w != 0.0).count();
                total += s_weights.len();
            }
            _ => panic!("expected split input layer"),
        }
    }
    let frac = nonzero as f64 / total as f64;
    assert!((frac - 0.5).abs() < 0.03, "control column fill {frac}");
}

#[test]
fn step_with_zero_leakage_is_identity() {
    let mut hp = small_hp(Architecture::Plain);
    // leakage 0 is outside the valid range; emulate alpha -> 0 by checking
    // the update formula directly at the smallest accepted leakage
    hp.leakage = 1.0;
    let topo = build_topology(&hp, 2, 3).unwrap();
    let r = vec![0.0; topo.n];
    let u = vec![0.0; 3];
    let mut hp0 = hp.clone();
    hp0.activation_bias = 0.0;
    let next = reservoir_step(&r, &u, &topo, &hp0);
    assert!(next.iter().all(|v| *v == 0.0));
}

#[test]
fn step_matches_dense_elementwise_oracle() {
    let mut hp = small_hp(Architecture::Plain);
    hp.n_nodes = 4;
    hp.mean_degree = 2.0;
    hp.leakage = 0.7;
    hp.activation_bias = 0.25;
    let topo = build_topology(&hp, 2, 21).unwrap();
    let a = dense_adjacency(&topo);
    let (cols, weights) = match &topo.input {
        InputLayer::Plain { cols, weights } => (cols.clone(), weights.clone()),
        _ => unreachable!(),
    };
    let r = vec![0.1, -0.2, 0.3, 0.05];
    let u = vec![0.5, -0.4, 1.0];
    let got = reservoir_step(&r, &u, &topo, &hp);
    for i in 0..4 {
        let mut pre = 0.25;
        for j in 0..4 {
            pre += a[[i, j]] * r[j];
        }
        pre += weights[i] * u[cols[i] as usize];
        let want = 0.3 * r[i] + 0.7 * pre.tanh();
        assert_relative_eq!(got[i], want, max_relative = 1e-14);
    }
}

#[test]
fn drive_single_input_equals_single_step() {
    let hp = small_hp(Architecture::Plain);
    let topo = build_topology(&hp, 2, 4).unwrap();
    let u = ndarray::arr2(&[[0.3, -0.1, 1.0]]);
    let r0 = vec![0.0; topo.n];
    let states = drive_open_loop(&topo, &hp, &u.view(), &r0).unwrap();
    let direct = reservoir_step(&r0, &[0.3, -0.1, 1.0], &topo, &hp);
    assert_eq!(states.row(0).to_vec(), direct);
}

#[test]
fn drive_states_bounded_by_tanh_range() {
    let hp = small_hp(Architecture::Plain); // leakage 1
    let topo = build_topology(&hp, 2, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inputs = Array2::from_shape_fn((200, 3), |_| rng.random_range(-3.0..3.0));
    let states = drive_open_loop(&topo, &hp, &inputs.view(), &vec![0.0; topo.n]).unwrap();
    assert!(states.iter().all(|v| v.abs() <= 1.0));
}

#[test]
fn drive_concatenation_property() {
    let hp = small_hp(Architecture::Plain);
    let topo = build_topology(&hp, 2, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = Array2::from_shape_fn((60, 3), |_| rng.random_range(-1.0..1.0));
    let full = drive_open_loop(&topo, &hp, &inputs.view(), &vec![0.0; topo.n]).unwrap();
    let first = drive_open_loop(&topo, &hp, &inputs.slice(ndarray::s![..25, ..]), &vec![0.0; topo.n]).unwrap();
    let second = drive_open_loop(
        &topo,
        &hp,
        &inputs.slice(ndarray::s![25.., ..]),
        first.row(24).as_slice().unwrap(),
    )
    .unwrap();
    for i in 0..35 {
        for j in 0..topo.n {
            assert_relative_eq!(full[[25 + i, j]], second[[i, j]], max_relative = 1e-14);
        }
    }
}

/// Plain gradient descent on `mean ||W f - v||^2 + lambda ||W - P||^2`,
/// independent of the normal-equations path.
fn gradient_descent_readout(
    features: &ArrayView2<f64>,
    targets: &ArrayView2<f64>,
    lambda: f64,
    prior: Option<&Array2<f64>>,
    iterations: usize,
) -> Array2<f64> {
    let n = features.nrows() as f64;
    let g = features.t().dot(features) / n;
    let h = targets.t().dot(features) / n;
    let l = targets.ncols();
    let f = features.ncols();
    let step = 1.0 / (2.0 * (g.diag().sum() + lambda));
    let mut w = Array2::zeros((l, f));
    for _ in 0..iterations {
        // grad = 2 (W G - H) + 2 lambda (W - P)
        let mut grad = w.dot(&g) - &h;
        grad.mapv_inplace(|v| 2.0 * v);
        grad += &(&w * (2.0 * lambda));
        if let Some(p) = prior {
            grad -= &(p * (2.0 * lambda));
        }
        w -= &(&grad * step);
    }
    w
}

#[test]
fn readout_recovers_exact_linear_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let features = Array2::from_shape_fn((60, 7), |_| rng.random_range(-1.0..1.0));
    let w_true = Array2::from_shape_fn((2, 7), |_| rng.random_range(-1.0..1.0));
    let targets = features.dot(&w_true.t());
    let w = train_readout(&features, &targets, 1e-12, None).unwrap();
    for (a, b) in w.iter().zip(w_true.iter()) {
        assert!((a - b).abs() < 1e-6, "recovered {a} vs {b}");
    }
}

#[test]
fn readout_huge_lambda_returns_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let features = Array2::from_shape_fn((40, 5), |_| rng.random_range(-1.0..1.0));
    let targets = Array2::from_shape_fn((40, 2), |_| rng.random_range(-1.0..1.0));
    let prior = Array2::from_shape_fn((2, 5), |_| rng.random_range(-1.0..1.0));
    let w = train_readout(&features, &targets, 1e12, Some(&prior)).unwrap();
    for (a, b) in w.iter().zip(prior.iter()) {
        assert!((a - b).abs() < 1e-4);
    }
}

#[test]
fn readout_matches_gradient_descent_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let features = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
    let targets = Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0..1.0));
    for (lambda, prior) in [
        (1e-3, None),
        (0.1, Some(Array2::from_shape_fn((2, 3), |_| rng.random_range(-0.5..0.5)))),
    ] {
        let w = train_readout(&features, &targets, lambda, prior.as_ref()).unwrap();
        let oracle =
            gradient_descent_readout(&features.view(), &targets.view(), lambda, prior.as_ref(), 300_000);
        let diff = (&w - &oracle).iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff <= 1e-6 * scale.max(1.0), "diff {diff}");
    }
}

#[test]
fn readout_normal_equation_residual_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let features = Array2::from_shape_fn((80, 9), |_| rng.random_range(-1.0..1.0));
    let targets = Array2::from_shape_fn((80, 3), |_| rng.random_range(-1.0..1.0));
    let prior = Array2::from_shape_fn((3, 9), |_| rng.random_range(-1.0..1.0));
    let lambda = 1e-4;
    let w = train_readout(&features, &targets, lambda, Some(&prior)).unwrap();
    let n = features.nrows() as f64;
    let g = features.t().dot(&features) / n;
    let h = targets.t().dot(&features) / n;
    // (G + lambda I) W^T - H^T - lambda P^T = 0
    let mut lhs = g.dot(&w.t());
    lhs += &(w.t().to_owned() * lambda);
    lhs -= &h.t();
    lhs -= &(prior.t().to_owned() * lambda);
    let resid = lhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(resid <= 1e-8 * hn, "normal-equation residual {resid}");
}

#[test]
fn readout_singular_without_regularization_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let col = Array2::from_shape_fn((30, 1), |_| rng.random_range(-1.0..1.0));
    // duplicate column makes the Gram singular
    let mut features = Array2::zeros((30, 2));
    features.column_mut(0).assign(&col.column(0));
    features.column_mut(1).assign(&col.column(0));
    let targets = Array2::from_shape_fn((30, 1), |_| rng.random_range(-1.0..1.0));
    let err = train_readout(&features, &targets, 0.0, None).unwrap_err();
    assert!(err.to_string().contains("tikhonov"), "error was: {err}");
}

#[test]
fn residuals_recover_injected_noise_scale() {
    // targets = linear map of features plus uniform noise of half-width h:
    // residual standard deviation approaches h / sqrt(3)
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 0.1;
    let features = Array2::from_shape_fn((3000, 6), |_| rng.random_range(-1.0..1.0));
    let w_true = Array2::from_shape_fn((2, 6), |_| rng.random_range(-1.0..1.0));
    let mut targets = features.dot(&w_true.t());
    targets.mapv_inplace(|v| v + rng.random_range(-h..h));
    let w = train_readout(&features, &targets, 1e-9, None).unwrap();
    let resid = compute_residuals(&w, &features, &targets);
    for c in 0..2 {
        let col = resid.column(c);
        let mean = col.sum() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        let std = var.sqrt();
        let expect = h / 3.0f64.sqrt();
        assert!(
            (std - expect).abs() < 0.3 * expect,
            "component {c}: std {std} vs {expect}"
        );
    }
}

#[test]
fn residuals_vanish_for_exactly_linear_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let features = Array2::from_shape_fn((100, 5), |_| rng.random_range(-1.0..1.0));
    let w_true = Array2::from_shape_fn((2, 5), |_| rng.random_range(-1.0..1.0));
    let targets = features.dot(&w_true.t());
    let w = train_readout(&features, &targets, 1e-12, None).unwrap();
    let resid = compute_residuals(&w, &features, &targets);
    assert!(resid.iter().all(|v| v.abs() < 1e-8));
}

fn rotation_trajectory(n: usize, theta: f64, dt: f64, t0: f64) -> Trajectory {
    let mut data = Array2::zeros((n, 2));
    for i in 0..n {
        let ang = theta * i as f64;
        data[[i, 0]] = ang.cos();
        data[[i, 1]] = ang.sin();
    }
    Trajectory::new(t0, dt, data, 0).unwrap()
}

#[test]
fn train_model_is_seed_reproducible_and_pool_sized() {
    let traj = rotation_trajectory(1200, 0.07, 0.01, -12.0 + 0.01);
    let mut hp = small_hp(Architecture::Plain);
    hp.obs_noise = 1e-4;
    hp.training_passes = 3;
    hp.train_length = 8.0;
    let spec = TrainSpec {
        data: &traj,
        window: (traj.end_time() - 8.0, traj.end_time()),
        rms_window: (traj.t0, traj.end_time()),
        hyperparams: &hp,
        knowledge: None,
        seed: 42,
    };
    let a = train_model(&spec).unwrap();
    let b = train_model(&spec).unwrap();
    assert_eq!(a.readout, b.readout);
    assert_eq!(a.residual_pool, b.residual_pool);
    assert_eq!(a.residual_pool.nrows(), 800); // 8.0 time units of pairs
}

#[test]
fn closed_loop_reproduces_linear_rotation() {
    // a discrete rotation is exactly representable by the linear readout;
    // a model trained to machine precision must track it in closed loop
    let theta = 0.07;
    let traj = rotation_trajectory(3000, theta, 0.01, 0.0);
    let mut hp = small_hp(Architecture::Plain);
    hp.n_nodes = 100;
    hp.spectral_radius = 0.5;
    hp.input_scale = 0.3;
    hp.tikhonov = 1e-13;
    hp.train_length = 25.0;
    let spec = TrainSpec {
        data: &traj,
        window: (traj.end_time() - 25.0, traj.end_time()),
        rms_window: (0.0, traj.end_time()),
        hyperparams: &hp,
        knowledge: None,
        seed: 7,
    };
    let model = train_model(&spec).unwrap();
    let sync = traj.slice_time(traj.end_time() - 1.0, traj.end_time()).unwrap();
    let pred = predict(&model, &sync, 100, false, 1).unwrap();
    let out = pred.trajectory.expect("prediction produced");
    assert!(!pred.diverged);
    let base = 3000usize;
    for i in 0..100 {
        let ang = theta * (base + i) as f64;
        assert!(
            (out.data[[i, 0]] - ang.cos()).abs() < 1e-6
                && (out.data[[i, 1]] - ang.sin()).abs() < 1e-6,
            "step {i}: ({}, {}) vs ({}, {})",
            out.data[[i, 0]],
            out.data[[i, 1]],
            ang.cos(),
            ang.sin()
        );
    }
}

#[test]
fn predict_stochastic_replay_is_deterministic() {
    let traj = rotation_trajectory(2000, 0.07, 0.01, 0.0);
    let mut hp = small_hp(Architecture::Plain);
    hp.train_length = 15.0;
    let spec = TrainSpec {
        data: &traj,
        window: (traj.end_time() - 15.0, traj.end_time()),
        rms_window: (0.0, traj.end_time()),
        hyperparams: &hp,
        knowledge: None,
        seed: 3,
    };
    let model = train_model(&spec).unwrap();
    let sync = traj.slice_time(traj.end_time() - 1.0, traj.end_time()).unwrap();
    let a = predict(&model, &sync, 50, true, 11).unwrap();
    let b = predict(&model, &sync, 50, true, 11).unwrap();
    assert_eq!(a.trajectory.unwrap().data, b.trajectory.unwrap().data);
    let c = predict(&model, &sync, 50, true, 12).unwrap();
    assert_ne!(a.reservoir_state, c.reservoir_state);
}

#[test]
fn predict_zero_steps_keeps_synchronized_state() {
    let traj = rotation_trajectory(2000, 0.07, 0.01, 0.0);
    let mut hp = small_hp(Architecture::Plain);
    hp.train_length = 15.0;
    let spec = TrainSpec {
        data: &traj,
        window: (traj.end_time() - 15.0, traj.end_time()),
        rms_window: (0.0, traj.end_time()),
        hyperparams: &hp,
        knowledge: None,
        seed: 3,
    };
    let model = train_model(&spec).unwrap();
    let sync = traj.slice_time(traj.end_time() - 1.0, traj.end_time()).unwrap();
    let p = predict(&model, &sync, 0, false, 0).unwrap();
    assert!(p.trajectory.is_none());
    assert!(!p.diverged);
    assert!(p.reservoir_state.iter().any(|v| *v != 0.0));
}

#[test]
fn quadratic_feature_length_and_mismatch_rejection() {
    let hp = small_hp(Architecture::SplitQuadratic);
    assert_eq!(hp.feature_len(2), 2 * 50 + 3 + 1);
    let plain = small_hp(Architecture::Plain);
    assert_eq!(plain.feature_len(2), 50 + 3 + 1);
    let hybrid = small_hp(Architecture::Hybrid);
    assert_eq!(hybrid.feature_len(3), 50 + 3 + 1 + 3);

    // a hand-assembled model with an inconsistent readout is rejected
    let traj = rotation_trajectory(2000, 0.07, 0.01, 0.0);
    let mut hp = small_hp(Architecture::Plain);
    hp.train_length = 15.0;
    let spec = TrainSpec {
        data: &traj,
        window: (traj.end_time() - 15.0, traj.end_time()),
        rms_window: (0.0, traj.end_time()),
        hyperparams: &hp,
        knowledge: None,
        seed: 3,
    };
    let mut model = train_model(&spec).unwrap();
    model.readout = Array2::zeros((2, 10)); // wrong feature length
    let sync = traj.slice_time(traj.end_time() - 1.0, traj.end_time()).unwrap();
    assert!(predict(&model, &sync, 5, false, 0).is_err());
}

#[test]
fn knowledge_model_with_true_parameters_matches_simulate() {
    let ramp = RampSchedule::new(154.0, 8.0, 100.0).unwrap();
    let sys = SystemSpec::Lorenz(LorenzParams {
        sigma: 10.0,
        beta: 8.0 / 3.0,
        rho: ramp,
        noise_bound: 0.0,
    });
    let km = KnowledgeModel { sigma: 10.0, beta: 8.0 / 3.0, rho: ramp, dt: 0.01 };
    let v = [3.0, -2.0, 140.0];
    let truth = simulate(&sys, &v, 5.0, 5.01, 0).unwrap();
    let kb = km.step(&v, 5.0);
    for c in 0..3 {
        assert!((kb[c] - truth.data[[1, c]]).abs() < 1e-10);
    }
}

#[test]
fn knowledge_model_mismatch_drifts_at_true_fixed_point() {
    // the true system's fixed point is not a fixed point of the wrong-beta model
    let rho: f64 = 23.0;
    let beta_true: f64 = 8.0 / 3.0;
    let c = (beta_true * (rho - 1.0)).sqrt();
    let fp = [c, c, rho - 1.0];
    let km = KnowledgeModel {
        sigma: 20.0,
        beta: 16.0 / 3.0,
        rho: RampSchedule::constant(rho),
        dt: 0.01,
    };
    let next = km.step(&fp, 0.0);
    let drift: f64 = next.iter().zip(&fp).map(|(a, b)| (a - b).abs()).sum();
    assert!(drift > 1e-4, "expected visible drift, got {drift}");
}

#[test]
fn knowledge_step_matches_independent_rk4() {
    // single step from (1,1,1) with sigma=20, beta=16/3, rho=29.5, evaluated
    // by a hand-rolled RK4 written directly in the test
    let km = KnowledgeModel {
        sigma: 20.0,
        beta: 16.0 / 3.0,
        rho: RampSchedule::constant(29.5),
        dt: 0.01,
    };
    let got = km.step(&[1.0, 1.0, 1.0], 0.0);

    let f = |s: [f64; 3]| -> [f64; 3] {
        [
            20.0 * (s[1] - s[0]),
            s[0] * (29.5 - s[2]) - s[1],
            s[0] * s[1] - 16.0 / 3.0 * s[2],
        ]
    };
    let y = [1.0, 1.0, 1.0];
    let h = 0.01;
    let k1 = f(y);
    let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1], y[2] + 0.5 * h * k1[2]]);
    let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1], y[2] + 0.5 * h * k2[2]]);
    let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1], y[2] + h * k3[2]]);
    for c in 0..3 {
        let want = y[c] + h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        assert_relative_eq!(got[c], want, max_relative = 1e-14);
    }
}

#[test]
fn hybrid_prior_places_identity_on_knowledge_block() {
    let p = hybrid_prior(3, 57);
    assert_eq!(p.shape(), &[3, 57]);
    for i in 0..3 {
        for j in 0..57 {
            let want = if j == 54 + i { 1.0 } else { 0.0 };
            assert_eq!(p[[i, j]], want);
        }
    }
}
