//! Low-level steppers: classical RK4 with step-constant noise, the Lorenz
//! right-hand side, and the Ikeda map iterate.

use super::IkedaParams;

/// Noiseless Lorenz '63 right-hand side at fixed (sigma, beta, rho).
pub fn lorenz_rhs(state: &[f64], sigma: f64, beta: f64, rho: f64, out: &mut [f64]) {
    let (x, y, z) = (state[0], state[1], state[2]);
    out[0] = sigma * (y - x);
    out[1] = x * (rho - z) - y;
    out[2] = x * y - beta * z;
}

/// One classical RK4 step of `d(state)/dt = rhs(t, state) + noise`.
///
/// The noise vector is drawn once per step by the caller and held constant
/// through all four stages, so it acts as a piecewise-constant forcing.
pub fn rk4_noisy_step<F>(mut rhs: F, state: &[f64], t: f64, dt: f64, noise: &[f64], out: &mut [f64])
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    debug_assert!(dt > 0.0);
    debug_assert_eq!(noise.len(), state.len());
    let n = state.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    rhs(t, state, &mut k1);
    add_noise(&mut k1, noise);

    for i in 0..n {
        tmp[i] = state[i] + 0.5 * dt * k1[i];
    }
    rhs(t + 0.5 * dt, &tmp, &mut k2);
    add_noise(&mut k2, noise);

    for i in 0..n {
        tmp[i] = state[i] + 0.5 * dt * k2[i];
    }
    rhs(t + 0.5 * dt, &tmp, &mut k3);
    add_noise(&mut k3, noise);

    for i in 0..n {
        tmp[i] = state[i] + dt * k3[i];
    }
    rhs(t + dt, &tmp, &mut k4);
    add_noise(&mut k4, noise);

    for i in 0..n {
        out[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

#[inline]
fn add_noise(k: &mut [f64], noise: &[f64]) {
    for (ki, ni) in k.iter_mut().zip(noise) {
        *ki += ni;
    }
}

/// One iterate of the Ikeda map at parameter value `eta_n`, plus additive noise.
pub fn ikeda_step(state: [f64; 2], eta_n: f64, params: &IkedaParams, noise: [f64; 2]) -> [f64; 2] {
    let (x, y) = (state[0], state[1]);
    let c = 1.0 + x * x + y * y;
    let phi = params.gamma - eta_n / c;
    let (sin_phi, cos_phi) = phi.sin_cos();
    [
        params.a + params.b * (x * cos_phi - y * sin_phi) + noise[0],
        params.b * (x * sin_phi + y * cos_phi) + noise[1],
    ]
}
