//! Dense symmetric linear algebra used by readout training, plus a sparse
//! spectral-radius estimator. Everything here is f64 and single-threaded;
//! callers parallelize across jobs, not inside them.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

const CHOL_BLOCK: usize = 128;

/// Accumulate `g += x^T x` touching only the upper triangle (diagonal blocks
/// included). Pair with [`symmetrize_upper`] once accumulation finishes.
pub fn syrk_upper(g: &mut Array2<f64>, x: &ArrayView2<f64>) {
    let f = g.nrows();
    debug_assert_eq!(g.ncols(), f);
    debug_assert_eq!(x.ncols(), f);
    let nb = 256;
    let mut j0 = 0;
    while j0 < f {
        let j1 = (j0 + nb).min(f);
        // block column [j0, j1): update blocks at or above the diagonal
        let xj = x.slice(s![.., j0..j1]);
        let mut i0 = 0;
        while i0 <= j0 {
            let i1 = (i0 + nb).min(f).min(j1);
            let xi = x.slice(s![.., i0..i1]);
            let mut gij = g.slice_mut(s![i0..i1, j0..j1]);
            general_mat_mul(1.0, &xi.t(), &xj, 1.0, &mut gij);
            i0 = i1;
            if i0 >= j1 {
                break;
            }
        }
        j0 = j1;
    }
}

/// Mirror the upper triangle into the lower one.
pub fn symmetrize_upper(g: &mut Array2<f64>) {
    let n = g.nrows();
    for i in 1..n {
        for j in 0..i {
            g[[i, j]] = g[[j, i]];
        }
    }
}

/// Blocked in-place lower Cholesky factorization. Fails on a non-positive
/// pivot, which for our use means the regularized Gram matrix was not
/// numerically positive definite.
pub fn cholesky_in_place(a: &mut Array2<f64>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::input("cholesky needs a square matrix".to_string()));
    }
    let mut j0 = 0;
    while j0 < n {
        let j1 = (j0 + CHOL_BLOCK).min(n);
        factor_diag_block(a, j0, j1)?;
        if j1 < n {
            // panel solve on raw rows: A[j1.., j0..j1] <- A[j1.., j0..j1] * L_jj^{-T}
            {
                let buf = a.as_slice_mut().expect("owned row-major matrix");
                let (top, bottom) = buf.split_at_mut(j1 * n);
                for bi in 0..(n - j1) {
                    let row_i = &mut bottom[bi * n..bi * n + j1];
                    for k in j0..j1 {
                        let row_k = &top[k * n..k * n + k];
                        let mut v = row_i[k];
                        for p in j0..k {
                            v -= row_i[p] * row_k[p];
                        }
                        row_i[k] = v / top[k * n + k];
                    }
                }
            }
            // trailing update: A[j1.., j1..] -= panel panel^T
            let (top, bottom) = a.view_mut().split_at(Axis(0), j1);
            drop(top);
            let (panel, mut trailing) = bottom.split_at(Axis(1), j1);
            let panel = panel.slice(s![.., j0..j1]);
            general_mat_mul(-1.0, &panel, &panel.t(), 1.0, &mut trailing);
        }
        j0 = j1;
    }
    // zero the strictly-upper part so the factor is usable as stored
    for i in 0..n {
        for j in (i + 1)..n {
            a[[i, j]] = 0.0;
        }
    }
    Ok(())
}

fn factor_diag_block(a: &mut Array2<f64>, j0: usize, j1: usize) -> Result<()> {
    for k in j0..j1 {
        let mut d = a[[k, k]];
        for p in j0..k {
            d -= a[[k, p]] * a[[k, p]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::numeric(format!(
                "matrix is not positive definite (pivot {k}: {d:e})"
            )));
        }
        let l = d.sqrt();
        a[[k, k]] = l;
        for i in (k + 1)..j1 {
            let mut v = a[[i, k]];
            for p in j0..k {
                v -= a[[i, p]] * a[[k, p]];
            }
            a[[i, k]] = v / l;
        }
    }
    Ok(())
}

/// Solve `A X = B` for SPD `A` (n x n) and `B` (n x k) via Cholesky.
/// `A` is consumed as the factorization workspace.
pub fn solve_spd(mut a: Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::input(format!(
            "solve_spd shape mismatch: A is {n}x{n}, B has {} rows",
            b.nrows()
        )));
    }
    cholesky_in_place(&mut a)?;
    let mut x = b.clone();
    let k = x.ncols();
    // forward: L y = b
    for i in 0..n {
        for c in 0..k {
            let mut v = x[[i, c]];
            for p in 0..i {
                v -= a[[i, p]] * x[[p, c]];
            }
            x[[i, c]] = v / a[[i, i]];
        }
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        for c in 0..k {
            let mut v = x[[i, c]];
            for p in (i + 1)..n {
                v -= a[[p, i]] * x[[p, c]];
            }
            x[[i, c]] = v / a[[i, i]];
        }
    }
    Ok(x)
}

const RECURRENCE_MAX_ORDER: usize = 8;

/// Spectral radius (largest eigenvalue modulus) of a linear operator given
/// as a matvec.
///
/// Runs the power sequence `w_{j+1} = A w_j` and, over a sliding window,
/// fits the lowest-order linear recurrence the sequence satisfies. The
/// dominant root modulus of the recurrence polynomial is the radius; an
/// adaptive order up to 8 resolves the common hard cases (dominant complex
/// pairs, several near-tied moduli) where plain power iteration stalls.
pub fn spectral_radius(
    dim: usize,
    mut matvec: impl FnMut(&[f64], &mut [f64]),
    seed: u64,
) -> Result<f64> {
    if dim == 0 {
        return Err(Error::input("spectral_radius of an empty operator".to_string()));
    }
    let order = RECURRENCE_MAX_ORDER.min(dim);
    let window_len = order + 1;

    // deterministic pseudo-random start vector
    let mut start: Vec<f64> = (0..dim)
        .map(|i| {
            let h = crate::rng::fan_out(seed, i as u64);
            (h as f64 / u64::MAX as f64) - 0.5
        })
        .collect();
    normalize(&mut start);

    let mut window: Vec<Vec<f64>> = vec![start];
    let mut prev_estimate = f64::NAN;
    let mut stable = 0;
    let mut best = 0.0f64;

    for _ in 0..20_000 {
        let mut next = vec![0.0; dim];
        matvec(window.last().unwrap(), &mut next);
        let nn = norm(&next);
        if nn == 0.0 {
            return Ok(0.0); // power sequence died: only nilpotent directions
        }
        if !nn.is_finite() {
            return Err(Error::numeric("spectral radius power sequence overflowed".to_string()));
        }
        window.push(next);
        if window.len() > window_len {
            window.remove(0);
        }
        // keep the window scale sane without breaking the recurrence
        if nn > 1e100 || nn < 1e-100 {
            for w in window.iter_mut() {
                for v in w.iter_mut() {
                    *v /= nn;
                }
            }
        }
        if window.len() < window_len {
            continue;
        }

        if let Some(r) = fit_recurrence_radius(&window) {
            best = r;
            if (r - prev_estimate).abs() <= 1e-10 * r.max(1e-300) {
                stable += 1;
                if stable >= 2 {
                    return Ok(r);
                }
            } else {
                stable = 0;
            }
            prev_estimate = r;
        }
    }
    Ok(best)
}

/// Try recurrence orders 1..=order and return the dominant root modulus of
/// the lowest order whose fit residual is negligible, or of the best
/// available fit otherwise.
fn fit_recurrence_radius(window: &[Vec<f64>]) -> Option<f64> {
    let m = window.len() - 1; // max order
    let target = &window[m];
    let tnorm = norm(target);
    if tnorm == 0.0 {
        return Some(0.0);
    }
    let mut fallback: Option<(f64, f64)> = None; // (residual, radius)
    for k in 1..=m {
        let basis = &window[m - k..m];
        // normal equations for target ~ sum c_j basis_j, tiny ridge for
        // the nearly collinear early iterations
        let mut g = Array2::zeros((k, k));
        let mut rhs = Array2::zeros((k, 1));
        for i in 0..k {
            for j in i..k {
                let v = dot(&basis[i], &basis[j]);
                g[[i, j]] = v;
                g[[j, i]] = v;
            }
            rhs[[i, 0]] = dot(&basis[i], target);
        }
        let ridge = 1e-14 * (g.diag().sum() / k as f64).max(f64::MIN_POSITIVE);
        for i in 0..k {
            g[[i, i]] += ridge;
        }
        let Ok(c) = solve_spd(g, &rhs) else { continue };
        // residual of the fitted recurrence
        let mut resid = 0.0;
        for idx in 0..target.len() {
            let mut v = target[idx];
            for j in 0..k {
                v -= c[[j, 0]] * basis[j][idx];
            }
            resid += v * v;
        }
        let resid = resid.sqrt();
        let coeffs: Vec<f64> = (0..k).map(|j| c[[j, 0]]).collect();
        let radius = dominant_root_modulus(&coeffs);
        if !radius.is_finite() {
            continue;
        }
        if resid <= 1e-11 * tnorm {
            return Some(radius);
        }
        match fallback {
            Some((r, _)) if r <= resid => {}
            _ => fallback = Some((resid, radius)),
        }
    }
    fallback.map(|(_, r)| r)
}

/// Largest root modulus of `z^k - c_{k-1} z^{k-1} - ... - c_0` via
/// Durand-Kerner iteration.
fn dominant_root_modulus(c: &[f64]) -> f64 {
    use rustfft::num_complex::Complex64;
    let k = c.len();
    if k == 1 {
        return c[0].abs();
    }
    // monic polynomial p(z) = z^k - sum c_j z^j
    let eval = |z: Complex64| -> Complex64 {
        let mut p = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            p = p * z - c[j];
        }
        p
    };
    // Cauchy-style radius bound seeds the root ring
    let bound = 1.0 + c.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let seed_angle = Complex64::new(0.4, 0.9) / Complex64::new(0.4, 0.9).norm();
    let mut roots: Vec<Complex64> = (0..k)
        .map(|i| seed_angle.powi(i as i32 + 1) * (0.5 * bound))
        .collect();
    for _ in 0..200 {
        let mut moved = 0.0f64;
        for i in 0..k {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..k {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() < 1e-300 {
                continue;
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            moved = moved.max(delta.norm());
        }
        if moved < 1e-13 * bound {
            break;
        }
    }
    roots.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    } else {
        a[0] = 1.0;
    }
}
