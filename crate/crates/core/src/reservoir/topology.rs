//! Reservoir construction: sparse Erdos-Renyi adjacency rescaled to a target
//! spectral radius, and the one-nonzero-per-row input layer (or the split
//! variant with a separately coupled control signal).

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::HyperParams;
use crate::error::{Error, Result};
use crate::linalg::spectral_radius;
use crate::rng::{fan_out, stream_rng, Stream};

/// Row-major compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[idx] * x[self.cols[idx] as usize];
            }
            y[i] = acc;
        }
    }

    pub fn scale(&mut self, f: f64) {
        for v in &mut self.vals {
            *v *= f;
        }
    }

    /// (row, col, weight) triplets in row-major order.
    pub fn coo(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |idx| (i as u32, self.cols[idx], self.vals[idx]))
        })
    }

    pub fn from_coo(n: usize, triplets: &[(u32, u32, f64)]) -> Result<Self> {
        let mut row_ptr = vec![0usize; n + 1];
        for &(r, c, _) in triplets {
            if r as usize >= n || c as usize >= n {
                return Err(Error::format("COO index out of bounds".to_string()));
            }
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut cols = vec![0u32; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut cursor = row_ptr.clone();
        for &(r, c, w) in triplets {
            let at = cursor[r as usize];
            cols[at] = c;
            vals[at] = w;
            cursor[r as usize] += 1;
        }
        Ok(Self { n, row_ptr, cols, vals })
    }
}

/// Input coupling. The input vector is always u = [v; s] with s at index L.
#[derive(Debug, Clone, PartialEq)]
pub enum InputLayer {
    /// One nonzero per row anywhere in the K = L+1 columns of u.
    Plain { cols: Vec<u32>, weights: Vec<f64> },
    /// One nonzero per row over the L columns of v, plus a dense column for
    /// s populated on roughly half the rows.
    Split { v_cols: Vec<u32>, v_weights: Vec<f64>, s_weights: Vec<f64> },
}

impl InputLayer {
    /// out += W_in u
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        match self {
            InputLayer::Plain { cols, weights } => {
                for i in 0..out.len() {
                    out[i] += weights[i] * u[cols[i] as usize];
                }
            }
            InputLayer::Split { v_cols, v_weights, s_weights } => {
                let s = u[u.len() - 1];
                for i in 0..out.len() {
                    out[i] += v_weights[i] * u[v_cols[i] as usize] + s_weights[i] * s;
                }
            }
        }
    }
}

/// Fixed random part of a reservoir: adjacency + input layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirTopology {
    pub n: usize,
    /// State dimension L of the driving system.
    pub l: usize,
    /// Input dimension K = L + 1 (state plus control signal).
    pub k: usize,
    pub adjacency: CsrMatrix,
    pub input: InputLayer,
    pub seed: u64,
}

/// Build the random topology for state dimension `l`, deterministically in
/// `seed`. The adjacency draws each directed edge with probability
/// mean_degree / n and uniform weights, then rescales so its spectral radius
/// matches `hp.spectral_radius` to within 1e-6 relative.
pub fn build_topology(hp: &HyperParams, l: usize, seed: u64) -> Result<ReservoirTopology> {
    hp.validate()?;
    if l == 0 {
        return Err(Error::input("state dimension must be >= 1".to_string()));
    }
    let n = hp.n_nodes;
    let p = (hp.mean_degree / n as f64).min(1.0);

    for attempt in 0..10u64 {
        let attempt_seed = if attempt == 0 { seed } else { fan_out(seed, 0xA77E_0000 + attempt) };
        let mut rng = stream_rng(attempt_seed, Stream::Topology);

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for _ in 0..n {
            for j in 0..n {
                if rng.random::<f64>() < p {
                    cols.push(j as u32);
                    vals.push(rng.random_range(-1.0..1.0));
                }
            }
            row_ptr.push(cols.len());
        }
        let mut adjacency = CsrMatrix { n, row_ptr, cols, vals };

        let radius = spectral_radius(n, |x, y| adjacency.matvec(x, y), attempt_seed)?;
        if radius < 1e-12 {
            continue; // pathological draw; try the next seed
        }
        adjacency.scale(hp.spectral_radius / radius);
        // one refinement pass pins the radius against estimator error
        for _ in 0..4 {
            let r2 = spectral_radius(n, |x, y| adjacency.matvec(x, y), attempt_seed)?;
            if (r2 - hp.spectral_radius).abs() <= 1e-7 * hp.spectral_radius {
                break;
            }
            adjacency.scale(hp.spectral_radius / r2);
        }

        let k = l + 1;
        let input = match hp.architecture {
            super::Architecture::SplitQuadratic => {
                let chi2 = hp.control_scale.expect("validated above");
                let mut v_cols = Vec::with_capacity(n);
                let mut v_weights = Vec::with_capacity(n);
                for _ in 0..n {
                    v_cols.push(rng.random_range(0..l as u32));
                    v_weights.push(rng.random_range(-hp.input_scale..hp.input_scale));
                }
                let s_weights = (0..n)
                    .map(|_| {
                        if rng.random::<f64>() < 0.5 {
                            rng.random_range(-chi2..chi2)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                InputLayer::Split { v_cols, v_weights, s_weights }
            }
            _ => {
                let mut cols = Vec::with_capacity(n);
                let mut weights = Vec::with_capacity(n);
                for _ in 0..n {
                    cols.push(rng.random_range(0..k as u32));
                    weights.push(rng.random_range(-hp.input_scale..hp.input_scale));
                }
                InputLayer::Plain { cols, weights }
            }
        };

        return Ok(ReservoirTopology { n, l, k, adjacency, input, seed: attempt_seed });
    }
    Err(Error::numeric(
        "adjacency spectral radius vanished for 10 consecutive seeds".to_string(),
    ))
}

/// One reservoir update: r' = (1 - alpha) r + alpha tanh(A r + W_in u + b_r).
pub fn reservoir_step(
    r: &[f64],
    u: &[f64],
    topology: &ReservoirTopology,
    hp: &HyperParams,
) -> Vec<f64> {
    let mut out = vec![0.0; topology.n];
    let mut scratch = vec![0.0; topology.n];
    reservoir_step_into(r, u, topology, hp, &mut scratch, &mut out);
    out
}

pub(crate) fn reservoir_step_into(
    r: &[f64],
    u: &[f64],
    topology: &ReservoirTopology,
    hp: &HyperParams,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    debug_assert_eq!(u.len(), topology.k);
    topology.adjacency.matvec(r, scratch);
    topology.input.apply(u, scratch);
    let alpha = hp.leakage;
    let b = hp.activation_bias;
    for i in 0..topology.n {
        out[i] = (1.0 - alpha) * r[i] + alpha * (scratch[i] + b).tanh();
    }
}

/// Streaming open-loop driver that reuses its buffers between steps.
pub struct ReservoirDriver<'a> {
    topology: &'a ReservoirTopology,
    hp: &'a HyperParams,
    r: Vec<f64>,
    next: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> ReservoirDriver<'a> {
    pub fn new(topology: &'a ReservoirTopology, hp: &'a HyperParams) -> Self {
        Self {
            topology,
            hp,
            r: vec![0.0; topology.n],
            next: vec![0.0; topology.n],
            scratch: vec![0.0; topology.n],
        }
    }

    pub fn reset(&mut self) {
        self.r.fill(0.0);
    }

    pub fn set_state(&mut self, r: &[f64]) {
        self.r.copy_from_slice(r);
    }

    /// Consume input `u` and return the resulting reservoir state.
    pub fn step(&mut self, u: &[f64]) -> &[f64] {
        reservoir_step_into(&self.r, u, self.topology, self.hp, &mut self.scratch, &mut self.next);
        std::mem::swap(&mut self.r, &mut self.next);
        &self.r
    }

    pub fn state(&self) -> &[f64] {
        &self.r
    }
}

/// Drive the reservoir over a sequence of inputs (rows of `inputs`) from
/// initial state `r0`; row i of the result is the state produced by input i.
pub fn drive_open_loop(
    topology: &ReservoirTopology,
    hp: &HyperParams,
    inputs: &ArrayView2<f64>,
    r0: &[f64],
) -> Result<Array2<f64>> {
    if inputs.nrows() == 0 {
        return Err(Error::input("open-loop drive needs at least one input".to_string()));
    }
    if inputs.ncols() != topology.k {
        return Err(Error::input(format!(
            "input dimension {} does not match topology K = {}",
            inputs.ncols(),
            topology.k
        )));
    }
    let mut driver = ReservoirDriver::new(topology, hp);
    driver.set_state(r0);
    let mut states = Array2::zeros((inputs.nrows(), topology.n));
    for (i, u) in inputs.outer_iter().enumerate() {
        let r = driver.step(u.as_slice().unwrap());
        states.row_mut(i).iter_mut().zip(r).for_each(|(o, v)| *o = *v);
    }
    Ok(states)
}
