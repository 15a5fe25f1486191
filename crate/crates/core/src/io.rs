//! File formats: the binary trajectory container (magic `DCTR`), the binary
//! model container (magic `DCMD`), and the CSV exports the plotting side
//! consumes. All binary fields are little-endian; round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::dynamics::{RampSchedule, RmsScales, Trajectory};
use crate::error::{Error, Result};
use crate::hpo::CandidateScore;
use crate::metrics::ClimateErrorSeries;
use crate::observables::EventSeries;
use crate::reservoir::{
    Architecture, ControlSignal, CsrMatrix, HyperParams, InputLayer, KnowledgeModel,
    ReservoirTopology, TrainedModel,
};

const TRAJECTORY_MAGIC: &[u8; 4] = b"DCTR";
const MODEL_MAGIC: &[u8; 4] = b"DCMD";
const FORMAT_VERSION: u32 = 1;

// ---------- primitive writers/readers ----------

struct Bin<W: Write>(W);

impl<W: Write> Bin<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        self.0.write_all(&[v])?;
        Ok(())
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        for v in vs {
            self.f64(*v)?;
        }
        Ok(())
    }
}

struct Un<R: Read>(R);

impl<R: Read> Un<R> {
    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.0.read_exact(&mut b)?;
        Ok(b[0])
    }
    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n];
        for v in out.iter_mut() {
            *v = self.f64()?;
        }
        Ok(out)
    }
}

// ---------- trajectory container ----------

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = Bin(BufWriter::new(File::create(path)?));
    w.0.write_all(TRAJECTORY_MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    w.u32(traj.dim() as u32)?;
    w.u64(traj.len() as u64)?;
    w.f64(traj.t0)?;
    w.f64(traj.dt)?;
    w.u64(traj.seed)?;
    w.f64s(traj.data.as_slice().expect("row-major trajectory"))?;
    w.0.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut r = Un(BufReader::new(File::open(path)?));
    let mut magic = [0u8; 4];
    r.0.read_exact(&mut magic)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(Error::format(format!("{}: not a trajectory container", path.display())));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported trajectory version {version}")));
    }
    let l = r.u32()? as usize;
    let count = r.u64()? as usize;
    let t0 = r.f64()?;
    let dt = r.f64()?;
    let seed = r.u64()?;
    if l == 0 || count == 0 {
        return Err(Error::format("trajectory container is empty".to_string()));
    }
    let data = r.f64s(count * l)?;
    let data = Array2::from_shape_vec((count, l), data).expect("count*l values");
    Trajectory::new(t0, dt, data, seed)
}

// ---------- model container ----------

pub fn write_model(path: &Path, model: &TrainedModel) -> Result<()> {
    let mut w = Bin(BufWriter::new(File::create(path)?));
    w.0.write_all(MODEL_MAGIC)?;
    w.u32(FORMAT_VERSION)?;

    let hp = &model.hyperparams;
    w.u32(hp.n_nodes as u32)?;
    w.f64(hp.mean_degree)?;
    w.f64(hp.spectral_radius)?;
    w.f64(hp.input_scale)?;
    w.u8(hp.control_scale.is_some() as u8)?;
    w.f64(hp.control_scale.unwrap_or(0.0))?;
    w.f64(hp.leakage)?;
    w.f64(hp.tikhonov)?;
    w.f64(hp.activation_bias)?;
    w.f64(hp.control_slope)?;
    w.f64(hp.control_intercept)?;
    w.f64(hp.obs_noise)?;
    w.u32(hp.training_passes as u32)?;
    w.f64(hp.train_length)?;
    w.f64(hp.rc_dt)?;
    w.u8(match hp.architecture {
        Architecture::Plain => 0,
        Architecture::SplitQuadratic => 1,
        Architecture::Hybrid => 2,
    })?;

    let topo = &model.topology;
    w.u32(topo.l as u32)?;
    w.u32(topo.k as u32)?;
    w.u32(topo.n as u32)?;
    w.u64(topo.seed)?;
    w.u64(model.train_seed)?;
    w.f64(model.control.slope)?;
    w.f64(model.control.intercept)?;
    w.f64(model.control.t_k1)?;
    w.f64(model.control.dt)?;
    w.f64(model.diag_boost)?;

    w.u64(topo.adjacency.nnz() as u64)?;
    for (row, col, weight) in topo.adjacency.coo() {
        w.u32(row)?;
        w.u32(col)?;
        w.f64(weight)?;
    }

    match &topo.input {
        InputLayer::Plain { cols, weights } => {
            w.u8(0)?;
            for (c, wt) in cols.iter().zip(weights) {
                w.u32(*c)?;
                w.f64(*wt)?;
            }
        }
        InputLayer::Split { v_cols, v_weights, s_weights } => {
            w.u8(1)?;
            for (c, wt) in v_cols.iter().zip(v_weights) {
                w.u32(*c)?;
                w.f64(*wt)?;
            }
            w.f64s(s_weights)?;
        }
    }

    w.u32(model.readout.nrows() as u32)?;
    w.u32(model.readout.ncols() as u32)?;
    w.f64s(model.readout.as_slice().expect("row-major readout"))?;

    w.u64(model.residual_pool.nrows() as u64)?;
    w.f64s(model.residual_pool.as_slice().expect("row-major pool"))?;

    w.f64s(&model.scales.0)?;

    match &model.knowledge {
        Some(km) => {
            w.u8(1)?;
            w.f64(km.sigma)?;
            w.f64(km.beta)?;
            w.f64(km.rho.base)?;
            w.f64(km.rho.amplitude)?;
            w.f64(km.rho.timescale)?;
            w.f64(km.dt)?;
        }
        None => w.u8(0)?,
    }
    w.0.flush()?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<TrainedModel> {
    let mut r = Un(BufReader::new(File::open(path)?));
    let mut magic = [0u8; 4];
    r.0.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::format(format!("{}: not a model container", path.display())));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported model version {version}")));
    }

    let n_nodes = r.u32()? as usize;
    let mean_degree = r.f64()?;
    let spectral_radius = r.f64()?;
    let input_scale = r.f64()?;
    let has_cs = r.u8()? != 0;
    let cs = r.f64()?;
    let leakage = r.f64()?;
    let tikhonov = r.f64()?;
    let activation_bias = r.f64()?;
    let control_slope = r.f64()?;
    let control_intercept = r.f64()?;
    let obs_noise = r.f64()?;
    let training_passes = r.u32()? as usize;
    let train_length = r.f64()?;
    let rc_dt = r.f64()?;
    let architecture = match r.u8()? {
        0 => Architecture::Plain,
        1 => Architecture::SplitQuadratic,
        2 => Architecture::Hybrid,
        other => return Err(Error::format(format!("unknown architecture tag {other}"))),
    };
    let hp = HyperParams {
        n_nodes,
        mean_degree,
        spectral_radius,
        input_scale,
        control_scale: has_cs.then_some(cs),
        leakage,
        tikhonov,
        activation_bias,
        control_slope,
        control_intercept,
        obs_noise,
        training_passes,
        train_length,
        rc_dt,
        architecture,
    };

    let l = r.u32()? as usize;
    let k = r.u32()? as usize;
    let n = r.u32()? as usize;
    let topo_seed = r.u64()?;
    let train_seed = r.u64()?;
    let control = ControlSignal { slope: r.f64()?, intercept: r.f64()?, t_k1: r.f64()?, dt: r.f64()? };
    let diag_boost = r.f64()?;

    let nnz = r.u64()? as usize;
    let mut triplets = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        triplets.push((r.u32()?, r.u32()?, r.f64()?));
    }
    let adjacency = CsrMatrix::from_coo(n, &triplets)?;

    let input = match r.u8()? {
        0 => {
            let mut cols = Vec::with_capacity(n);
            let mut weights = Vec::with_capacity(n);
            for _ in 0..n {
                cols.push(r.u32()?);
                weights.push(r.f64()?);
            }
            InputLayer::Plain { cols, weights }
        }
        1 => {
            let mut v_cols = Vec::with_capacity(n);
            let mut v_weights = Vec::with_capacity(n);
            for _ in 0..n {
                v_cols.push(r.u32()?);
                v_weights.push(r.f64()?);
            }
            let s_weights = r.f64s(n)?;
            InputLayer::Split { v_cols, v_weights, s_weights }
        }
        other => return Err(Error::format(format!("unknown input layer tag {other}"))),
    };

    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let readout = Array2::from_shape_vec((rows, cols), r.f64s(rows * cols)?)
        .map_err(|e| Error::format(e.to_string()))?;
    let pool_rows = r.u64()? as usize;
    let residual_pool = Array2::from_shape_vec((pool_rows, l), r.f64s(pool_rows * l)?)
        .map_err(|e| Error::format(e.to_string()))?;
    let scales = RmsScales(r.f64s(l)?);
    let knowledge = match r.u8()? {
        0 => None,
        _ => Some(KnowledgeModel {
            sigma: r.f64()?,
            beta: r.f64()?,
            rho: RampSchedule { base: r.f64()?, amplitude: r.f64()?, timescale: r.f64()? },
            dt: r.f64()?,
        }),
    };

    Ok(TrainedModel {
        topology: ReservoirTopology { n, l, k, adjacency, input, seed: topo_seed },
        hyperparams: hp,
        readout,
        residual_pool,
        scales,
        control,
        train_seed,
        knowledge,
        diag_boost,
    })
}

// ---------- CSV exports ----------

fn csv_writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Columns: t, v1..vL.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv_writer(path)?;
    write!(w, "t")?;
    for c in 1..=traj.dim() {
        write!(w, ",v{c}")?;
    }
    writeln!(w)?;
    for i in 0..traj.len() {
        write!(w, "{}", traj.time(i))?;
        for c in 0..traj.dim() {
            write!(w, ",{}", traj.data[[i, c]])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: t, value.
pub fn write_events_csv(path: &Path, events: &EventSeries) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "t,value")?;
    for (t, v) in events.times.iter().zip(&events.values) {
        writeln!(w, "{t},{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: t, gamma (defined windows only).
pub fn write_gamma_csv(path: &Path, series: &ClimateErrorSeries) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "t,gamma")?;
    for (t, g) in series.centers.iter().zip(&series.gamma) {
        writeln!(w, "{t},{g}")?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: x, F_true, F_pred — both CDFs evaluated on the union of sample points.
pub fn write_cdf_csv(path: &Path, true_samples: &[f64], pred_samples: &[f64]) -> Result<()> {
    let mut xs: Vec<f64> = true_samples.iter().chain(pred_samples).copied().collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let ft = crate::metrics::EmpiricalCdf::new(true_samples.to_vec())?;
    let fp = crate::metrics::EmpiricalCdf::new(pred_samples.to_vec())?;
    let mut w = csv_writer(path)?;
    writeln!(w, "x,F_true,F_pred")?;
    for x in xs {
        writeln!(w, "{x},{},{}", ft.eval(x), fp.eval(x))?;
    }
    w.flush()?;
    Ok(())
}

/// One row per ensemble member: v1..vL at the snapshot time.
pub fn write_snapshot_csv(path: &Path, states: &[Vec<f64>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let dim = states.first().map(|s| s.len()).unwrap_or(0);
    let header: Vec<String> = (1..=dim).map(|c| format!("v{c}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for s in states {
        let row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: parameter, observable — one row per recorded sample.
pub fn write_sweep_csv(path: &Path, rows: &[(f64, Vec<f64>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "parameter,observable")?;
    for (param, samples) in rows {
        for s in samples {
            writeln!(w, "{param},{s}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per candidate: hyperparameters, both metrics, score, diverged count, rank.
pub fn write_hpo_csv(path: &Path, scores: &[CandidateScore]) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(
        w,
        "rank,index,n_nodes,mean_degree,spectral_radius,input_scale,control_scale,leakage,\
         tikhonov,activation_bias,control_slope,control_intercept,obs_noise,training_passes,\
         train_length,rc_dt,architecture,valid_time,wasserstein,score,diverged,failed"
    )?;
    for (rank, s) in scores.iter().enumerate() {
        let hp = &s.hyperparams;
        let arch = match hp.architecture {
            Architecture::Plain => "plain",
            Architecture::SplitQuadratic => "split_quadratic",
            Architecture::Hybrid => "hybrid",
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            rank,
            s.index,
            hp.n_nodes,
            hp.mean_degree,
            hp.spectral_radius,
            hp.input_scale,
            hp.control_scale.map(|v| v.to_string()).unwrap_or_default(),
            hp.leakage,
            hp.tikhonov,
            hp.activation_bias,
            hp.control_slope,
            hp.control_intercept,
            hp.obs_noise,
            hp.training_passes,
            hp.train_length,
            hp.rc_dt,
            arch,
            s.median_valid_time,
            s.mean_wasserstein,
            s.score,
            s.diverged,
            s.failed.as_deref().unwrap_or("")
        )?;
    }
    w.flush()?;
    Ok(())
}
