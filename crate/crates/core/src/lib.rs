//! Simulation, reservoir-computing prediction, and climate scoring of
//! non-stationary dynamical systems that drift across tipping points.
//!
//! The crate is organized around the prediction pipeline:
//!
//! * [`dynamics`] — ground-truth trajectories of the three test systems
//!   (Lorenz, Ikeda map, Kuramoto-Sivashinsky) under an exponential
//!   parameter ramp, with reproducible dynamical noise.
//! * [`observables`] — scalar event extraction (maxima, section crossings)
//!   and RMS normalization.
//! * [`metrics`] — empirical CDFs, Wasserstein distance, the sliding-window
//!   climate error Γ(t), valid time, snapshot sampling, and a largest
//!   Lyapunov exponent estimator.
//! * [`reservoir`] — the reservoir computer: topology construction, ridge
//!   training (optionally against a readout prior), residual-resampling
//!   stochastic prediction, and the hybrid variant that folds in an
//!   imperfect physics model.
//! * [`hpo`] — two-horizon hyperparameter selection: median valid time on a
//!   short validation window combined with mean Wasserstein distance on a
//!   long one.
//! * [`harness`] — experiment configs, seeded parallel ensembles,
//!   stationary parameter sweeps, objective comparison, and plot-data
//!   emission. The `driftcast` binary is a thin CLI over this module.

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod hpo;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod observables;
pub mod reservoir;
pub mod rng;

pub use error::{Error, Result};
