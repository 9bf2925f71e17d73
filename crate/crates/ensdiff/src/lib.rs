//! Step-count-controlled DDIM ensembles for grid downscaling.
//!
//! The library covers the full desk-scale pipeline: a sinusoidal
//! signal/noise schedule, deterministic reverse-diffusion sampling whose
//! step count controls ensemble spread, a closed-form prediction of that
//! spread, ensemble statistics, and calibration of the step count against a
//! reference ensemble.

pub mod calibrate;
pub mod denoiser;
pub mod error;
pub mod exec;
pub mod fields;
pub mod io;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod stats;
pub mod synth;
pub mod variance;

pub use denoiser::{Denoiser, GaussianOracle, ToyDenoiser};
pub use error::{Error, Result};
pub use fields::Grid;
pub use schedule::{Schedule, TimeGrid};
