//! Noise-prediction contract and its two implementations: an analytic
//! Gaussian oracle and a small trainable residual network.

mod checkpoint;
mod net;
mod oracle;
mod train;

pub use checkpoint::{load_model, save_model, ModelBundle};
pub use net::{NetConfig, ToyDenoiser};
pub use oracle::GaussianOracle;
pub use train::{train, TrainConfig, TrainReport};

use crate::error::{Error, Result};

/// A denoiser predicts the noise component ε̂ of a noisy field `x_t`,
/// optionally conditioned on a coarse field. Predictions are deterministic
/// functions of `(x_t, t, cond)` and preserve dimension.
pub trait Denoiser: Sync {
    /// Flattened field length the denoiser operates on.
    fn dim(&self) -> usize;

    /// Short identifier recorded in prediction metadata.
    fn label(&self) -> String {
        "denoiser".into()
    }

    fn predict(&self, x_t: &[f64], t: usize, cond: Option<&[f64]>) -> Result<Vec<f64>>;

    /// Diagonal of ∂ε̂/∂x at `m`. Default: central finite differences;
    /// implementations with an exact form may override.
    fn jacobian_diag(
        &self,
        m: &[f64],
        t: usize,
        cond: Option<&[f64]>,
        h: f64,
    ) -> Result<Vec<f64>> {
        jacobian_diag_fd(self, m, t, cond, h)
    }
}

/// Central-difference estimate of the Jacobian diagonal:
/// (ε(m + h·e_i)_i − ε(m − h·e_i)_i) / 2h for each coordinate i.
pub fn jacobian_diag_fd<D: Denoiser + ?Sized>(
    d: &D,
    m: &[f64],
    t: usize,
    cond: Option<&[f64]>,
    h: f64,
) -> Result<Vec<f64>> {
    if h <= 0.0 {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = m.to_vec();
    let mut diag = Vec::with_capacity(m.len());
    for i in 0..m.len() {
        probe[i] = m[i] + h;
        let up = d.predict(&probe, t, cond)?[i];
        probe[i] = m[i] - h;
        let down = d.predict(&probe, t, cond)?[i];
        probe[i] = m[i];
        let g = (up - down) / (2.0 * h);
        if !g.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite Jacobian entry at coordinate {i}"
            )));
        }
        diag.push(g);
    }
    Ok(diag)
}
