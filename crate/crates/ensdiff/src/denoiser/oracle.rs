//! Exact optimal denoiser for Gaussian target fields.

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::schedule::Schedule;

/// The conditional expectation E[ε | x_t] when the clean field is
/// N(μ, diag(Σ)): for each pixel,
///
/// ε̂_i = nr[t]·(x_i − sr[t]·μ_i) / (α_t·Σ_ii + 1 − α_t)
///
/// Linear in x_t, which is what makes the variance theory exactly checkable
/// against it. Only valid with λ = 1 (no signal scaling).
#[derive(Debug, Clone)]
pub struct GaussianOracle {
    mu: Vec<f64>,
    sigma_diag: Vec<f64>,
    schedule: Schedule,
}

impl GaussianOracle {
    pub fn new(mu: Vec<f64>, sigma_diag: Vec<f64>, schedule: Schedule) -> Result<Self> {
        if mu.len() != sigma_diag.len() {
            return Err(Error::Shape(format!(
                "mean length {} does not match covariance length {}",
                mu.len(),
                sigma_diag.len()
            )));
        }
        if mu.is_empty() {
            return Err(Error::Shape("oracle needs at least one dimension".into()));
        }
        if sigma_diag.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Parameter("covariance diagonal must be positive".into()));
        }
        if schedule.lambda() != 1.0 {
            return Err(Error::Parameter(format!(
                "oracle requires lambda = 1, schedule has {}",
                schedule.lambda()
            )));
        }
        Ok(Self { mu, sigma_diag, schedule })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma_diag(&self) -> &[f64] {
        &self.sigma_diag
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Analytic Jacobian diagonal: nr[t] / (α_t·Σ_ii + 1 − α_t).
    pub fn jacobian_diag_analytic(&self, t: usize) -> Vec<f64> {
        let alpha = self.schedule.alpha(t);
        let nr = self.schedule.nr(t);
        self.sigma_diag
            .iter()
            .map(|&s| nr / (alpha * s + 1.0 - alpha))
            .collect()
    }
}

impl Denoiser for GaussianOracle {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn label(&self) -> String {
        "gaussian-oracle".into()
    }

    fn predict(&self, x_t: &[f64], t: usize, _cond: Option<&[f64]>) -> Result<Vec<f64>> {
        if x_t.len() != self.mu.len() {
            return Err(Error::Shape(format!(
                "input length {} does not match oracle dimension {}",
                x_t.len(),
                self.mu.len()
            )));
        }
        if t > self.schedule.t_max() {
            return Err(Error::Parameter(format!(
                "time {t} beyond schedule end {}",
                self.schedule.t_max()
            )));
        }
        let alpha = self.schedule.alpha(t);
        let sr = self.schedule.sr(t);
        let nr = self.schedule.nr(t);
        Ok(x_t
            .iter()
            .zip(&self.mu)
            .zip(&self.sigma_diag)
            .map(|((&x, &m), &s)| nr * (x - sr * m) / (alpha * s + 1.0 - alpha))
            .collect())
    }

    fn jacobian_diag(
        &self,
        _m: &[f64],
        t: usize,
        _cond: Option<&[f64]>,
        _h: f64,
    ) -> Result<Vec<f64>> {
        Ok(self.jacobian_diag_analytic(t))
    }
}
