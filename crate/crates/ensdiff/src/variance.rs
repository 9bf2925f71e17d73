//! Closed-form prediction of ensemble variance as a function of the
//! step count, via a first-order propagation of per-pixel variance
//! through the reverse process.
//!
//! The recursion tracks, for each retained time t on the step grid,
//!
//!   v_t = F_t ∘ v_{t−Δt} + g_t,        v_0 = 1,
//!
//! with diagonal F_t = (α_t/α_{t−Δt}) + 2·√(α_t/α_{t−Δt})·c_{t−Δt}·J(m_{t−Δt})
//! and g_t = c²_{t−Δt}, where J is the diagonal of the denoiser Jacobian
//! evaluated along the deterministic mean trajectory m. The closed form
//! unrolls the same recursion into a product–sum over steps.
//!
//! The g term treats the denoiser output as having unit variance; that
//! approximation is part of the model being implemented, and its accuracy
//! improves as the step grid refines.

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::schedule::{Schedule, TimeGrid};

/// Finite-difference probe width used when a denoiser has no analytic
/// Jacobian.
const JACOBIAN_FD_STEP: f64 = 1e-4;

/// Magnitude bound for the mean trajectory; beyond it the propagation
/// counts as diverged.
const MEAN_DIVERGENCE_LIMIT: f64 = 1e6;

/// A variance prediction across the step grid, with enough metadata to
/// identify the run it describes.
#[derive(Debug, Clone)]
pub struct VariancePrediction {
    /// Number of reverse steps N.
    pub n_steps: usize,
    pub delta_t: usize,
    pub t_max: usize,
    pub lambda: f64,
    pub denoiser: String,
    /// (t, v_t) per retained grid point, starting at (0, 1). The closed
    /// evaluation keeps only the endpoint.
    pub checkpoints: Vec<(usize, Vec<f64>)>,
    /// v_T, elementwise non-negative.
    pub final_v: Vec<f64>,
    /// How many entries were clamped from negative to zero along the way.
    pub clamped: usize,
}

impl VariancePrediction {
    /// Spatial mean of the final predicted variance.
    pub fn mean_final(&self) -> f64 {
        self.final_v.iter().sum::<f64>() / self.final_v.len() as f64
    }
}

/// Per-coordinate population variance (divide by the sample count) over a
/// set of equal-length vectors.
pub fn elementwise_variance(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::Parameter(format!(
            "element-wise variance needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples[0].len();
    for (k, s) in samples.iter().enumerate() {
        if s.len() != n {
            return Err(Error::Shape(format!(
                "sample {k} has length {} but sample 0 has {n}",
                s.len()
            )));
        }
    }
    let count = samples.len() as f64;
    let mut mean = vec![0.0; n];
    for s in samples {
        for (m, &v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    let mut var = vec![0.0; n];
    for s in samples {
        for i in 0..n {
            let d = s[i] - mean[i];
            var[i] += d * d;
        }
    }
    for v in &mut var {
        *v /= count;
    }
    Ok(var)
}

/// Per-coordinate population covariance between two paired sample sets.
pub fn elementwise_covariance(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Vec<f64>> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Parameter(format!(
            "covariance needs two equal sets of at least 2 samples, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs[0].len();
    let count = xs.len() as f64;
    let mut mx = vec![0.0; n];
    let mut my = vec![0.0; n];
    for (x, y) in xs.iter().zip(ys) {
        if x.len() != n || y.len() != n {
            return Err(Error::Shape("covariance samples must share one length".into()));
        }
        for i in 0..n {
            mx[i] += x[i];
            my[i] += y[i];
        }
    }
    for i in 0..n {
        mx[i] /= count;
        my[i] /= count;
    }
    let mut cov = vec![0.0; n];
    for (x, y) in xs.iter().zip(ys) {
        for i in 0..n {
            cov[i] += (x[i] - mx[i]) * (y[i] - my[i]);
        }
    }
    for c in &mut cov {
        *c /= count;
    }
    Ok(cov)
}

/// Deterministic mean-field propagation m_0 = 0,
/// m_t = √(α_t/α_{t−Δt})·m_{t−Δt} + c_{t−Δt}·ε̂(m_{t−Δt}); one vector per
/// grid point. The conditioning is passed to the denoiser as given.
pub fn mean_trajectory(
    d: &dyn Denoiser,
    s: &Schedule,
    delta_t: usize,
    cond: Option<&[f64]>,
) -> Result<Vec<Vec<f64>>> {
    let grid = TimeGrid::new(s.t_max(), delta_t)?;
    let n = d.dim();
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    out.push(vec![0.0; n]);
    for &t in &grid.points()[1..] {
        let p = t - delta_t;
        let c = s.step_coefficient(t, delta_t)?;
        let root = s.sr(t) / s.sr(p);
        let prev = out.last().unwrap();
        let eps = d.predict(prev, p, cond)?;
        let m: Vec<f64> = prev
            .iter()
            .zip(&eps)
            .map(|(&mp, &e)| root * mp + c * e)
            .collect();
        let worst = m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        if !worst.is_finite() || worst > MEAN_DIVERGENCE_LIMIT {
            return Err(Error::Numerical(format!(
                "mean trajectory diverged at t = {t} (|m| reached {worst:.3e})"
            )));
        }
        out.push(m);
    }
    Ok(out)
}

/// The per-step diagonal factors F_t and offsets g_t shared by both
/// evaluation orders.
fn step_factors(
    d: &dyn Denoiser,
    s: &Schedule,
    delta_t: usize,
    cond: Option<&[f64]>,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let grid = TimeGrid::new(s.t_max(), delta_t)?;
    let means = mean_trajectory(d, s, delta_t, cond)?;
    let mut fs = Vec::with_capacity(grid.n_steps());
    let mut gs = Vec::with_capacity(grid.n_steps());
    for (i, &t) in grid.points()[1..].iter().enumerate() {
        let p = t - delta_t;
        let c = s.step_coefficient(t, delta_t)?;
        let ratio = s.alpha(t) / s.alpha(p);
        let root = s.sr(t) / s.sr(p);
        let jac = d.jacobian_diag(&means[i], p, cond, JACOBIAN_FD_STEP)?;
        let f: Vec<f64> = jac.iter().map(|&j| ratio + 2.0 * root * c * j).collect();
        fs.push(f);
        gs.push(c * c);
    }
    Ok((fs, gs))
}

fn prediction_meta(
    d: &dyn Denoiser,
    s: &Schedule,
    grid: &TimeGrid,
) -> (usize, usize, usize, f64, String) {
    (
        grid.n_steps(),
        grid.delta_t(),
        s.t_max(),
        s.lambda(),
        d.label(),
    )
}

/// Step-by-step evaluation of the variance recursion, retaining every
/// intermediate v_t. Negative transients are clamped to zero and counted.
pub fn predict_variance_recursive(
    d: &dyn Denoiser,
    s: &Schedule,
    delta_t: usize,
    cond: Option<&[f64]>,
) -> Result<VariancePrediction> {
    let grid = TimeGrid::new(s.t_max(), delta_t)?;
    let (fs, gs) = step_factors(d, s, delta_t, cond)?;
    let n = d.dim();
    let mut v = vec![1.0; n];
    let mut clamped = 0usize;
    let mut checkpoints = vec![(0usize, v.clone())];
    for (i, &t) in grid.points()[1..].iter().enumerate() {
        for (vi, &fi) in v.iter_mut().zip(&fs[i]) {
            *vi = fi * *vi + gs[i];
            if *vi < 0.0 {
                *vi = 0.0;
                clamped += 1;
            }
        }
        checkpoints.push((t, v.clone()));
    }
    if clamped > 0 {
        log::warn!(
            "variance recursion clamped {clamped} negative entries over {} steps",
            grid.n_steps()
        );
    }
    let (n_steps, dt, t_max, lambda, denoiser) = prediction_meta(d, s, &grid);
    Ok(VariancePrediction {
        n_steps,
        delta_t: dt,
        t_max,
        lambda,
        denoiser,
        final_v: v,
        checkpoints,
        clamped,
    })
}

/// Product–sum evaluation of the same quantity:
///
///   v_T = (Π_{i=1..N} F_i)·1 + Σ_{i=1..N} (Π_{k=i+1..N+1} F_k)·g_i,
///
/// with F_{N+1} the identity. Only the final vector is clamped, so it
/// agrees with the recursion exactly when no transient clamps occur.
pub fn predict_variance_closed(
    d: &dyn Denoiser,
    s: &Schedule,
    delta_t: usize,
    cond: Option<&[f64]>,
) -> Result<VariancePrediction> {
    let grid = TimeGrid::new(s.t_max(), delta_t)?;
    let (fs, gs) = step_factors(d, s, delta_t, cond)?;
    let n = d.dim();
    let n_steps = grid.n_steps();
    let mut acc = vec![0.0; n];
    let mut suffix = vec![1.0; n]; // Π over an empty range
    for i in (0..n_steps).rev() {
        for (a, &sf) in acc.iter_mut().zip(&suffix) {
            *a += sf * gs[i];
        }
        for (sf, &fi) in suffix.iter_mut().zip(&fs[i]) {
            *sf *= fi;
        }
    }
    let mut clamped = 0usize;
    let mut final_v = Vec::with_capacity(n);
    for i in 0..n {
        let v = suffix[i] + acc[i];
        if v < 0.0 {
            clamped += 1;
            final_v.push(0.0);
        } else {
            final_v.push(v);
        }
    }
    if clamped > 0 {
        log::warn!("closed-form variance clamped {clamped} negative entries");
    }
    let (n_steps, dt, t_max, lambda, denoiser) = prediction_meta(d, s, &grid);
    Ok(VariancePrediction {
        n_steps,
        delta_t: dt,
        t_max,
        lambda,
        denoiser,
        final_v,
        checkpoints: Vec::new(),
        clamped,
    })
}
