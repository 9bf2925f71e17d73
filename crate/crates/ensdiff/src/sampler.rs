//! Deterministic DDIM reverse process with step skipping, and seeded
//! ensemble generation.

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::fields::{crop, Grid, Standardizer};
use crate::rng::derive_stream;
use crate::schedule::{Schedule, TimeGrid};
use rand_distr::{Distribution, StandardNormal};

/// Standardized-scale magnitude beyond which a trajectory counts as diverged.
const DIVERGENCE_LIMIT: f64 = 1e6;

/// Everything one reverse-diffusion run needs besides the denoiser.
#[derive(Debug, Clone)]
pub struct SamplerConfig<'a> {
    pub schedule: &'a Schedule,
    pub grid: TimeGrid,
    /// Working field shape on the standardized scale (possibly padded).
    pub h: usize,
    pub w: usize,
    /// Ensemble members per conditioning sample.
    pub members: usize,
    pub base_seed: u64,
    /// Index of the conditioning sample within its dataset; part of every
    /// member's stream derivation.
    pub sample_index: u64,
    /// Standardized conditioning field, already upsampled to h×w. The λ
    /// division is applied internally, mirroring training.
    pub cond: Option<&'a [f64]>,
    /// When set, outputs are mapped back to physical units.
    pub destandardize: Option<Standardizer>,
    /// When set, outputs are cropped to (h, w) after de-standardization,
    /// undoing mirror padding.
    pub crop_to: Option<(usize, usize)>,
}

impl<'a> SamplerConfig<'a> {
    /// Minimal config for theory runs: raw standardized output, no
    /// conditioning, no cropping.
    pub fn bare(
        schedule: &'a Schedule,
        grid: TimeGrid,
        h: usize,
        w: usize,
        members: usize,
        base_seed: u64,
    ) -> Self {
        Self {
            schedule,
            grid,
            h,
            w,
            members,
            base_seed,
            sample_index: 0,
            cond: None,
            destandardize: None,
            crop_to: None,
        }
    }

    fn validate(&self, d: &dyn Denoiser) -> Result<()> {
        let n = self.h * self.w;
        if n == 0 {
            return Err(Error::Shape("sampler field shape must be non-empty".into()));
        }
        if d.dim() != n {
            return Err(Error::Shape(format!(
                "denoiser dimension {} does not match field size {n}",
                d.dim()
            )));
        }
        if let Some(c) = self.cond {
            if c.len() != n {
                return Err(Error::Shape(format!(
                    "conditioning length {} does not match field size {n}",
                    c.len()
                )));
            }
        }
        if self.members == 0 {
            return Err(Error::Parameter("ensemble needs at least one member".into()));
        }
        if self.grid.points().last() != Some(&self.schedule.t_max()) {
            return Err(Error::Parameter(format!(
                "time grid ends at {:?} but schedule has T = {}",
                self.grid.points().last(),
                self.schedule.t_max()
            )));
        }
        Ok(())
    }
}

/// One reverse step from `t − Δt` up to `t`:
///
/// x_t = (sr[t]/sr[t−Δt])·x_prev + c_{t−Δt}·ε̂(x_prev, t−Δt, cond)
///
/// where sr[t]/sr[t−Δt] = √(α_t/α_{t−Δt}) and c comes from the schedule.
pub fn ddim_step(
    x_prev: &[f64],
    t: usize,
    delta_t: usize,
    d: &dyn Denoiser,
    s: &Schedule,
    cond: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let c = s.step_coefficient(t, delta_t)?;
    let p = t - delta_t;
    let ratio = s.sr(t) / s.sr(p);
    let eps_hat = d.predict(x_prev, p, cond)?;
    let mut out = Vec::with_capacity(x_prev.len());
    for (i, (&x, &e)) in x_prev.iter().zip(&eps_hat).enumerate() {
        let v = ratio * x + c * e;
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite sampler state at t = {t}, coordinate {i}"
            )));
        }
        out.push(v);
    }
    Ok(out)
}

/// Runs the full reverse process for one ensemble member. The initial
/// x_0 ~ N(0, I) comes from the stream derived from
/// (base seed, sample index, member), so results are independent of
/// scheduling and thread count.
pub fn generate(d: &dyn Denoiser, cfg: &SamplerConfig, member: usize) -> Result<Grid> {
    cfg.validate(d)?;
    let n = cfg.h * cfg.w;
    let mut rng =
        derive_stream(cfg.base_seed, &[cfg.sample_index, member as u64]);
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();

    let lambda = cfg.schedule.lambda();
    let scaled_cond: Option<Vec<f64>> =
        cfg.cond.map(|c| c.iter().map(|&v| v / lambda).collect());
    let cond_ref = scaled_cond.as_deref();

    let delta_t = cfg.grid.delta_t();
    for &t in &cfg.grid.points()[1..] {
        x = ddim_step(&x, t, delta_t, d, cfg.schedule, cond_ref)?;
        let worst = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if worst > DIVERGENCE_LIMIT {
            return Err(Error::Numerical(format!(
                "sampler diverged at t = {t} (|x| reached {worst:.3e})"
            )));
        }
    }

    for v in &mut x {
        *v *= lambda;
    }
    let mut out = Grid::new(cfg.h, cfg.w, x)?;
    if let Some(std) = &cfg.destandardize {
        out = std.invert(&out);
    }
    if let Some((ch, cw)) = cfg.crop_to {
        out = crop(&out, ch, cw)?;
    }
    Ok(out)
}

/// All M members for one conditioning sample, in member order. Members are
/// generated in parallel when the `parallel` feature is on; the result is
/// identical either way.
pub fn generate_ensemble(d: &dyn Denoiser, cfg: &SamplerConfig) -> Result<Vec<Grid>> {
    cfg.validate(d)?;
    let results = crate::exec::map_indexed(cfg.members, |j| generate(d, cfg, j));
    results
        .into_iter()
        .enumerate()
        .map(|(j, r)| {
            r.map_err(|e| Error::Numerical(format!("member {j}: {e}")))
        })
        .collect()
}
