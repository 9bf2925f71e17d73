//! Ensemble evaluation metrics: pixel-wise ensemble variance, global and
//! seasonal mean-variance summaries, the mean-variance discrepancy score,
//! and the paired MSE/SSIM quality metrics.

use crate::error::{Error, Result};
use crate::fields::Grid;
use crate::schedule::Schedule;

/// Season slots used to bucket samples. Synthetic data assigns them
/// round-robin by sample index, standing in for quarterly groupings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Season {
    Jfm,
    Amj,
    Jas,
    Ond,
}

pub const SEASONS: [Season; 4] = [Season::Jfm, Season::Amj, Season::Jas, Season::Ond];

impl Season {
    pub fn index(self) -> usize {
        match self {
            Season::Jfm => 0,
            Season::Amj => 1,
            Season::Jas => 2,
            Season::Ond => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Season::Jfm => "JFM",
            Season::Amj => "AMJ",
            Season::Jas => "JAS",
            Season::Ond => "OND",
        }
    }

    /// Round-robin season for a sample index.
    pub fn from_index(i: usize) -> Self {
        SEASONS[i % 4]
    }
}

/// A rank-4 collection of ensembles: S conditioning samples × M members,
/// each an h×w field, stored as f32 in (sample, member, row, col) order.
#[derive(Debug, Clone)]
pub struct EnsembleSet {
    s: usize,
    m: usize,
    h: usize,
    w: usize,
    values: Vec<f32>,
    labels: Option<Vec<Season>>,
}

impl EnsembleSet {
    pub fn new(
        s: usize,
        m: usize,
        h: usize,
        w: usize,
        values: Vec<f32>,
        labels: Option<Vec<Season>>,
    ) -> Result<Self> {
        if s == 0 || m == 0 || h == 0 || w == 0 {
            return Err(Error::Shape("ensemble set dimensions must be positive".into()));
        }
        if values.len() != s * m * h * w {
            return Err(Error::Shape(format!(
                "ensemble set expects {} values, got {}",
                s * m * h * w,
                values.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != s {
                return Err(Error::Shape(format!(
                    "season labels cover {} samples but the set has {s}",
                    l.len()
                )));
            }
        }
        Ok(Self { s, m, h, w, values, labels })
    }

    /// Builds a set from per-sample member lists, assigning round-robin
    /// season labels.
    pub fn from_members(samples: &[Vec<Grid>]) -> Result<Self> {
        if samples.is_empty() || samples[0].is_empty() {
            return Err(Error::Shape("ensemble set needs at least one sample and member".into()));
        }
        let (s, m) = (samples.len(), samples[0].len());
        let (h, w) = (samples[0][0].h(), samples[0][0].w());
        let mut values = Vec::with_capacity(s * m * h * w);
        for (i, members) in samples.iter().enumerate() {
            if members.len() != m {
                return Err(Error::Shape(format!(
                    "sample {i} has {} members, expected {m}",
                    members.len()
                )));
            }
            for g in members {
                if g.h() != h || g.w() != w {
                    return Err(Error::Shape(format!(
                        "sample {i} member shape {}×{} differs from {h}×{w}",
                        g.h(),
                        g.w()
                    )));
                }
                values.extend(g.values().iter().map(|&v| v as f32));
            }
        }
        let labels = (0..s).map(Season::from_index).collect();
        Self::new(s, m, h, w, values, Some(labels))
    }

    pub fn n_samples(&self) -> usize {
        self.s
    }
    pub fn n_members(&self) -> usize {
        self.m
    }
    pub fn h(&self) -> usize {
        self.h
    }
    pub fn w(&self) -> usize {
        self.w
    }
    pub fn labels(&self) -> Option<&[Season]> {
        self.labels.as_deref()
    }
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// One member field, flattened row-major.
    pub fn member(&self, sample: usize, member: usize) -> &[f32] {
        let n = self.h * self.w;
        let base = (sample * self.m + member) * n;
        &self.values[base..base + n]
    }

    /// Member mean per sample, computed from the stored values so two sets
    /// with identical storage yield identical means.
    pub fn sample_means(&self) -> Result<Vec<Grid>> {
        let n = self.h * self.w;
        (0..self.s)
            .map(|i| {
                let mut acc = vec![0.0f64; n];
                for j in 0..self.m {
                    for (a, &v) in acc.iter_mut().zip(self.member(i, j)) {
                        *a += v as f64;
                    }
                }
                for a in &mut acc {
                    *a /= self.m as f64;
                }
                Grid::new(self.h, self.w, acc)
            })
            .collect()
    }
}

/// Per-sample pixel-wise variance maps V_i plus dimensions.
#[derive(Debug, Clone)]
pub struct VarianceMaps {
    pub s: usize,
    pub h: usize,
    pub w: usize,
    /// S×h×w, row-major by sample.
    pub v: Vec<f64>,
}

impl VarianceMaps {
    pub fn map(&self, sample: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.v[sample * n..(sample + 1) * n]
    }
}

/// Population variance across members for every (sample, pixel); the
/// divisor is M.
pub fn pixelwise_variance(d: &EnsembleSet) -> Result<VarianceMaps> {
    if d.m < 2 {
        return Err(Error::Parameter(format!(
            "pixel-wise variance needs at least 2 members, got {}",
            d.m
        )));
    }
    let n = d.h * d.w;
    let per_sample = crate::exec::map_indexed(d.s, |i| {
        let mut out = vec![0.0f64; n];
        let mut mean = vec![0.0f64; n];
        for j in 0..d.m {
            for (acc, &v) in mean.iter_mut().zip(d.member(i, j)) {
                *acc += v as f64;
            }
        }
        for v in &mut mean {
            *v /= d.m as f64;
        }
        for j in 0..d.m {
            for (k, &v) in d.member(i, j).iter().enumerate() {
                let diff = v as f64 - mean[k];
                out[k] += diff * diff;
            }
        }
        for v in &mut out {
            *v /= d.m as f64;
        }
        out
    });
    let mut v = Vec::with_capacity(d.s * n);
    for sample in per_sample {
        v.extend(sample);
    }
    Ok(VarianceMaps { s: d.s, h: d.h, w: d.w, v })
}

/// Arithmetic mean of V over all samples and pixels.
pub fn global_mean_variance(v: &VarianceMaps) -> f64 {
    v.v.iter().sum::<f64>() / v.v.len() as f64
}

/// Per-pixel mean of V over the samples in each season; one h×w map per
/// season, indexed by `Season::index()`.
pub fn spatial_mean_variance(v: &VarianceMaps, labels: &[Season]) -> Result<[Vec<f64>; 4]> {
    if labels.len() != v.s {
        return Err(Error::Shape(format!(
            "{} labels for {} variance maps",
            labels.len(),
            v.s
        )));
    }
    let n = v.h * v.w;
    let mut maps = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut counts = [0usize; 4];
    for (i, &season) in labels.iter().enumerate() {
        let k = season.index();
        counts[k] += 1;
        for (acc, &val) in maps[k].iter_mut().zip(v.map(i)) {
            *acc += val;
        }
    }
    for season in SEASONS {
        let k = season.index();
        if counts[k] == 0 {
            return Err(Error::Parameter(format!(
                "season {} has no samples",
                season.label()
            )));
        }
        for val in &mut maps[k] {
            *val /= counts[k] as f64;
        }
    }
    Ok(maps)
}

/// Mean absolute difference between two equal-shape maps.
pub fn mvd(map_a: &[f64], map_b: &[f64]) -> Result<f64> {
    if map_a.len() != map_b.len() || map_a.is_empty() {
        return Err(Error::Shape(format!(
            "MVD needs equal non-empty maps, got {} and {}",
            map_a.len(),
            map_b.len()
        )));
    }
    let total: f64 = map_a.iter().zip(map_b).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / map_a.len() as f64)
}

/// Mean squared difference between two equal-shape fields.
pub fn mse(a: &Grid, b: &Grid) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "MSE shapes differ: {}×{} vs {}×{}",
            a.h(),
            a.w(),
            b.h(),
            b.w()
        )));
    }
    let total: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(total / a.values().len() as f64)
}

/// SSIM window size and Gaussian width.
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut kernel = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for dy in -half..=half {
        for dx in -half..=half {
            let r2 = (dy * dy + dx * dx) as f64;
            kernel.push((-r2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    kernel
}

/// The dynamic range max − min of a reference set, used as the SSIM `L`
/// parameter. Errors when the range is zero.
pub fn dynamic_range(refs: &[Grid]) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for g in refs {
        for &v in g.values() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let range = hi - lo;
    if !range.is_finite() || range <= 0.0 {
        return Err(Error::Parameter(format!(
            "reference set has no dynamic range (max - min = {range})"
        )));
    }
    Ok(range)
}

/// Mean local structural similarity over all positions where the full
/// 11×11 Gaussian window (σ = 1.5) fits, with C1 = (K1·L)², C2 = (K2·L)².
pub fn ssim(a: &Grid, b: &Grid, l: f64) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "SSIM shapes differ: {}×{} vs {}×{}",
            a.h(),
            a.w(),
            b.h(),
            b.w()
        )));
    }
    if a.h() < SSIM_WINDOW || a.w() < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "field {}×{} is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} SSIM window",
            a.h(),
            a.w()
        )));
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::Parameter(format!(
            "SSIM dynamic range must be positive, got {l}"
        )));
    }
    let kernel = gaussian_window();
    let c1 = (SSIM_K1 * l) * (SSIM_K1 * l);
    let c2 = (SSIM_K2 * l) * (SSIM_K2 * l);
    let (h, w) = (a.h(), a.w());
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=(h - SSIM_WINDOW) {
        for x0 in 0..=(w - SSIM_WINDOW) {
            let mut ma = 0.0;
            let mut mb = 0.0;
            let mut saa = 0.0;
            let mut sbb = 0.0;
            let mut sab = 0.0;
            for dy in 0..SSIM_WINDOW {
                for dx in 0..SSIM_WINDOW {
                    let k = kernel[dy * SSIM_WINDOW + dx];
                    let va = a.at(y0 + dy, x0 + dx);
                    let vb = b.at(y0 + dy, x0 + dx);
                    ma += k * va;
                    mb += k * vb;
                    saa += k * va * va;
                    sbb += k * vb * vb;
                    sab += k * va * vb;
                }
            }
            let var_a = saa - ma * ma;
            let var_b = sbb - mb * mb;
            let cov = sab - ma * mb;
            let val = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
            total += val;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Paired dataset metrics: per-sample MSE and SSIM of predictions against
/// references (both on the standardized scale), averaged over samples. The
/// SSIM dynamic range comes from the whole reference set.
pub fn dataset_metrics(preds: &[Grid], refs: &[Grid]) -> Result<(f64, f64)> {
    if preds.len() != refs.len() || preds.is_empty() {
        return Err(Error::Shape(format!(
            "metric sets differ in length: {} predictions vs {} references",
            preds.len(),
            refs.len()
        )));
    }
    let l = dynamic_range(refs)?;
    let mut mse_sum = 0.0;
    let mut ssim_sum = 0.0;
    for (p, r) in preds.iter().zip(refs) {
        mse_sum += mse(p, r)?;
        ssim_sum += ssim(p, r, l)?;
    }
    let count = preds.len() as f64;
    Ok((mse_sum / count, ssim_sum / count))
}

/// One row of the per-step-count summary written by the CLI.
#[derive(Debug, Clone)]
pub struct StatsRow {
    pub n_steps: usize,
    pub mu_v: f64,
    pub mvd_yearly: f64,
    pub mvd_seasonal: [f64; 4],
    pub mse: f64,
    pub ssim: f64,
}

impl StatsRow {
    pub fn csv_header() -> &'static str {
        "N_steps,mu_V,MVD_yearly,MVD_JFM,MVD_AMJ,MVD_JAS,MVD_OND,MSE,SSIM"
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n_steps,
            self.mu_v,
            self.mvd_yearly,
            self.mvd_seasonal[0],
            self.mvd_seasonal[1],
            self.mvd_seasonal[2],
            self.mvd_seasonal[3],
            self.mse,
            self.ssim
        )
    }
}

/// Standardized-scale reference statistics against which generated
/// ensembles are scored: a yearly mean-variance map plus one per season.
/// For references with a single realization per sample the variance maps
/// come from pooling samples; callers may also supply ensemble references.
#[derive(Debug, Clone)]
pub struct ReferenceVariance {
    pub yearly: Vec<f64>,
    pub seasonal: [Vec<f64>; 4],
}

impl ReferenceVariance {
    /// Builds reference maps from a generated-or-observed ensemble set.
    pub fn from_ensemble(d: &EnsembleSet) -> Result<Self> {
        let v = pixelwise_variance(d)?;
        let labels: Vec<Season> = match d.labels() {
            Some(l) => l.to_vec(),
            None => (0..d.n_samples()).map(Season::from_index).collect(),
        };
        let seasonal = spatial_mean_variance(&v, &labels)?;
        let n = v.h * v.w;
        let mut yearly = vec![0.0; n];
        for i in 0..v.s {
            for (acc, &val) in yearly.iter_mut().zip(v.map(i)) {
                *acc += val;
            }
        }
        for val in &mut yearly {
            *val /= v.s as f64;
        }
        Ok(Self { yearly, seasonal })
    }
}

/// Convenience used by the CLI and tests: full summary row for one
/// generated set against reference variance maps and paired truths.
pub fn summarize(
    n_steps: usize,
    generated: &EnsembleSet,
    reference: &ReferenceVariance,
    ensemble_means: &[Grid],
    truths: &[Grid],
) -> Result<StatsRow> {
    let v = pixelwise_variance(generated)?;
    let labels: Vec<Season> = match generated.labels() {
        Some(l) => l.to_vec(),
        None => (0..generated.n_samples()).map(Season::from_index).collect(),
    };
    let mu_v = global_mean_variance(&v);
    let seasonal = spatial_mean_variance(&v, &labels)?;
    let n = v.h * v.w;
    let mut yearly = vec![0.0; n];
    for i in 0..v.s {
        for (acc, &val) in yearly.iter_mut().zip(v.map(i)) {
            *acc += val;
        }
    }
    for val in &mut yearly {
        *val /= v.s as f64;
    }
    let mvd_yearly = mvd(&yearly, &reference.yearly)?;
    let mut mvd_seasonal = [0.0; 4];
    for season in SEASONS {
        let k = season.index();
        mvd_seasonal[k] = mvd(&seasonal[k], &reference.seasonal[k])?;
    }
    let (mse_val, ssim_val) = dataset_metrics(ensemble_means, truths)?;
    Ok(StatsRow {
        n_steps,
        mu_v,
        mvd_yearly,
        mvd_seasonal,
        mse: mse_val,
        ssim: ssim_val,
    })
}

/// Standardize a set of grids with a shared standardizer, for
/// metrics-on-normalized-data evaluation.
pub fn standardize_all(grids: &[Grid], std: &crate::fields::Standardizer) -> Vec<Grid> {
    grids.iter().map(|g| std.apply(g)).collect()
}

/// Per-member DDIM ensembles reduced to their member mean, one grid per
/// sample; the usual point prediction for MSE/SSIM scoring.
pub fn ensemble_means(samples: &[Vec<Grid>]) -> Result<Vec<Grid>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, members)| {
            if members.is_empty() {
                return Err(Error::Shape(format!("sample {i} has no members")));
            }
            let (h, w) = (members[0].h(), members[0].w());
            let mut acc = vec![0.0; h * w];
            for g in members {
                if g.h() != h || g.w() != w {
                    return Err(Error::Shape(format!(
                        "sample {i} has mixed member shapes"
                    )));
                }
                for (a, &v) in acc.iter_mut().zip(g.values()) {
                    *a += v;
                }
            }
            for a in &mut acc {
                *a /= members.len() as f64;
            }
            Grid::new(h, w, acc)
        })
        .collect()
}

/// Checks a proposed step-count grid against a schedule, shared by CLI
/// subcommands that sweep N.
pub fn validate_step_counts(s: &Schedule, counts: &[usize]) -> Result<()> {
    for &n in counts {
        if n == 0 || s.t_max() % n != 0 {
            return Err(Error::Divisibility { steps: n, total: s.t_max() });
        }
    }
    Ok(())
}
