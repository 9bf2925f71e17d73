//! Step-count calibration: sweep candidate step counts, score each
//! generated ensemble against a reference via global mean variance and
//! mean-variance discrepancy, and select the optimum per criterion.

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::fields::Standardizer;
use crate::sampler::{generate_ensemble, SamplerConfig};
use crate::schedule::{Schedule, TimeGrid};
use crate::stats::{
    global_mean_variance, mse, mvd, pixelwise_variance, spatial_mean_variance,
    validate_step_counts, EnsembleSet, ReferenceVariance, Season,
};
use std::time::Instant;

/// Which column decides `best_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// Closest global mean variance to the reference.
    Global,
    /// Smallest yearly mean-variance discrepancy.
    Mvd,
}

impl std::str::FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Criterion::Global),
            "mvd" => Ok(Criterion::Mvd),
            other => Err(Error::Parameter(format!(
                "unknown calibration criterion '{other}' (expected 'global' or 'mvd')"
            ))),
        }
    }
}

/// Sampling context shared by every candidate: everything but the time
/// grid, which the sweep varies.
#[derive(Debug, Clone)]
pub struct CalibrationSetup<'a> {
    pub schedule: &'a Schedule,
    pub h: usize,
    pub w: usize,
    pub members: usize,
    pub base_seed: u64,
    /// Per-sample standardized conditioning fields (length = reference
    /// sample count); absent for unconditional denoisers.
    pub conds: Option<&'a [Vec<f64>]>,
    pub destandardize: Option<Standardizer>,
    pub crop_to: Option<(usize, usize)>,
}

/// One sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRow {
    pub n_steps: usize,
    pub mu_v: f64,
    pub mvd_yearly: f64,
    pub mvd_seasonal: [f64; 4],
    /// MSE between the candidate's ensemble means and the reference's.
    pub mse_to_reference_mean: f64,
}

impl CandidateRow {
    pub fn csv_header() -> &'static str {
        "N_steps,mu_V,MVD_yearly,MVD_JFM,MVD_AMJ,MVD_JAS,MVD_OND,MSE_ref_mean"
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.n_steps,
            self.mu_v,
            self.mvd_yearly,
            self.mvd_seasonal[0],
            self.mvd_seasonal[1],
            self.mvd_seasonal[2],
            self.mvd_seasonal[3],
            self.mse_to_reference_mean
        )
    }
}

/// Sweep result: all rows, the reference's global mean variance, the
/// winner under each criterion, and the winner under the requested one.
/// Runtimes are reported separately from the rows so the CSV is a pure
/// function of (weights, reference, candidates, seed).
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub rows: Vec<CandidateRow>,
    pub runtimes_s: Vec<f64>,
    pub reference_mu_v: f64,
    pub criterion: Criterion,
    pub best_global: usize,
    pub best_mvd: usize,
    pub best_n: usize,
}

impl CalibrationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CandidateRow::csv_header());
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }
}

/// Selects the row index minimizing `score`, breaking ties toward the
/// smaller step count (cheaper sampling).
fn argmin_with_small_n_ties(rows: &[CandidateRow], score: impl Fn(&CandidateRow) -> f64) -> usize {
    let mut best = 0usize;
    for i in 1..rows.len() {
        let (si, sb) = (score(&rows[i]), score(&rows[best]));
        if si < sb || (si == sb && rows[i].n_steps < rows[best].n_steps) {
            best = i;
        }
    }
    best
}

/// Runs the sweep. For each candidate N, an M-member ensemble is generated
/// per reference sample under the same conditioning and seeds, scored, and
/// collected into a report row.
pub fn calibrate_steps(
    d: &dyn Denoiser,
    reference: &EnsembleSet,
    candidates: &[usize],
    criterion: Criterion,
    setup: &CalibrationSetup,
) -> Result<CalibrationReport> {
    if candidates.is_empty() {
        return Err(Error::Parameter("calibration needs at least one candidate".into()));
    }
    validate_step_counts(setup.schedule, candidates)?;
    if reference.n_members() < 2 {
        return Err(Error::Parameter(format!(
            "reference needs at least 2 members, got {}",
            reference.n_members()
        )));
    }
    let s_count = reference.n_samples();
    if let Some(conds) = setup.conds {
        if conds.len() != s_count {
            return Err(Error::Shape(format!(
                "{} conditioning fields for {s_count} reference samples",
                conds.len()
            )));
        }
    }

    let labels: Vec<Season> = match reference.labels() {
        Some(l) => l.to_vec(),
        None => (0..s_count).map(Season::from_index).collect(),
    };
    let ref_maps = ReferenceVariance::from_ensemble(reference)?;
    let ref_mu_v = {
        let v = pixelwise_variance(reference)?;
        global_mean_variance(&v)
    };
    let ref_means = reference.sample_means()?;

    let mut rows = Vec::with_capacity(candidates.len());
    let mut runtimes = Vec::with_capacity(candidates.len());
    for &n in candidates {
        let start = Instant::now();
        let grid = TimeGrid::with_steps(setup.schedule.t_max(), n)?;
        let mut samples = Vec::with_capacity(s_count);
        for i in 0..s_count {
            let cfg = SamplerConfig {
                schedule: setup.schedule,
                grid: grid.clone(),
                h: setup.h,
                w: setup.w,
                members: setup.members,
                base_seed: setup.base_seed,
                sample_index: i as u64,
                cond: setup.conds.map(|c| c[i].as_slice()),
                destandardize: setup.destandardize.clone(),
                crop_to: setup.crop_to,
            };
            samples.push(generate_ensemble(d, &cfg)?);
        }
        let set = EnsembleSet::from_members(&samples)?;
        let v = pixelwise_variance(&set)?;
        let mu_v = global_mean_variance(&v);
        let seasonal = spatial_mean_variance(&v, &labels)?;
        let n_px = v.h * v.w;
        let mut yearly = vec![0.0; n_px];
        for i in 0..v.s {
            for (acc, &val) in yearly.iter_mut().zip(v.map(i)) {
                *acc += val;
            }
        }
        for val in &mut yearly {
            *val /= v.s as f64;
        }
        let mvd_yearly = mvd(&yearly, &ref_maps.yearly)?;
        let mut mvd_seasonal = [0.0; 4];
        for season in crate::stats::SEASONS {
            let k = season.index();
            mvd_seasonal[k] = mvd(&seasonal[k], &ref_maps.seasonal[k])?;
        }
        let means = set.sample_means()?;
        let mut mse_sum = 0.0;
        for (m, r) in means.iter().zip(&ref_means) {
            mse_sum += mse(m, r)?;
        }
        rows.push(CandidateRow {
            n_steps: n,
            mu_v,
            mvd_yearly,
            mvd_seasonal,
            mse_to_reference_mean: mse_sum / s_count as f64,
        });
        runtimes.push(start.elapsed().as_secs_f64());
    }

    let best_global =
        rows[argmin_with_small_n_ties(&rows, |r| (r.mu_v - ref_mu_v).abs())].n_steps;
    let best_mvd = rows[argmin_with_small_n_ties(&rows, |r| r.mvd_yearly)].n_steps;
    let best_n = match criterion {
        Criterion::Global => best_global,
        Criterion::Mvd => best_mvd,
    };
    Ok(CalibrationReport {
        rows,
        runtimes_s: runtimes,
        reference_mu_v: ref_mu_v,
        criterion,
        best_global,
        best_mvd,
        best_n,
    })
}

/// Generates a reference ensemble set with the same stream layout the
/// sweep uses, so a reference built at N* is bit-identical to the sweep's
/// N* candidate under the same seeds.
pub fn reference_ensemble(
    d: &dyn Denoiser,
    n_samples: usize,
    n_steps: usize,
    setup: &CalibrationSetup,
) -> Result<EnsembleSet> {
    let grid = TimeGrid::with_steps(setup.schedule.t_max(), n_steps)?;
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let cfg = SamplerConfig {
            schedule: setup.schedule,
            grid: grid.clone(),
            h: setup.h,
            w: setup.w,
            members: setup.members,
            base_seed: setup.base_seed,
            sample_index: i as u64,
            cond: setup.conds.map(|c| c[i].as_slice()),
            destandardize: setup.destandardize.clone(),
            crop_to: setup.crop_to,
        };
        samples.push(generate_ensemble(d, &cfg)?);
    }
    EnsembleSet::from_members(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::GaussianOracle;

    fn schedule() -> Schedule {
        Schedule::new(256, 0.02, 0.995, 1.0).unwrap()
    }

    fn oracle(s: &Schedule) -> GaussianOracle {
        let n = 16;
        let sigma: Vec<f64> = (0..n).map(|i| 0.5 + 1.5 * i as f64 / 15.0).collect();
        GaussianOracle::new(vec![0.2; n], sigma, s.clone()).unwrap()
    }

    fn setup(s: &Schedule) -> CalibrationSetup<'_> {
        CalibrationSetup {
            schedule: s,
            h: 4,
            w: 4,
            members: 64,
            base_seed: 404,
            conds: None,
            destandardize: None,
            crop_to: None,
        }
    }

    #[test]
    fn round_trip_recovers_reference_step_count() {
        let s = schedule();
        let d = oracle(&s);
        let su = setup(&s);
        let reference = reference_ensemble(&d, 4, 8, &su).unwrap();
        for criterion in [Criterion::Global, Criterion::Mvd] {
            let report =
                calibrate_steps(&d, &reference, &[2, 4, 8, 16, 32], criterion, &su).unwrap();
            assert_eq!(report.best_n, 8, "criterion {criterion:?}");
            assert_eq!(report.best_global, 8);
            assert_eq!(report.best_mvd, 8);
            // Same seeds at N = 8 → identical ensembles → exact zeros.
            let row8 = report.rows.iter().find(|r| r.n_steps == 8).unwrap();
            assert_eq!(row8.mvd_yearly, 0.0);
            assert_eq!(row8.mse_to_reference_mean, 0.0);
            assert_eq!(row8.mu_v, report.reference_mu_v);
        }
    }

    #[test]
    fn single_candidate_is_trivially_best() {
        let s = schedule();
        let d = oracle(&s);
        let su = setup(&s);
        let reference = reference_ensemble(&d, 4, 16, &su).unwrap();
        let report = calibrate_steps(&d, &reference, &[4], Criterion::Global, &su).unwrap();
        assert_eq!(report.best_n, 4);
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.runtimes_s.len(), 1);
    }

    #[test]
    fn non_divisor_candidate_fails_before_sampling() {
        struct Exploder;
        impl Denoiser for Exploder {
            fn dim(&self) -> usize {
                16
            }
            fn predict(
                &self,
                _x: &[f64],
                _t: usize,
                _c: Option<&[f64]>,
            ) -> Result<Vec<f64>> {
                Err(Error::Numerical("should never be sampled".into()))
            }
        }
        let s = schedule();
        let d = oracle(&s);
        let su = setup(&s);
        let reference = reference_ensemble(&d, 2, 8, &su).unwrap();
        let err =
            calibrate_steps(&Exploder, &reference, &[8, 7], Criterion::Global, &su).unwrap_err();
        assert!(
            matches!(err, Error::Divisibility { steps: 7, total: 256 }),
            "got {err:?}"
        );
    }

    #[test]
    fn reruns_are_bit_identical() {
        let s = schedule();
        let d = oracle(&s);
        let su = setup(&s);
        let reference = reference_ensemble(&d, 4, 8, &su).unwrap();
        let a = calibrate_steps(&d, &reference, &[4, 8], Criterion::Mvd, &su).unwrap();
        let b = calibrate_steps(&d, &reference, &[4, 8], Criterion::Mvd, &su).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn tie_breaks_toward_smaller_step_count() {
        let rows = vec![
            CandidateRow {
                n_steps: 16,
                mu_v: 1.0,
                mvd_yearly: 0.5,
                mvd_seasonal: [0.0; 4],
                mse_to_reference_mean: 0.0,
            },
            CandidateRow {
                n_steps: 4,
                mu_v: 1.0,
                mvd_yearly: 0.5,
                mvd_seasonal: [0.0; 4],
                mse_to_reference_mean: 0.0,
            },
        ];
        assert_eq!(argmin_with_small_n_ties(&rows, |r| r.mvd_yearly), 1);
    }

    #[test]
    fn criterion_parsing() {
        assert_eq!("global".parse::<Criterion>().unwrap(), Criterion::Global);
        assert_eq!("mvd".parse::<Criterion>().unwrap(), Criterion::Mvd);
        assert!("best".parse::<Criterion>().is_err());
    }
}
