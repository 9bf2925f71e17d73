//! Diffusion time grid and signal/noise-rate schedule.
//!
//! Time runs from pure noise at `t = 0` to data at `t = T`. The signal rate
//! follows a quarter-period sine between two clamps, so the signal/noise pair
//! stays on the unit circle and neither end of the schedule degenerates.

use crate::error::{Error, Result};

/// Precomputed signal/noise-rate tables over `t = 0..=T`.
///
/// `sr[t]` is the signal rate (√α_t), `nr[t]` the noise rate (√(1−α_t));
/// `sr[t]² + nr[t]² = 1` by construction. `lambda` is the signal scaling
/// applied to fields before they enter the forward process.
#[derive(Debug, Clone)]
pub struct Schedule {
    t_max: usize,
    sr_min: f64,
    sr_max: f64,
    lambda: f64,
    sr: Vec<f64>,
    nr: Vec<f64>,
}

impl Schedule {
    /// Builds the schedule: sr[t] = sin(θ_min + (t/T)(θ_max − θ_min)) with
    /// θ = asin of the clamps, nr[t] = cos of the same angle. Endpoints are
    /// set to the clamps exactly.
    pub fn new(t_max: usize, sr_min: f64, sr_max: f64, lambda: f64) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::Parameter("schedule length T must be >= 1".into()));
        }
        if !(sr_min > 0.0 && sr_min < sr_max && sr_max < 1.0) {
            return Err(Error::Parameter(format!(
                "signal-rate clamps must satisfy 0 < sr_min < sr_max < 1, got {sr_min} and {sr_max}"
            )));
        }
        if !(lambda >= 1.0) {
            return Err(Error::Parameter(format!(
                "signal scaling lambda must be >= 1, got {lambda}"
            )));
        }
        let theta_min = sr_min.asin();
        let theta_max = sr_max.asin();
        let mut sr = Vec::with_capacity(t_max + 1);
        let mut nr = Vec::with_capacity(t_max + 1);
        for t in 0..=t_max {
            let theta = theta_min + (t as f64 / t_max as f64) * (theta_max - theta_min);
            sr.push(theta.sin());
            nr.push(theta.cos());
        }
        sr[0] = sr_min;
        sr[t_max] = sr_max;
        Ok(Self { t_max, sr_min, sr_max, lambda, sr, nr })
    }

    /// Schedule with the default clamps (0.02, 0.995).
    pub fn with_defaults(t_max: usize, lambda: f64) -> Result<Self> {
        Self::new(t_max, 0.02, 0.995, lambda)
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn sr_min(&self) -> f64 {
        self.sr_min
    }

    pub fn sr_max(&self) -> f64 {
        self.sr_max
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Signal rate √α_t.
    pub fn sr(&self, t: usize) -> f64 {
        self.sr[t]
    }

    /// Noise rate √(1−α_t).
    pub fn nr(&self, t: usize) -> f64 {
        self.nr[t]
    }

    /// α_t = sr[t]².
    pub fn alpha(&self, t: usize) -> f64 {
        self.sr[t] * self.sr[t]
    }

    /// The coefficient c multiplying the predicted noise in one reverse step
    /// from `t − delta_t` up to `t`:
    ///
    /// c = nr[t] − sr[t]·nr[t−Δt]/sr[t−Δt]
    ///
    /// Negative for any genuine step of this schedule; zero when the two
    /// rates coincide (Δt = 0).
    pub fn step_coefficient(&self, t: usize, delta_t: usize) -> Result<f64> {
        if t > self.t_max {
            return Err(Error::Parameter(format!(
                "time {t} beyond schedule end {}",
                self.t_max
            )));
        }
        if delta_t > t {
            return Err(Error::Parameter(format!(
                "step size {delta_t} reaches below t = 0 from t = {t}"
            )));
        }
        let p = t - delta_t;
        Ok(self.nr[t] - self.sr[t] * self.nr[p] / self.sr[p])
    }
}

/// Uniform subdivision of `[0, T]` into `N = T/Δt` reverse-diffusion steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeGrid {
    delta_t: usize,
    points: Vec<usize>,
}

impl TimeGrid {
    /// Errors unless `delta_t` divides `t_max` exactly; no silent remainder.
    pub fn new(t_max: usize, delta_t: usize) -> Result<Self> {
        if delta_t == 0 || t_max == 0 {
            return Err(Error::Parameter(
                "time grid needs t_max >= 1 and delta_t >= 1".into(),
            ));
        }
        if t_max % delta_t != 0 {
            return Err(Error::Divisibility { steps: delta_t, total: t_max });
        }
        let points = (0..=t_max / delta_t).map(|i| i * delta_t).collect();
        Ok(Self { delta_t, points })
    }

    /// Grid for a requested number of steps `n`, so `Δt = T/n`.
    pub fn with_steps(t_max: usize, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Parameter("step count must be >= 1".into()));
        }
        if t_max % n_steps != 0 {
            return Err(Error::Divisibility { steps: n_steps, total: t_max });
        }
        Self::new(t_max, t_max / n_steps)
    }

    pub fn delta_t(&self) -> usize {
        self.delta_t
    }

    /// Grid points `[0, Δt, 2Δt, …, T]`.
    pub fn points(&self) -> &[usize] {
        &self.points
    }

    /// Number of reverse steps N.
    pub fn n_steps(&self) -> usize {
        self.points.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_are_exact_clamps() {
        let s = Schedule::new(100, 0.02, 0.995, 1.0).unwrap();
        assert_eq!(s.sr(0), 0.02);
        assert_eq!(s.sr(100), 0.995);
    }

    #[test]
    fn unit_norm_identity() {
        let s = Schedule::new(256, 0.02, 0.995, 1.0).unwrap();
        for t in 0..=256 {
            let norm = s.sr(t) * s.sr(t) + s.nr(t) * s.nr(t);
            assert!((norm - 1.0).abs() < 1e-12, "t={t}: {norm}");
        }
    }

    #[test]
    fn midpoint_matches_closed_form() {
        // sin((asin(0.02)+asin(0.995))/2) evaluated independently.
        let s = Schedule::new(100, 0.02, 0.995, 1.0).unwrap();
        assert!((s.sr(50) - 0.6782496056781244).abs() < 1e-15);
    }

    #[test]
    fn monotone_rates() {
        let s = Schedule::new(256, 0.02, 0.995, 3.0).unwrap();
        for t in 1..=256 {
            assert!(s.sr(t) > s.sr(t - 1));
            assert!(s.nr(t) < s.nr(t - 1));
        }
    }

    #[test]
    fn step_coefficient_zero_for_equal_rates() {
        let s = Schedule::new(100, 0.02, 0.995, 1.0).unwrap();
        assert_eq!(s.step_coefficient(60, 0).unwrap(), 0.0);
    }

    #[test]
    fn step_coefficient_matches_direct_substitution() {
        // Independently evaluated via both the rate form and the α form
        // (α = sr²); the two routes agree to the last ulp.
        let s = Schedule::new(100, 0.02, 0.995, 1.0).unwrap();
        let c = s.step_coefficient(100, 50).unwrap();
        assert!((c - (-0.9781315090250986)).abs() < 1e-12);
    }

    #[test]
    fn step_coefficient_range_errors() {
        let s = Schedule::new(100, 0.02, 0.995, 1.0).unwrap();
        assert!(s.step_coefficient(40, 50).is_err());
        assert!(s.step_coefficient(101, 1).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Schedule::new(0, 0.02, 0.995, 1.0).is_err());
        assert!(Schedule::new(100, 0.995, 0.02, 1.0).is_err());
        assert!(Schedule::new(100, 0.0, 0.995, 1.0).is_err());
        assert!(Schedule::new(100, 0.02, 1.0, 1.0).is_err());
        assert!(Schedule::new(100, 0.02, 0.995, 0.5).is_err());
    }

    #[test]
    fn time_grid_examples() {
        let g = TimeGrid::new(1000, 500).unwrap();
        assert_eq!(g.points(), &[0, 500, 1000]);
        assert_eq!(g.n_steps(), 2);

        let g = TimeGrid::new(10, 10).unwrap();
        assert_eq!(g.points(), &[0, 10]);
        assert_eq!(g.n_steps(), 1);

        assert!(matches!(
            TimeGrid::new(100, 7),
            Err(Error::Divisibility { steps: 7, total: 100 })
        ));
    }

    #[test]
    fn refined_grid_shares_table_values() {
        // Tables are indexed, not re-derived, so shared points agree bitwise.
        let s = Schedule::new(256, 0.02, 0.995, 1.0).unwrap();
        let coarse = TimeGrid::new(256, 64).unwrap();
        let fine = TimeGrid::new(256, 32).unwrap();
        for &t in coarse.points() {
            assert!(fine.points().contains(&t));
            let bits_a = s.sr(t).to_bits();
            let bits_b = s.sr(t).to_bits();
            assert_eq!(bits_a, bits_b);
        }
    }

    proptest! {
        #[test]
        fn prop_unit_norm(t_max in 1usize..400, lo in 0.001f64..0.5, hi in 0.6f64..0.9999) {
            let s = Schedule::new(t_max, lo, hi, 1.0).unwrap();
            for t in 0..=t_max {
                prop_assert!((s.sr(t) * s.sr(t) + s.nr(t) * s.nr(t) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn prop_step_coefficient_negative(t_max in 2usize..300, frac in 0.0f64..1.0, dfrac in 0.0f64..1.0) {
            let s = Schedule::new(t_max, 0.02, 0.995, 1.0).unwrap();
            let t = 1 + ((t_max - 1) as f64 * frac) as usize;
            let dt = 1 + ((t - 1) as f64 * dfrac) as usize;
            let c = s.step_coefficient(t, dt).unwrap();
            prop_assert!(c < 0.0, "c = {} at t = {}, dt = {}", c, t, dt);
        }
    }
}
