//! Ensemble members: static detuning, drive inhomogeneity and per-member
//! detuning noise.

use super::BlochError;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::{PI, TAU};

/// Quantile at which sampled distributions are truncated on each side.
pub const TAIL_QUANTILE: f64 = 1e-4;

const NOISE_SALT: u64 = 0x6a09_e667_f3bc_c909;

/// Distribution of a per-member offset, MHz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Spread {
    #[default]
    Delta,
    Lorentzian { hwhm_mhz: f64 },
    Gaussian { sigma_mhz: f64 },
}

impl Spread {
    /// Lorentzian whose free-induction decay is exp(−t/T2*).
    pub fn for_t2_star(t2_star_ns: f64) -> Spread {
        if t2_star_ns.is_finite() {
            Spread::Lorentzian { hwhm_mhz: 1.0 / (TAU * t2_star_ns * 1e-3) }
        } else {
            Spread::Delta
        }
    }

    pub fn validate(&self) -> Result<(), BlochError> {
        let w = match *self {
            Spread::Delta => return Ok(()),
            Spread::Lorentzian { hwhm_mhz } => hwhm_mhz,
            Spread::Gaussian { sigma_mhz } => sigma_mhz,
        };
        if w.is_finite() && w > 0.0 {
            Ok(())
        } else {
            Err(BlochError::BadEnsemble(format!("spread width must be positive, got {w}")))
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Spread::Delta => 0.0,
            Spread::Lorentzian { hwhm_mhz } => hwhm_mhz * (PI * (u - 0.5)).tan(),
            Spread::Gaussian { sigma_mhz } => {
                sigma_mhz * Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(u)
            }
        }
    }

    fn is_delta(&self) -> bool {
        matches!(self, Spread::Delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuNoise {
    /// Stationary standard deviation, MHz.
    pub sigma_mhz: f64,
    /// Correlation time, µs.
    pub tau_c_us: f64,
}

impl OuNoise {
    pub fn validate(&self) -> Result<(), BlochError> {
        if !(self.sigma_mhz.is_finite() && self.sigma_mhz >= 0.0) {
            return Err(BlochError::BadRelaxation(format!("noise sigma must be >= 0, got {}", self.sigma_mhz)));
        }
        if !(self.tau_c_us.is_finite() && self.tau_c_us > 0.0) {
            return Err(BlochError::BadRelaxation(format!("noise tau_c must be > 0, got {}", self.tau_c_us)));
        }
        Ok(())
    }

    /// Long-time dephasing rate b²τc of a free spin, 1/µs.
    pub fn motional_rate(&self) -> f64 {
        let b = TAU * self.sigma_mhz;
        b * b * self.tau_c_us
    }
}

/// One realization of the detuning noise, advanced with the exact
/// Ornstein–Uhlenbeck update.
#[derive(Debug, Clone)]
pub struct NoiseTrack {
    noise: Option<OuNoise>,
    value: f64,
    rng: ChaCha8Rng,
}

impl NoiseTrack {
    pub fn new(noise: Option<OuNoise>, seed: u64, member: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_SALT);
        rng.set_stream(member as u64);
        let value = match noise {
            Some(n) => n.sigma_mhz * rng.sample::<f64, _>(StandardNormal),
            None => 0.0,
        };
        NoiseTrack { noise, value, rng }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_active(&self) -> bool {
        self.noise.is_some_and(|n| n.sigma_mhz > 0.0)
    }

    /// Advances by `dt` and returns ∫ξ dt over the step (MHz·µs), drawn
    /// jointly with the end value from their exact Gaussian law.
    pub fn advance(&mut self, dt: f64) -> f64 {
        let Some(n) = self.noise else { return 0.0 };
        if dt <= 0.0 || n.sigma_mhz == 0.0 {
            return 0.0;
        }
        let tau = n.tau_c_us;
        let r = dt / tau;
        let a = (-r).exp();
        let one_minus_a = -(-r).exp_m1();
        let var_x = n.sigma_mhz * n.sigma_mhz * one_minus_a * (1.0 + a);
        let var_i = n.sigma_mhz * n.sigma_mhz * tau * tau * integral_variance_factor(r);
        let cov = n.sigma_mhz * n.sigma_mhz * tau * one_minus_a * one_minus_a;
        let z1: f64 = self.rng.sample(StandardNormal);
        let z2: f64 = self.rng.sample(StandardNormal);
        let sd_x = var_x.sqrt();
        let k = if sd_x > 0.0 { cov / sd_x } else { 0.0 };
        let integral = self.value * tau * one_minus_a + k * z1 + (var_i - k * k).max(0.0).sqrt() * z2;
        self.value = self.value * a + sd_x * z1;
        integral
    }
}

/// 2r − 3 + 4e^{−r} − e^{−2r}, the conditional variance of the OU integral
/// in units of σ²τc², with a series for small r.
pub(crate) fn integral_variance_factor(r: f64) -> f64 {
    if r < 1e-2 {
        r * r * r * (2.0 / 3.0 - r * (0.5 - r * (7.0 / 30.0 - r / 12.0)))
    } else {
        let m = (-r).exp_m1();
        2.0 * r + 2.0 * m - m * m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub index: usize,
    pub detuning_mhz: f64,
    /// Added to the nominal Rabi frequency of every nonzero drive.
    pub drive_offset_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_members: usize,
    pub detuning: Spread,
    #[serde(default)]
    pub drive: Spread,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(n_members: usize, detuning: Spread, seed: u64) -> Self {
        EnsembleSpec { n_members, detuning, drive: Spread::Delta, seed }
    }

    pub fn single() -> Self {
        EnsembleSpec::new(1, Spread::Delta, 0)
    }

    pub fn with_drive(mut self, drive: Spread) -> Self {
        self.drive = drive;
        self
    }

    pub fn validate(&self) -> Result<(), BlochError> {
        if self.n_members == 0 {
            return Err(BlochError::BadEnsemble("n_members must be at least 1".into()));
        }
        self.detuning.validate()?;
        self.drive.validate()
    }

    /// Stratified inverse-CDF samples; the drive strata are paired with the
    /// detuning strata through an independent permutation.
    pub fn members(&self) -> Result<Vec<Member>, BlochError> {
        self.validate()?;
        let n = self.n_members;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let draw = |spread: &Spread, rng: &mut ChaCha8Rng| -> Vec<f64> {
            if spread.is_delta() {
                return vec![0.0; n];
            }
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(rng);
            strata
                .into_iter()
                .map(|k| {
                    let jitter: f64 = if n == 1 { 0.5 } else { rng.random() };
                    let u = TAIL_QUANTILE + (1.0 - 2.0 * TAIL_QUANTILE) * (k as f64 + jitter) / n as f64;
                    spread.quantile(u)
                })
                .collect()
        };
        let det = draw(&self.detuning, &mut rng);
        let drv = draw(&self.drive, &mut rng);
        Ok((0..n)
            .map(|i| Member { index: i, detuning_mhz: det[i], drive_offset_mhz: drv[i] })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn members_are_reproducible() {
        let spec = EnsembleSpec::new(64, Spread::Lorentzian { hwhm_mhz: 2.0 }, 9).with_drive(Spread::Gaussian { sigma_mhz: 0.3 });
        assert_eq!(spec.members().unwrap(), spec.members().unwrap());
        let other = EnsembleSpec { seed: 10, ..spec };
        assert_ne!(spec.members().unwrap(), other.members().unwrap());
    }

    #[test]
    fn stratified_samples_cover_every_stratum() {
        let spec = EnsembleSpec::new(100, Spread::Gaussian { sigma_mhz: 1.0 }, 1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut bins = vec![0; 100];
        for m in spec.members().unwrap() {
            let u = (normal.cdf(m.detuning_mhz) - TAIL_QUANTILE) / (1.0 - 2.0 * TAIL_QUANTILE);
            bins[((u * 100.0) as usize).min(99)] += 1;
        }
        assert!(bins.iter().all(|&b| b == 1));
    }

    #[test]
    fn lorentzian_quantile_is_symmetric() {
        let s = Spread::Lorentzian { hwhm_mhz: 3.0 };
        assert_abs_diff_eq!(s.quantile(0.75), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.quantile(0.2), -s.quantile(0.8), epsilon = 1e-12);
    }

    #[test]
    fn integral_variance_series_matches_closed_form() {
        for r in [1e-2f64, 2e-2, 5e-2] {
            let m = (-r).exp_m1();
            let direct = 2.0 * r + 2.0 * m - m * m;
            let series = r * r * r * (2.0 / 3.0 - r * (0.5 - r * (7.0 / 30.0 - r / 12.0)));
            assert!((direct / series - 1.0).abs() < 1e-6 * (r / 1e-2).powi(4) + 1e-9, "{r}");
        }
    }

    #[test]
    fn integrated_noise_has_stationary_variance() {
        // From a stationary start the integral has variance 2σ²τ²(r − 1 + e^{−r}).
        let n = OuNoise { sigma_mhz: 0.4, tau_c_us: 0.3 };
        let (dt, members) = (0.9, 20_000);
        let mut acc = 0.0;
        for i in 0..members {
            let mut t = NoiseTrack::new(Some(n), 17, i);
            let phi = t.advance(dt);
            acc += phi * phi;
        }
        let r = dt / n.tau_c_us;
        let expect = 2.0 * 0.16 * 0.09 * (r - 1.0 + (-r).exp());
        assert!((acc / members as f64 / expect - 1.0).abs() < 0.04, "{} vs {expect}", acc / members as f64);
    }

    #[test]
    fn noise_track_has_stationary_variance() {
        let n = OuNoise { sigma_mhz: 0.5, tau_c_us: 0.2 };
        let mut acc = 0.0;
        let mut acc_lag = 0.0;
        let members = 4000;
        for i in 0..members {
            let mut t = NoiseTrack::new(Some(n), 3, i);
            let _ = t.advance(0.37);
            let a = t.value();
            let _ = t.advance(0.2);
            acc += a * a;
            acc_lag += a * t.value();
        }
        let var = acc / members as f64;
        let cov = acc_lag / members as f64;
        assert!((var / 0.25 - 1.0).abs() < 0.08, "variance {var}");
        assert!((cov / (0.25 * (-1.0f64).exp()) - 1.0).abs() < 0.15, "lag covariance {cov}");
    }
}
