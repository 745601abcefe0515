//! Per-center parameter sets tying the modules together.

use crate::bloch::experiments::Drive;
use crate::bloch::{BlochError, DecoherenceParams, Engine, EngineOptions, EnsembleSpec, OuNoise, Spread, Timing};
use crate::fit::{fit, FitOptions, ModelKind};
use crate::odmr::PowerLaws;
use crate::pump::{PumpLink, RateModel};
use crate::spin::{Center, SpinSystem};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Rabi,
    T1,
    Ramsey,
    Hahn,
    Cpmg,
}

impl ExperimentKind {
    pub fn all() -> [ExperimentKind; 5] {
        use ExperimentKind::*;
        [Rabi, T1, Ramsey, Hahn, Cpmg]
    }

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Rabi => "rabi",
            ExperimentKind::T1 => "t1",
            ExperimentKind::Ramsey => "ramsey",
            ExperimentKind::Hahn => "hahn",
            ExperimentKind::Cpmg => "cpmg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ExperimentKind::all().into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Measured values the presets are tuned to reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reported {
    pub t1_us: f64,
    pub t2_hahn_us: f64,
    pub t2_cpmg_us: f64,
    pub cpmg_stretch: f64,
    pub t2_star_ns: f64,
    /// Rabi fit [A, B, φ, ν_R (MHz), T (ns)].
    pub rabi_fit: [f64; 5],
}

impl Reported {
    pub fn of(center: Center) -> Self {
        match center {
            Center::V1V3 => Reported {
                t1_us: 142.1,
                t2_hahn_us: 3.73,
                t2_cpmg_us: 56.0,
                cpmg_stretch: 0.93,
                t2_star_ns: 38.0,
                rabi_fit: [0.54, -0.66, 0.06 * PI, 12.44, 99.29],
            },
            Center::V2 => Reported {
                t1_us: 107.0,
                t2_hahn_us: 3.31,
                t2_cpmg_us: 51.0,
                cpmg_stretch: 3.47,
                t2_star_ns: 31.0,
                rabi_fit: [0.65, 0.53, -0.08 * PI, 8.36, 204.81],
            },
        }
    }
}

/// Long-time CPMG suppression factor of an OU process with correlation
/// time `tau_c` under ideal π pulses spaced `spacing` apart:
/// 1 − (2τc/Δ)·tanh(Δ/(2τc)).
pub fn cpmg_filter_factor(spacing: f64, tau_c: f64) -> f64 {
    let x = spacing / (2.0 * tau_c);
    1.0 - x.tanh() / x
}

/// Hahn-echo envelope after total free time `t` for OU detuning noise and a
/// homogeneous floor `floor_t2`, with ideal pulses.
pub fn hahn_decay(noise: &OuNoise, floor_t2: f64, t: f64) -> f64 {
    let b = TAU * noise.sigma_mhz;
    let tc = noise.tau_c_us;
    let x = t / (2.0 * tc);
    let m = (-x).exp_m1();
    // Two opposite-sign halves: 2·self − 2·cross of the correlation integral.
    let s = 4.0 * tc * tc * (x + m) - 2.0 * tc * tc * m * m;
    (-0.5 * b * b * s - t / floor_t2).exp()
}

/// Points used when matching the fitted Hahn time: 31 on [0, 4·T_H].
pub const HAHN_CALIBRATION_POINTS: usize = 31;

fn fitted_hahn(noise: &OuNoise, floor: f64, t2_hahn: f64) -> Option<f64> {
    let x = crate::odmr::linspace(0.0, 4.0 * t2_hahn, HAHN_CALIBRATION_POINTS);
    let y: Vec<f64> = x.iter().map(|&t| hahn_decay(noise, floor, t)).collect();
    let r = fit(ModelKind::ExpDecay, &x, &y, None, &[1.0, t2_hahn], None, &FitOptions::default()).ok()?;
    r.converged.then_some(r.params[1])
}

/// OU amplitude and homogeneous floor T2 such that the long-time CPMG rate
/// b²τc·g + Γ_f equals 1/t2_cpmg and an exponential fit of the Hahn
/// envelope returns t2_hahn.
pub fn calibrate_noise(t2_hahn: f64, t2_cpmg: f64, spacing: f64, tau_c: f64) -> Result<(OuNoise, f64), BlochError> {
    let bad = |m: String| Err(BlochError::BadRelaxation(m));
    if !(t2_hahn > 0.0 && t2_cpmg > t2_hahn && spacing > 0.0 && tau_c > 0.0) {
        return bad(format!("need 0 < t2_hahn < t2_cpmg and positive spacing, tau_c; got {t2_hahn}, {t2_cpmg}, {spacing}, {tau_c}"));
    }
    let g = cpmg_filter_factor(spacing, tau_c);
    let gc = 1.0 / t2_cpmg;
    let build = |motional: f64| {
        let noise = OuNoise { sigma_mhz: (motional / tau_c).sqrt() / TAU, tau_c_us: tau_c };
        (noise, 1.0 / (gc - motional * g))
    };
    // The fitted Hahn time falls monotonically as the motional rate grows.
    let (mut lo, mut hi) = (0.0, gc / g * (1.0 - 1e-9));
    let at = |m: f64| {
        let (n, f) = build(m);
        fitted_hahn(&n, f, t2_hahn)
    };
    match at(hi) {
        Some(t) if t < t2_hahn => {}
        _ => return bad(format!("tau_c = {tau_c} µs cannot reach a Hahn time of {t2_hahn} µs")),
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match at(mid) {
            Some(t) if t > t2_hahn => lo = mid,
            Some(_) => hi = mid,
            None => return bad("Hahn calibration fit failed".into()),
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(build(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub center: Center,
    pub system: SpinSystem,
    pub laws: PowerLaws,
    pub rates: RateModel,
    pub pump: PumpLink,
    pub relax: DecoherenceParams,
    /// Drive of the Rabi measurement.
    pub rabi_drive: Drive,
    /// Damping time of the Rabi oscillation, realized as drive
    /// inhomogeneity, ns.
    pub rabi_t2_star_ns: f64,
    /// Drive of the Ramsey, Hahn, T1 and CPMG pulses.
    pub pulse_drive: Drive,
    pub cpmg_tau_us: f64,
    pub ramsey_detuning_mhz: f64,
    pub timing: Timing,
    pub reported: Reported,
}

impl Preset {
    pub fn of(center: Center) -> Self {
        let reported = Reported::of(center);
        let (pi_ns, cpmg_tau_us, tau_c) = match center {
            Center::V1V3 => (17.5, 0.05, 0.1),
            Center::V2 => (21.0, 0.2, 0.5),
        };
        let spacing = cpmg_tau_us + pi_ns * 1e-3;
        let (noise, floor) = calibrate_noise(reported.t2_hahn_us, reported.t2_cpmg_us, spacing, tau_c).expect("preset noise calibrates");
        let rates = RateModel::preset(center);
        Preset {
            center,
            system: SpinSystem::preset(center),
            laws: PowerLaws::preset(center),
            rates,
            pump: PumpLink::preset(center),
            relax: DecoherenceParams {
                t1_us: reported.t1_us,
                t2_us: floor,
                t2_star_ns: reported.t2_star_ns,
                noise: Some(noise),
                w_eq: 0.0,
            },
            rabi_drive: Drive::new(reported.rabi_fit[3]),
            rabi_t2_star_ns: reported.rabi_fit[4],
            pulse_drive: Drive::from_pi_ns(pi_ns),
            cpmg_tau_us,
            ramsey_detuning_mhz: 40.0,
            timing: Timing::default(),
            reported,
        }
    }

    pub fn drive(&self, kind: ExperimentKind) -> Drive {
        match kind {
            ExperimentKind::Rabi => self.rabi_drive,
            _ => self.pulse_drive,
        }
    }

    /// Rabi runs carry the drive spread and no static detuning; every other
    /// experiment uses the T2* detuning spread.
    pub fn ensemble(&self, kind: ExperimentKind, n_members: usize, seed: u64) -> EnsembleSpec {
        match kind {
            ExperimentKind::Rabi => EnsembleSpec::new(n_members, Spread::Delta, seed).with_drive(Spread::for_t2_star(self.rabi_t2_star_ns)),
            _ => EnsembleSpec::new(n_members, Spread::for_t2_star(self.relax.t2_star_ns), seed),
        }
    }

    pub fn engine(&self, kind: ExperimentKind, n_members: usize, seed: u64, options: EngineOptions) -> Result<Engine, BlochError> {
        Engine::new(self.relax, self.ensemble(kind, n_members, seed), self.pump, options)
    }
}
