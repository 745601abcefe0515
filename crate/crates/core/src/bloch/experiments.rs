//! Standard pulsed experiments built as phase-cycled program families.

use super::{BlochError, Engine, Event, PulseProgram, RfPulse, Timing};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

pub const PHASE_X: f64 = 0.0;
pub const PHASE_Y: f64 = FRAC_PI_2;
pub const PHASE_MINUS_X: f64 = PI;

/// Normalized differential signal against a swept variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub signal: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Curve {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_value,signal,stderr_over_members\n");
        for i in 0..self.x.len() {
            let _ = writeln!(out, "{},{},{}", self.x[i], self.signal[i], self.stderr[i]);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curve serializes")
    }
}

/// Runs a program family and normalizes by the engine's full-inversion
/// signal for each program's readout window.
pub fn run_curve(engine: &Engine, x: &[f64], programs: &[PulseProgram]) -> Result<Curve, BlochError> {
    if x.len() != programs.len() {
        return Err(BlochError::BadSweep(format!("{} x values for {} programs", x.len(), programs.len())));
    }
    let raw = engine.run_family(programs)?;
    let mut signal = Vec::with_capacity(raw.len());
    let mut stderr = Vec::with_capacity(raw.len());
    for (p, (m, s)) in programs.iter().zip(raw) {
        let k = engine.normalization(p.readout_duration().unwrap_or(1.0));
        signal.push(m / k);
        stderr.push(s / k);
    }
    Ok(Curve { x: x.to_vec(), signal, stderr })
}

/// Resonant drive settings for a family of pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub rabi_mhz: f64,
    #[serde(default)]
    pub detuning_mhz: f64,
}

impl Drive {
    pub fn new(rabi_mhz: f64) -> Self {
        Drive { rabi_mhz, detuning_mhz: 0.0 }
    }

    /// Drive whose π pulse lasts `pi_ns`.
    pub fn from_pi_ns(pi_ns: f64) -> Self {
        Drive::new(1.0 / (2.0 * pi_ns * 1e-3))
    }

    pub fn pulse(&self, duration_us: f64, phase: f64) -> RfPulse {
        RfPulse { duration_us, phase_rad: phase, rabi_mhz: self.rabi_mhz, detuning_mhz: self.detuning_mhz }
    }

    pub fn rotation(&self, angle: f64, phase: f64) -> RfPulse {
        self.pulse(angle / (2.0 * PI * self.rabi_mhz), phase)
    }

    pub fn pi_us(&self) -> f64 {
        0.5 / self.rabi_mhz
    }
}

fn wait(d: f64) -> Option<Event> {
    (d > 0.0).then_some(Event::Wait { duration_us: d })
}

fn check_sweep(values: &[f64], name: &str) -> Result<(), BlochError> {
    match values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        Some(i) => Err(BlochError::BadSweep(format!("{name}[{i}] = {} must be finite and >= 0", values[i]))),
        None => Ok(()),
    }
}

fn framed(timing: &Timing, body: impl IntoIterator<Item = Option<Event>>) -> Vec<Event> {
    let mut ev = vec![Event::Laser { duration_us: timing.laser_us }];
    ev.extend(body.into_iter().flatten());
    ev.push(Event::Readout { duration_us: timing.readout_us });
    ev
}

/// Driven pulse of length `t` against a laser-only reference.
pub fn rabi_program(t: f64, drive: &Drive, timing: &Timing) -> PulseProgram {
    let pulse = (t > 0.0).then(|| Event::Rf(drive.pulse(t, PHASE_X)));
    PulseProgram::new(framed(timing, [pulse])).with_reference(framed(timing, []))
}

/// π pulse then a dark wait, against the same wait without the pulse.
pub fn t1_program(tau: f64, drive: &Drive, timing: &Timing) -> PulseProgram {
    let pi = Event::Rf(drive.rotation(PI, PHASE_X));
    PulseProgram::new(framed(timing, [Some(pi), wait(tau)])).with_reference(framed(timing, [wait(tau)]))
}

/// π/2 – τ – π/2 with the second pulse phase advanced by 2π·ν_det·τ; the
/// reference flips that pulse by π.
pub fn ramsey_program(tau: f64, detuning_mhz: f64, drive: &Drive, timing: &Timing) -> PulseProgram {
    let advance = 2.0 * PI * detuning_mhz * tau;
    let seq = |phase: f64| {
        framed(
            timing,
            [Some(Event::Rf(drive.rotation(FRAC_PI_2, PHASE_X))), wait(tau), Some(Event::Rf(drive.rotation(FRAC_PI_2, phase)))],
        )
    };
    PulseProgram::new(seq(PHASE_X + advance)).with_reference(seq(PHASE_MINUS_X + advance))
}

/// π/2_x – τ/2 – π_x – τ/2 – π/2_(±x).
pub fn hahn_program(tau: f64, drive: &Drive, timing: &Timing) -> PulseProgram {
    let seq = |phase: f64| {
        framed(
            timing,
            [
                Some(Event::Rf(drive.rotation(FRAC_PI_2, PHASE_X))),
                wait(tau / 2.0),
                Some(Event::Rf(drive.rotation(PI, PHASE_X))),
                wait(tau / 2.0),
                Some(Event::Rf(drive.rotation(FRAC_PI_2, phase))),
            ],
        )
    };
    PulseProgram::new(seq(PHASE_X)).with_reference(seq(PHASE_MINUS_X))
}

/// π/2_x – [τ/2 – π_y – τ/2]×n_pi – π/2_(∓x).
pub fn cpmg_program(n_pi: usize, tau: f64, drive: &Drive, timing: &Timing) -> PulseProgram {
    let seq = |phase: f64| {
        let mut body = vec![Some(Event::Rf(drive.rotation(FRAC_PI_2, PHASE_X)))];
        for _ in 0..n_pi {
            body.push(wait(tau / 2.0));
            body.push(Some(Event::Rf(drive.rotation(PI, PHASE_Y))));
            body.push(wait(tau / 2.0));
        }
        body.push(Some(Event::Rf(drive.rotation(FRAC_PI_2, phase))));
        framed(timing, body)
    };
    PulseProgram::new(seq(PHASE_MINUS_X)).with_reference(seq(PHASE_X))
}

pub fn rabi(engine: &Engine, durations: &[f64], drive: &Drive, timing: &Timing) -> Result<Curve, BlochError> {
    check_sweep(durations, "duration")?;
    let progs: Vec<_> = durations.iter().map(|&t| rabi_program(t, drive, timing)).collect();
    run_curve(engine, durations, &progs)
}

pub fn t1(engine: &Engine, waits: &[f64], drive: &Drive, timing: &Timing) -> Result<Curve, BlochError> {
    check_sweep(waits, "wait")?;
    let progs: Vec<_> = waits.iter().map(|&t| t1_program(t, drive, timing)).collect();
    run_curve(engine, waits, &progs)
}

pub fn ramsey(engine: &Engine, waits: &[f64], detuning_mhz: f64, drive: &Drive, timing: &Timing) -> Result<Curve, BlochError> {
    check_sweep(waits, "wait")?;
    let progs: Vec<_> = waits.iter().map(|&t| ramsey_program(t, detuning_mhz, drive, timing)).collect();
    run_curve(engine, waits, &progs)
}

pub fn hahn(engine: &Engine, totals: &[f64], drive: &Drive, timing: &Timing) -> Result<Curve, BlochError> {
    check_sweep(totals, "free time")?;
    let progs: Vec<_> = totals.iter().map(|&t| hahn_program(t, drive, timing)).collect();
    run_curve(engine, totals, &progs)
}

/// CPMG family over π-pulse counts; x is n_pi·(τ + τ_π).
pub fn cpmg(engine: &Engine, counts: &[usize], tau: f64, drive: &Drive, timing: &Timing) -> Result<Curve, BlochError> {
    check_sweep(&[tau], "tau")?;
    let x: Vec<f64> = counts.iter().map(|&n| n as f64 * (tau + drive.pi_us())).collect();
    let progs: Vec<_> = counts.iter().map(|&n| cpmg_program(n, tau, drive, timing)).collect();
    run_curve(engine, &x, &progs)
}

#[cfg(test)]
mod tests {
    use super::super::{DecoherenceParams, EngineOptions, EnsembleSpec, OuNoise, PulseMode, Spread};
    use super::*;
    use crate::pump::PumpLink;
    use approx::assert_abs_diff_eq;

    fn link() -> PumpLink {
        PumpLink { tau_pump: 11.0, w_pumped: 0.26, readout_gain: -0.067 }
    }

    fn engine(relax: DecoherenceParams, ens: EnsembleSpec, pulses: PulseMode) -> Engine {
        Engine::new(relax, ens, link(), EngineOptions { pulses, ..Default::default() }).unwrap()
    }

    #[test]
    fn ideal_rabi_follows_cosine() {
        let e = engine(DecoherenceParams::none(), EnsembleSpec::single(), PulseMode::Finite);
        let d = Drive::new(10.0);
        let ts = [0.0, 0.025, 0.05, 0.0731];
        let c = rabi(&e, &ts, &d, &Timing::default()).unwrap();
        for (t, s) in ts.iter().zip(&c.signal) {
            // gain < 0, so the normalized curve is −(cos − 1)/2.
            assert_abs_diff_eq!(*s, (1.0 - (2.0 * PI * 10.0 * t).cos()) / 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_rabi_is_flat() {
        let e = engine(DecoherenceParams::none(), EnsembleSpec::new(8, Spread::Lorentzian { hwhm_mhz: 2.0 }, 1), PulseMode::Finite);
        let c = rabi(&e, &[0.0, 0.1, 0.5], &Drive::new(0.0), &Timing::default()).unwrap();
        assert!(c.signal.iter().all(|s| s.abs() < 1e-15));
    }

    #[test]
    fn t1_starts_at_full_amplitude() {
        let relax = DecoherenceParams { t1_us: 100.0, t2_us: 50.0, ..DecoherenceParams::none() };
        let e = engine(relax, EnsembleSpec::single(), PulseMode::Instantaneous);
        let c = t1(&e, &[0.0, 100.0], &Drive::new(20.0), &Timing::default()).unwrap();
        assert_abs_diff_eq!(c.signal[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.signal[1], (-1.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn hahn_refocusing_is_distribution_independent() {
        let taus = [0.0, 0.3, 1.1, 2.5];
        let spreads = [Spread::Delta, Spread::Lorentzian { hwhm_mhz: 5.0 }, Spread::Gaussian { sigma_mhz: 3.0 }];
        let curves: Vec<Curve> = spreads
            .iter()
            .map(|s| {
                let e = engine(DecoherenceParams::none(), EnsembleSpec::new(50, *s, 4), PulseMode::Instantaneous);
                hahn(&e, &taus, &Drive::new(20.0), &Timing::default()).unwrap()
            })
            .collect();
        for c in &curves[1..] {
            for (a, b) in c.signal.iter().zip(&curves[0].signal) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn single_pulse_cpmg_equals_hahn() {
        let relax = DecoherenceParams { t1_us: 40.0, t2_us: 3.0, ..DecoherenceParams::none() };
        let e = engine(relax, EnsembleSpec::new(40, Spread::Lorentzian { hwhm_mhz: 4.0 }, 8), PulseMode::Instantaneous);
        let d = Drive::new(25.0);
        for tau in [0.2, 1.0, 3.0] {
            let c = cpmg(&e, &[1], tau, &d, &Timing::default()).unwrap();
            let h = hahn(&e, &[tau], &d, &Timing::default()).unwrap();
            assert_abs_diff_eq!(c.signal[0], h.signal[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn phase_cycle_is_antisymmetric() {
        let relax = DecoherenceParams {
            t1_us: 50.0,
            t2_us: 5.0,
            noise: Some(OuNoise { sigma_mhz: 0.3, tau_c_us: 0.2 }),
            ..DecoherenceParams::none()
        };
        let e = engine(relax, EnsembleSpec::new(16, Spread::Lorentzian { hwhm_mhz: 3.0 }, 2), PulseMode::Finite);
        let d = Drive::new(15.0);
        let p = hahn_program(1.2, &d, &Timing::default());
        let swapped = PulseProgram { main: p.reference.clone().unwrap(), reference: Some(p.main.clone()) };
        let a = e.member_signals(&p).unwrap();
        let b = e.member_signals(&swapped).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(*x, -*y, epsilon = 1e-15);
        }
    }

    /// e^{−½⟨φ²⟩} for a Hahn echo of total free time t under OU noise.
    fn hahn_ou_oracle(noise: OuNoise, t: f64) -> f64 {
        let (b, tc) = (2.0 * PI * noise.sigma_mhz, noise.tau_c_us);
        let x = t / 2.0 / tc;
        let s = 4.0 * tc * tc * (x - 1.0 + (-x).exp()) - 2.0 * tc * tc * (1.0 - (-x).exp()).powi(2);
        (-0.5 * b * b * s).exp()
    }

    #[test]
    fn hahn_under_ou_noise_matches_filter_integral() {
        let noise = OuNoise { sigma_mhz: 0.3, tau_c_us: 0.4 };
        let relax = DecoherenceParams { noise: Some(noise), ..DecoherenceParams::none() };
        let e = engine(relax, EnsembleSpec::new(4000, Spread::Delta, 21), PulseMode::Instantaneous);
        let taus = [0.5, 1.5, 3.0];
        let c = hahn(&e, &taus, &Drive::new(25.0), &Timing::default()).unwrap();
        for (i, &tau) in taus.iter().enumerate() {
            let expect = hahn_ou_oracle(noise, tau);
            // The test link has negative readout gain.
            assert!((-c.signal[i] - expect).abs() < 4.0 * c.stderr[i] + 1e-3, "t={tau} sim {} oracle {expect}", -c.signal[i]);
        }
    }

    #[test]
    fn motional_narrowing_equalizes_echo_and_fid_rates() {
        let noise = OuNoise { sigma_mhz: 1.0, tau_c_us: 0.002 };
        let rate = noise.motional_rate();
        let relax = DecoherenceParams { noise: Some(noise), ..DecoherenceParams::none() };
        let e = engine(relax, EnsembleSpec::new(3000, Spread::Delta, 5), PulseMode::Instantaneous);
        let taus: Vec<f64> = (0..8).map(|k| 1.0 + 0.5 * k as f64).collect();
        let d = Drive::new(25.0);
        let h = hahn(&e, &taus, &d, &Timing::default()).unwrap();
        let f = ramsey(&e, &taus, 0.0, &d, &Timing::default()).unwrap();
        let slope = |c: &Curve| {
            let n = c.x.len() as f64;
            let ly: Vec<f64> = c.signal.iter().map(|v| v.abs().ln()).collect();
            let mx = c.x.iter().sum::<f64>() / n;
            let my = ly.iter().sum::<f64>() / n;
            let sxy: f64 = c.x.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = c.x.iter().map(|x| (x - mx).powi(2)).sum();
            -sxy / sxx
        };
        let (rh, rf) = (slope(&h), slope(&f));
        assert!((rh / rate - 1.0).abs() < 0.05, "echo rate {rh} vs {rate}");
        assert!((rf / rate - 1.0).abs() < 0.05, "fid rate {rf} vs {rate}");
    }

    #[test]
    fn negative_sweep_value_is_named() {
        let e = engine(DecoherenceParams::none(), EnsembleSpec::single(), PulseMode::Finite);
        let err = hahn(&e, &[0.0, -1.0], &Drive::new(5.0), &Timing::default()).unwrap_err();
        assert!(err.to_string().contains("free time[1]"), "{err}");
    }

    #[test]
    fn curve_csv_header() {
        let c = Curve { x: vec![0.0], signal: vec![1.0], stderr: vec![0.0] };
        assert_eq!(c.to_csv(), "x_value,signal,stderr_over_members\n0,1,0\n");
    }
}
