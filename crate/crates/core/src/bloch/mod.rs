//! Bloch-vector dynamics of the optically addressed ground doublet.
//!
//! Units: time in µs, frequencies in MHz, phases in radians. The rotating
//! frame field for a drive of Rabi frequency Ω, phase φ and detuning Δ is
//! 2π(Ω cos φ, Ω sin φ, Δ) rad/µs.

mod engine;
mod ensemble;
pub mod experiments;

pub use engine::{Engine, EngineOptions, MemberTrace, PulseMode, Timing};
pub use ensemble::{EnsembleSpec, Member, NoiseTrack, OuNoise, Spread, TAIL_QUANTILE};
pub use experiments::Curve;

use nalgebra::{Const, DimMin, Matrix3, Matrix4, SMatrix, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BlochError {
    #[error("invalid decoherence parameters: {0}")]
    BadRelaxation(String),
    #[error("invalid ensemble: {0}")]
    BadEnsemble(String),
    #[error("invalid pulse program: {}", join_issues(.0))]
    InvalidProgram(Vec<ProgramIssue>),
    #[error("invalid sweep: {0}")]
    BadSweep(String),
    #[error(transparent)]
    Pump(#[from] crate::pump::PumpError),
}

fn join_issues(issues: &[ProgramIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    Main,
    Reference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramIssue {
    pub block: Block,
    /// Offending event index, if the issue is tied to one event.
    pub event: Option<usize>,
    pub message: String,
}

impl fmt::Display for ProgramIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let block = match self.block {
            Block::Main => "main",
            Block::Reference => "reference",
        };
        match self.event {
            Some(i) => write!(f, "{block} event {i}: {}", self.message),
            None => write!(f, "{block}: {}", self.message),
        }
    }
}

/// Ground-doublet Bloch vector. `w` is the population difference.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochState {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl BlochState {
    pub fn new(u: f64, v: f64, w: f64) -> Self {
        BlochState { u, v, w }
    }

    pub fn thermal() -> Self {
        BlochState::default()
    }

    pub fn norm(&self) -> f64 {
        (self.u * self.u + self.v * self.v + self.w * self.w).sqrt()
    }

    fn as_array(&self) -> [f64; 3] {
        [self.u, self.v, self.w]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceParams {
    /// Longitudinal relaxation time, µs. `f64::INFINITY` disables it.
    pub t1_us: f64,
    /// Homogeneous transverse relaxation time, µs.
    pub t2_us: f64,
    /// Inhomogeneous dephasing time, ns. Realized through the ensemble
    /// detuning spread, see [`Spread::for_t2_star`].
    pub t2_star_ns: f64,
    pub noise: Option<OuNoise>,
    /// Equilibrium `w` that T1 relaxes toward.
    pub w_eq: f64,
}

impl Default for DecoherenceParams {
    fn default() -> Self {
        DecoherenceParams::none()
    }
}

impl DecoherenceParams {
    /// No relaxation, no noise.
    pub fn none() -> Self {
        DecoherenceParams {
            t1_us: f64::INFINITY,
            t2_us: f64::INFINITY,
            t2_star_ns: f64::INFINITY,
            noise: None,
            w_eq: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), BlochError> {
        let positive = |name: &str, v: f64| {
            if v.is_nan() || v <= 0.0 {
                Err(BlochError::BadRelaxation(format!("{name} must be positive, got {v}")))
            } else {
                Ok(())
            }
        };
        positive("t1", self.t1_us)?;
        positive("t2", self.t2_us)?;
        positive("t2*", self.t2_star_ns)?;
        if self.t2_us > 2.0 * self.t1_us * (1.0 + 1e-12) {
            return Err(BlochError::BadRelaxation(format!(
                "t2 = {} µs exceeds 2·t1 = {} µs",
                self.t2_us,
                2.0 * self.t1_us
            )));
        }
        if self.t2_star_ns.is_finite() && self.t2_star_ns * 1e-3 > self.t2_us * (1.0 + 1e-12) {
            return Err(BlochError::BadRelaxation(format!(
                "t2* = {} ns exceeds t2 = {} µs",
                self.t2_star_ns, self.t2_us
            )));
        }
        if !self.w_eq.is_finite() || self.w_eq.abs() > 1.0 {
            return Err(BlochError::BadRelaxation(format!("w_eq = {} outside [-1, 1]", self.w_eq)));
        }
        if let Some(n) = self.noise {
            n.validate()?;
        }
        Ok(())
    }

    pub fn relaxes(&self) -> bool {
        self.t1_us.is_finite() || self.t2_us.is_finite()
    }

    fn rates(&self) -> (f64, f64) {
        (1.0 / self.t1_us, 1.0 / self.t2_us)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfPulse {
    pub duration_us: f64,
    pub phase_rad: f64,
    pub rabi_mhz: f64,
    pub detuning_mhz: f64,
}

impl RfPulse {
    pub fn new(duration_us: f64, phase_rad: f64, rabi_mhz: f64) -> Self {
        RfPulse { duration_us, phase_rad, rabi_mhz, detuning_mhz: 0.0 }
    }

    /// Pulse producing a rotation of `angle` radians at `rabi_mhz`.
    pub fn with_angle(angle: f64, phase_rad: f64, rabi_mhz: f64) -> Self {
        RfPulse::new(angle / (TAU * rabi_mhz), phase_rad, rabi_mhz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Laser { duration_us: f64 },
    Rf(RfPulse),
    Wait { duration_us: f64 },
    Readout { duration_us: f64 },
}

impl Event {
    pub fn duration(&self) -> f64 {
        match *self {
            Event::Laser { duration_us } | Event::Wait { duration_us } | Event::Readout { duration_us } => duration_us,
            Event::Rf(p) => p.duration_us,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Event::Laser { .. } => "laser",
            Event::Rf(_) => "rf",
            Event::Wait { .. } => "wait",
            Event::Readout { .. } => "readout",
        }
    }
}

/// A main event list plus an optional reference list whose readout is
/// subtracted from the main readout.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PulseProgram {
    pub main: Vec<Event>,
    pub reference: Option<Vec<Event>>,
}

impl PulseProgram {
    pub fn new(main: Vec<Event>) -> Self {
        PulseProgram { main, reference: None }
    }

    pub fn with_reference(mut self, reference: Vec<Event>) -> Self {
        self.reference = Some(reference);
        self
    }

    /// Collects every structural problem instead of stopping at the first.
    pub fn issues(&self) -> Vec<ProgramIssue> {
        let mut out = Vec::new();
        check_block(Block::Main, &self.main, &mut out);
        if let Some(r) = &self.reference {
            check_block(Block::Reference, r, &mut out);
        }
        out
    }

    pub fn validate(&self) -> Result<(), BlochError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(BlochError::InvalidProgram(issues))
        }
    }

    pub fn readout_duration(&self) -> Option<f64> {
        self.main.iter().find_map(|e| match e {
            Event::Readout { duration_us } => Some(*duration_us),
            _ => None,
        })
    }
}

fn check_block(block: Block, events: &[Event], out: &mut Vec<ProgramIssue>) {
    let mut issue = |event: Option<usize>, message: String| out.push(ProgramIssue { block, event, message });
    if events.is_empty() {
        issue(None, "no events".into());
        return;
    }
    if !matches!(events[0], Event::Laser { .. }) {
        issue(Some(0), format!("must begin with a laser event, found {}", events[0].name()));
    }
    let mut readouts = 0;
    for (i, e) in events.iter().enumerate() {
        let d = e.duration();
        if !(d.is_finite() && d > 0.0) {
            issue(Some(i), format!("{} duration must be positive, got {d}", e.name()));
        }
        if let Event::Rf(p) = e {
            if !(p.rabi_mhz.is_finite() && p.phase_rad.is_finite() && p.detuning_mhz.is_finite()) {
                issue(Some(i), "rf parameters must be finite".into());
            }
        }
        if let Event::Readout { .. } = e {
            readouts += 1;
            if readouts > 1 {
                issue(Some(i), "second readout".into());
            }
        }
    }
    if readouts == 0 {
        issue(None, "no readout".into());
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Rotates `m` by |omega|·t about omega (rad/µs).
fn rotate(m: [f64; 3], omega: [f64; 3], t: f64) -> [f64; 3] {
    let mag = dot(omega, omega).sqrt();
    let angle = mag * t;
    if mag == 0.0 || angle == 0.0 {
        return m;
    }
    let n = [omega[0] / mag, omega[1] / mag, omega[2] / mag];
    let (s, c) = angle.sin_cos();
    let nxm = cross(n, m);
    let nm = dot(n, m) * (1.0 - c);
    [
        m[0] * c + nxm[0] * s + n[0] * nm,
        m[1] * c + nxm[1] * s + n[1] * nm,
        m[2] * c + nxm[2] * s + n[2] * nm,
    ]
}

/// Exact propagator of dM/dt = Ω×M − Γ(M − M_eq) over `t`.
fn drive_exact(state: BlochState, omega: [f64; 3], t: f64, relax: &DecoherenceParams) -> BlochState {
    if !relax.relaxes() {
        let [u, v, w] = rotate(state.as_array(), omega, t);
        return BlochState { u, v, w };
    }
    let (g1, g2) = relax.rates();
    let [ox, oy, oz] = omega;
    if relax.w_eq == 0.0 {
        #[rustfmt::skip]
        let a = Matrix3::new(
            -g2, -oz,  oy,
             oz, -g2, -ox,
            -oy,  ox, -g1,
        ) * t;
        let y = expm(a) * Vector3::new(state.u, state.v, state.w);
        return BlochState { u: y[0], v: y[1], w: y[2] };
    }
    #[rustfmt::skip]
    let a = Matrix4::new(
        -g2, -oz,  oy, 0.0,
         oz, -g2, -ox, 0.0,
        -oy,  ox, -g1, g1 * relax.w_eq,
        0.0, 0.0, 0.0, 0.0,
    ) * t;
    let y = expm(a) * Vector4::new(state.u, state.v, state.w, 1.0);
    BlochState { u: y[0], v: y[1], w: y[2] }
}

/// exp(A) by a [6/6] Padé approximant with scaling and squaring. Cheaper
/// than the general routine for these small generators; agrees with it to
/// round-off.
fn expm<const N: usize>(a: SMatrix<f64, N, N>) -> SMatrix<f64, N, N>
where
    Const<N>: DimMin<Const<N>, Output = Const<N>>,
{
    const C: [f64; 7] = [1.0, 0.5, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0];
    let norm = a.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let a = a / 2f64.powi(s);
    let i = SMatrix::<f64, N, N>::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let u = a * (i * C[1] + a2 * C[3] + a4 * C[5]);
    let v = i * C[0] + a2 * C[2] + a4 * C[4] + a4 * a2 * C[6];
    let mut r = (v - u).lu().solve(&(v + u)).expect("Padé denominator is well conditioned after scaling");
    for _ in 0..s {
        r = r * r;
    }
    r
}

/// Rotating-frame field vector for a pulse with extra detuning, rad/µs.
pub fn drive_vector(rabi_mhz: f64, phase_rad: f64, detuning_mhz: f64) -> [f64; 3] {
    let (s, c) = phase_rad.sin_cos();
    [TAU * rabi_mhz * c, TAU * rabi_mhz * s, TAU * detuning_mhz]
}

/// Applies a finite RF pulse. `extra_detuning_mhz` is added to the pulse's own
/// detuning.
pub fn apply_rf(state: BlochState, pulse: &RfPulse, extra_detuning_mhz: f64, relax: &DecoherenceParams) -> BlochState {
    let omega = drive_vector(pulse.rabi_mhz, pulse.phase_rad, pulse.detuning_mhz + extra_detuning_mhz);
    drive_exact(state, omega, pulse.duration_us, relax)
}

/// Ideal rotation by 2π·rabi·duration about the in-plane pulse axis, taking
/// no time.
pub fn apply_instantaneous(state: BlochState, pulse: &RfPulse) -> BlochState {
    let omega = drive_vector(pulse.rabi_mhz, pulse.phase_rad, 0.0);
    let [u, v, w] = rotate(state.as_array(), omega, pulse.duration_us);
    BlochState { u, v, w }
}

/// Closed-form precession at `detuning_mhz` with T1/T2 relaxation.
pub fn free_evolution(state: BlochState, detuning_mhz: f64, t: f64, relax: &DecoherenceParams) -> BlochState {
    let (s, c) = (TAU * detuning_mhz * t).sin_cos();
    let (g1, g2) = relax.rates();
    let e2 = (-g2 * t).exp();
    let e1 = (-g1 * t).exp();
    BlochState {
        u: e2 * (state.u * c - state.v * s),
        v: e2 * (state.u * s + state.v * c),
        w: relax.w_eq + (state.w - relax.w_eq) * e1,
    }
}
