use super::ensemble::{EnsembleSpec, Member, NoiseTrack};
use super::{apply_instantaneous, apply_rf, free_evolution, BlochError, BlochState, DecoherenceParams, Event, PulseProgram, RfPulse};
use crate::par::{self, Exec};
use crate::pump::PumpLink;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseMode {
    /// Pulses take their duration and see detuning, noise and relaxation.
    #[default]
    Finite,
    /// Ideal rotations that take no time.
    Instantaneous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    pub pulses: PulseMode,
    pub exec: Exec,
    /// Segments per correlation time when noise acts during a pulse.
    pub noise_steps_per_tau_c: f64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { pulses: PulseMode::Finite, exec: Exec::Parallel, noise_steps_per_tau_c: 4.0 }
    }
}

/// Laser and readout durations shared by the standard experiments, µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub laser_us: f64,
    pub readout_us: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing { laser_us: 300.0, readout_us: 4.0 }
    }
}

/// Bloch state after each event of one member's run.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberTrace {
    pub states: Vec<BlochState>,
    pub readout: f64,
}

#[derive(Debug, Clone)]
pub struct Engine {
    relax: DecoherenceParams,
    ensemble: EnsembleSpec,
    pump: PumpLink,
    options: EngineOptions,
    members: Vec<Member>,
}

impl Engine {
    pub fn new(relax: DecoherenceParams, ensemble: EnsembleSpec, pump: PumpLink, options: EngineOptions) -> Result<Self, BlochError> {
        relax.validate()?;
        if !(pump.tau_pump >= 0.0 && pump.w_pumped.is_finite() && pump.readout_gain.is_finite()) {
            return Err(BlochError::BadRelaxation(format!("invalid pump link {pump:?}")));
        }
        if !(options.noise_steps_per_tau_c >= 1.0) {
            return Err(BlochError::BadEnsemble("noise_steps_per_tau_c must be >= 1".into()));
        }
        let members = ensemble.members()?;
        Ok(Engine { relax, ensemble, pump, options, members })
    }

    pub fn relax(&self) -> &DecoherenceParams {
        &self.relax
    }

    pub fn ensemble(&self) -> &EnsembleSpec {
        &self.ensemble
    }

    pub fn pump(&self) -> &PumpLink {
        &self.pump
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.options.exec = exec;
        self
    }

    /// Fraction of a polarization change seen by a readout window of `d` µs.
    pub fn readout_window(&self, d: f64) -> f64 {
        let tau = self.pump.tau_pump;
        if tau == 0.0 {
            0.0
        } else {
            tau / d * (1.0 - (-d / tau).exp())
        }
    }

    /// Divides raw differential signals so that a full inversion of the
    /// pumped polarization reads ±1.
    pub fn normalization(&self, readout_us: f64) -> f64 {
        let k = 2.0 * (self.pump.readout_gain * self.pump.w_pumped).abs() * self.readout_window(readout_us);
        if k > 0.0 {
            k
        } else {
            1.0
        }
    }

    fn pumped(&self, s: BlochState, d: f64) -> BlochState {
        let wp = self.pump.w_pumped;
        let decay = if self.pump.tau_pump == 0.0 { 0.0 } else { (-d / self.pump.tau_pump).exp() };
        BlochState { u: 0.0, v: 0.0, w: wp + (s.w - wp) * decay }
    }

    fn step_limit(&self) -> Option<f64> {
        self.relax
            .noise
            .filter(|n| n.sigma_mhz > 0.0)
            .map(|n| n.tau_c_us / self.options.noise_steps_per_tau_c)
    }

    fn simulate(&self, events: &[Event], member: &Member, mut trace: Option<&mut Vec<BlochState>>) -> f64 {
        let mut s = BlochState::thermal();
        let mut noise = NoiseTrack::new(self.relax.noise, self.ensemble.seed, member.index);
        let h_max = self.step_limit();
        let mut readout = f64::NAN;
        for e in events {
            match *e {
                Event::Laser { duration_us } => {
                    s = self.pumped(s, duration_us);
                    let _ = noise.advance(duration_us);
                }
                Event::Readout { duration_us } => {
                    let wp = self.pump.w_pumped;
                    readout = self.pump.readout_gain * (wp + (s.w - wp) * self.readout_window(duration_us));
                    s = self.pumped(s, duration_us);
                    let _ = noise.advance(duration_us);
                }
                Event::Wait { duration_us } => {
                    // Free precession only depends on the integrated detuning.
                    let phase = noise.advance(duration_us);
                    s = free_evolution(s, member.detuning_mhz + phase / duration_us, duration_us, &self.relax);
                }
                Event::Rf(p) => {
                    let rabi = if p.rabi_mhz == 0.0 { 0.0 } else { p.rabi_mhz + member.drive_offset_mhz };
                    match self.options.pulses {
                        PulseMode::Instantaneous => {
                            s = apply_instantaneous(s, &RfPulse { rabi_mhz: rabi, ..p });
                        }
                        PulseMode::Finite => {
                            s = piecewise(s, p.duration_us, h_max, &mut noise, |s, h, xi| {
                                let seg = RfPulse { duration_us: h, rabi_mhz: rabi, ..p };
                                apply_rf(s, &seg, member.detuning_mhz + xi, &self.relax)
                            });
                        }
                    }
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(s);
            }
        }
        readout
    }

    /// Runs one member through an event list, recording the state after
    /// every event.
    pub fn trace(&self, events: &[Event], member: usize) -> Result<MemberTrace, BlochError> {
        let m = self
            .members
            .get(member)
            .ok_or_else(|| BlochError::BadEnsemble(format!("member {member} out of range")))?;
        let mut states = Vec::with_capacity(events.len());
        let readout = self.simulate(events, m, Some(&mut states));
        Ok(MemberTrace { states, readout })
    }

    fn member_signal(&self, program: &PulseProgram, member: &Member) -> f64 {
        let main = self.simulate(&program.main, member, None);
        match &program.reference {
            Some(r) => main - self.simulate(r, member, None),
            None => main,
        }
    }

    /// Main minus reference readout for every member, in member order.
    pub fn member_signals(&self, program: &PulseProgram) -> Result<Vec<f64>, BlochError> {
        program.validate()?;
        Ok(par::map_slice(self.options.exec, &self.members, |m| self.member_signal(program, m)))
    }

    /// Ensemble mean and its standard error.
    pub fn run(&self, program: &PulseProgram) -> Result<(f64, f64), BlochError> {
        Ok(par::mean_and_stderr(&self.member_signals(program)?))
    }

    /// Runs many programs with the work split over (program, member) pairs.
    pub fn run_family(&self, programs: &[PulseProgram]) -> Result<Vec<(f64, f64)>, BlochError> {
        for p in programs {
            p.validate()?;
        }
        let n = self.members.len();
        let flat = par::map_indexed(self.options.exec, programs.len() * n, |k| {
            self.member_signal(&programs[k / n], &self.members[k % n])
        });
        Ok(flat.chunks(n).map(par::mean_and_stderr).collect())
    }
}

/// Splits a driven interval into segments no longer than `h_max`, each
/// seeing the mean noise detuning over that segment.
fn piecewise<F>(mut s: BlochState, duration: f64, h_max: Option<f64>, noise: &mut NoiseTrack, step: F) -> BlochState
where
    F: Fn(BlochState, f64, f64) -> BlochState,
{
    let n = h_max.map_or(1, |h| (duration / h).ceil().max(1.0) as usize);
    let h = duration / n as f64;
    for _ in 0..n {
        let mean = noise.advance(h) / h;
        s = step(s, h, mean);
    }
    s
}
