//! Built-in sequence files for the five standard experiments of each
//! center. The text is canonical, so it equals its own serialization.

use crate::fit::ModelKind;
use crate::preset::{ExperimentKind, Preset};
use crate::spin::Center;
use std::fmt::Write;

/// `rabi_v1v3`, `cpmg_v2`, ...
pub fn name(kind: ExperimentKind, center: Center) -> String {
    format!("{}_{}", kind.name(), center.name())
}

pub fn all() -> Vec<(ExperimentKind, Center)> {
    ExperimentKind::all().into_iter().flat_map(|k| Center::all().map(|c| (k, c))).collect()
}

/// Looks a template up by [`name`].
pub fn by_name(name: &str) -> Option<String> {
    let name = name.trim_end_matches(".seq");
    all().into_iter().find(|&(k, c)| self::name(k, c) == name).map(|(k, c)| source(k, c))
}

/// Decay model fitted to the template's curve.
pub fn model(kind: ExperimentKind) -> ModelKind {
    match kind {
        ExperimentKind::Rabi => ModelKind::Rabi,
        ExperimentKind::Ramsey => ModelKind::Fid,
        ExperimentKind::T1 | ExperimentKind::Hahn => ModelKind::ExpDecay,
        ExperimentKind::Cpmg => ModelKind::StretchedExp,
    }
}

/// Rounds away the last-digit noise of derived preset values.
fn ns(us: f64) -> f64 {
    (us * 1e9).round() / 1e6
}

pub fn source(kind: ExperimentKind, center: Center) -> String {
    let p = Preset::of(center);
    let t_pi = ns(p.pulse_drive.pi_us());
    let (laser, readout) = (p.timing.laser_us, p.timing.readout_us);
    let members = match kind {
        ExperimentKind::Rabi | ExperimentKind::Cpmg => 64,
        ExperimentKind::T1 => 16,
        ExperimentKind::Ramsey | ExperimentKind::Hahn => 1024,
    };
    let mut s = format!("center {};\n", center.name());
    let frame = |body: &str| format!("    laser dur={laser}us;\n{body}    readout dur={readout}us;\n");
    let (main, reference, sweep) = match kind {
        ExperimentKind::Rabi => {
            writeln!(s, "ensemble members={members} lorentzian=0MHz drive_lorentzian=1/(2*pi*{}ns);", p.rabi_t2_star_ns).unwrap();
            writeln!(s, "let nu_r = {}MHz;", p.rabi_drive.rabi_mhz).unwrap();
            (frame("    rf dur=t phase=x rabi=nu_r;\n"), frame(""), "sweep t = 0:5:1000ns;\n".to_string())
        }
        _ => {
            writeln!(s, "ensemble members={members};\nlet t_pi = {t_pi}ns;\nlet nu_r = 0.5/t_pi;").unwrap();
            let half = |phase: &str| format!("    rf dur=t_pi/2 phase={phase} rabi=nu_r;\n");
            match kind {
                ExperimentKind::T1 => (
                    frame("    rf dur=t_pi phase=x rabi=nu_r;\n    wait dur=tau;\n"),
                    frame("    wait dur=tau;\n"),
                    "sweep tau = 0:20:600us;\n".to_string(),
                ),
                ExperimentKind::Ramsey => {
                    writeln!(s, "let nu_det = {}MHz;", p.ramsey_detuning_mhz).unwrap();
                    let seq = |phase: &str| frame(&format!("{}    wait dur=tau;\n{}", half("x"), half(&format!("{phase} + 2*pi*nu_det*tau"))));
                    (seq("x"), seq("-x"), "sweep tau = 0:1:200ns;\n".to_string())
                }
                ExperimentKind::Hahn => {
                    let seq = |phase: &str| {
                        frame(&format!("{}    wait dur=tau/2;\n    rf dur=t_pi phase=x rabi=nu_r;\n    wait dur=tau/2;\n{}", half("x"), half(phase)))
                    };
                    (seq("x"), seq("-x"), "sweep tau = 0:0.5:15us;\n".to_string())
                }
                _ => {
                    writeln!(s, "let tau = {}ns;", ns(p.cpmg_tau_us)).unwrap();
                    let seq = |phase: &str| {
                        frame(&format!(
                            "{}    repeat 2*n {{\n        wait dur=tau/2;\n        rf dur=t_pi phase=y rabi=nu_r;\n        wait dur=tau/2;\n    }}\n{}",
                            half("x"),
                            half(phase)
                        ))
                    };
                    // About 200 µs of total free evolution in 21 points.
                    let step = (100.0 / (p.cpmg_tau_us + p.pulse_drive.pi_us()) / 20.0).round();
                    (seq("-x"), seq("x"), format!("sweep n = 0:{step}:{};\naxis 2*n*(tau + t_pi);\n", 20.0 * step))
                }
            }
        }
    };
    write!(s, "\nsequence {{\n{main}}}\n\nreference {{\n{reference}}}\n\n{sweep}").unwrap();
    s
}
