use super::ast::*;
use super::{ErrorKind, RawError, SeqError};
use crate::bloch::{BlochError, DecoherenceParams, Engine, EngineOptions, EnsembleSpec, Event, OuNoise, PulseProgram, RfPulse, Spread};
use crate::preset::Preset;
use crate::pump::PumpLink;
use crate::spin::Center;
use std::collections::HashMap;
use std::f64::consts::PI;

pub(crate) type Env = HashMap<String, f64>;

/// Value of `e` in µs / MHz; NaN for an unbound symbol.
pub(crate) fn eval(e: &Expr, env: &Env) -> f64 {
    match e {
        Expr::Num { value, unit, .. } => value * unit.map_or(1.0, Unit::factor),
        Expr::Sym { name, .. } => env.get(name).copied().unwrap_or(f64::NAN),
        Expr::Axis { axis, .. } => axis.phase(),
        Expr::Pi { .. } => PI,
        Expr::Neg { expr, .. } => -eval(expr, env),
        Expr::Bin { op, lhs, rhs, .. } => {
            let (a, b) = (eval(lhs, env), eval(rhs, env));
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
            }
        }
    }
}

/// Physical settings from the header, starting from the center preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub center: Center,
    pub relax: DecoherenceParams,
    pub ensemble: EnsembleSpec,
    pub pump: PumpLink,
}

impl Settings {
    pub fn engine(&self, options: EngineOptions) -> Result<Engine, BlochError> {
        Engine::new(self.relax, self.ensemble, self.pump, options)
    }
}

/// Default member count when the header names none.
pub const DEFAULT_MEMBERS: usize = 64;

/// Upper bound on the events of one compiled block.
pub const MAX_EVENTS: usize = 1_000_000;

/// One program per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub variable: String,
    pub unit: Option<Unit>,
    /// Grid in the sweep's own unit.
    pub values: Vec<f64>,
    /// Axis values in µs, MHz or plain numbers, see `x_dim`.
    pub x: Vec<f64>,
    pub x_dim: Dim,
    pub programs: Vec<PulseProgram>,
    pub settings: Settings,
}

impl Family {
    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    /// Unit label of `x`.
    pub fn x_unit(&self) -> String {
        match self.x_dim {
            DIMENSIONLESS => String::new(),
            TIME => "us".into(),
            FREQUENCY => "MHz".into(),
            d if d > 0 => format!("us^{d}"),
            d => format!("MHz^{}", -d),
        }
    }
}

pub fn compile(ast: &SequenceAst) -> Result<Family, SeqError> {
    compile_raw(ast).map_err(|e| e.locate(None))
}

fn fail(kind: ErrorKind, span: Span, grid: Option<usize>, message: String) -> RawError {
    RawError { kind, span, message, grid_index: grid }
}

fn finite(v: f64, what: &str, span: Span, grid: Option<usize>) -> Result<f64, RawError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(fail(ErrorKind::Evaluation, span, grid, format!("{what} evaluates to {v}")))
    }
}

fn uses(e: &Expr, names: &[&str]) -> bool {
    let mut syms = Vec::new();
    e.symbols(&mut syms);
    syms.iter().any(|(s, _)| names.contains(&s.as_str()))
}

pub(crate) fn compile_raw(ast: &SequenceAst) -> Result<Family, RawError> {
    let var = ast.sweep.var.as_str();
    let lets: Vec<(&str, &Expr)> = ast
        .header
        .iter()
        .filter_map(|h| match h {
            HeaderItem::Let { name, value, .. } => Some((name.as_str(), value)),
            _ => None,
        })
        .collect();

    // Bindings that never change across the grid.
    let mut varying = vec![var];
    let mut consts = Env::new();
    for &(name, value) in &lets {
        if uses(value, &varying) {
            varying.push(name);
        } else {
            consts.insert(name.to_string(), eval(value, &consts));
        }
    }
    let settings = settings(ast, &consts)?;

    let unit_factor = ast.sweep.range.unit.map_or(1.0, Unit::factor);
    let values = ast.sweep.range.values();
    let x_dim = match &ast.axis {
        Some(a) => axis_dim(a, ast),
        None => ast.sweep.range.dim(),
    };
    let mut x = Vec::with_capacity(values.len());
    let mut programs = Vec::with_capacity(values.len());
    for (i, &v) in values.iter().enumerate() {
        let mut env = consts.clone();
        env.insert(var.to_string(), v * unit_factor);
        for &(name, value) in &lets {
            if varying.contains(&name) {
                let r = finite(eval(value, &env), name, value.span(), Some(i))?;
                env.insert(name.to_string(), r);
            }
        }
        let main = events(&ast.main.body, &env, i)?;
        let mut program = PulseProgram::new(main);
        if let Some(r) = &ast.reference {
            program = program.with_reference(events(&r.body, &env, i)?);
        }
        programs.push(program);
        x.push(match &ast.axis {
            Some(a) => finite(eval(a, &env), "axis", a.span(), Some(i))?,
            None => v * unit_factor,
        });
    }
    Ok(Family { variable: var.to_string(), unit: ast.sweep.range.unit, values, x, x_dim, programs, settings })
}

/// Dimension of an already checked axis expression.
fn axis_dim(e: &Expr, ast: &SequenceAst) -> Dim {
    fn go(e: &Expr, dims: &HashMap<&str, Dim>) -> Dim {
        match e {
            Expr::Num { unit, .. } => unit.map_or(DIMENSIONLESS, Unit::dim),
            Expr::Sym { name, .. } => dims.get(name.as_str()).copied().unwrap_or(DIMENSIONLESS),
            Expr::Axis { .. } | Expr::Pi { .. } => DIMENSIONLESS,
            Expr::Neg { expr, .. } => go(expr, dims),
            Expr::Bin { op, lhs, rhs, .. } => match op {
                BinOp::Add | BinOp::Sub => go(lhs, dims),
                BinOp::Mul => go(lhs, dims).saturating_add(go(rhs, dims)),
                BinOp::Div => go(lhs, dims).saturating_sub(go(rhs, dims)),
            },
        }
    }
    let mut dims = HashMap::new();
    dims.insert(ast.sweep.var.as_str(), ast.sweep.range.dim());
    for h in &ast.header {
        if let HeaderItem::Let { name, value, .. } = h {
            let d = go(value, &dims);
            dims.insert(name.as_str(), d);
        }
    }
    go(e, &dims)
}

fn count(v: f64, span: Span, grid: Option<usize>) -> Result<usize, RawError> {
    let n = v.round();
    if !(v.is_finite() && v >= 0.0 && (v - n).abs() <= 1e-9 * n.max(1.0)) {
        return Err(fail(ErrorKind::Evaluation, span, grid, format!("expected a nonnegative integer, got {v}")));
    }
    if n > 1e6 {
        return Err(fail(ErrorKind::Evaluation, span, grid, format!("{n} exceeds the limit of 10^6")));
    }
    Ok(n as usize)
}

fn events(body: &[Stmt], env: &Env, grid: usize) -> Result<Vec<Event>, RawError> {
    let mut out = Vec::new();
    push_events(body, env, grid, &mut out)?;
    Ok(out)
}

fn push_events(body: &[Stmt], env: &Env, grid: usize, out: &mut Vec<Event>) -> Result<(), RawError> {
    for s in body {
        match s {
            Stmt::Repeat { count: c, body, span } => {
                let n = count(eval(c, env), *span, Some(grid))?;
                for _ in 0..n {
                    push_events(body, env, grid, out)?;
                    if out.len() > MAX_EVENTS {
                        return Err(fail(ErrorKind::Evaluation, *span, Some(grid), format!("program exceeds {MAX_EVENTS} events")));
                    }
                }
            }
            Stmt::Event { kind, params, span } => {
                let get = |key: &str| -> Result<Option<f64>, RawError> {
                    params.iter().find(|p| p.key == key).map(|p| finite(eval(&p.value, env), key, p.span, Some(grid))).transpose()
                };
                let dur_span = params.iter().find(|p| p.key == "dur").map_or(*span, |p| p.span);
                let dur = get("dur")?.unwrap_or(f64::NAN);
                let droppable = matches!(kind, EventKind::Rf | EventKind::Wait);
                if dur < 0.0 || (dur == 0.0 && !droppable) {
                    return Err(fail(
                        ErrorKind::NonpositiveDuration,
                        dur_span,
                        Some(grid),
                        format!("{} duration must be positive, got {dur} us", kind.name()),
                    ));
                }
                if dur == 0.0 {
                    continue;
                }
                out.push(match kind {
                    EventKind::Laser => Event::Laser { duration_us: dur },
                    EventKind::Wait => Event::Wait { duration_us: dur },
                    EventKind::Readout => Event::Readout { duration_us: dur },
                    EventKind::Rf => Event::Rf(RfPulse {
                        duration_us: dur,
                        phase_rad: get("phase")?.unwrap_or(0.0),
                        rabi_mhz: get("rabi")?.unwrap_or(0.0),
                        detuning_mhz: get("detuning")?.unwrap_or(0.0),
                    }),
                });
            }
        }
    }
    Ok(())
}

fn width(v: f64, key: &str, span: Span) -> Result<f64, RawError> {
    if v < 0.0 {
        return Err(fail(ErrorKind::Evaluation, span, None, format!("{key} width must be nonnegative, got {v}")));
    }
    Ok(v)
}

fn settings(ast: &SequenceAst, consts: &Env) -> Result<Settings, RawError> {
    let center = ast
        .header
        .iter()
        .find_map(|h| match h {
            HeaderItem::Center { center, .. } => Some(*center),
            _ => None,
        })
        .unwrap_or(Center::V1V3);
    let preset = Preset::of(center);
    let mut relax = preset.relax;
    let mut ensemble = None;
    for h in &ast.header {
        let HeaderItem::Section { section, params, span } = h else { continue };
        let mut vals = HashMap::new();
        for p in params {
            vals.insert(p.key.as_str(), (finite(eval(&p.value, consts), &p.key, p.span, None)?, p.span));
        }
        let get = |k: &str| vals.get(k).copied();
        match section {
            Section::Relax => {
                if let Some((v, _)) = get("t1") {
                    relax.t1_us = v;
                }
                if let Some((v, _)) = get("t2") {
                    relax.t2_us = v;
                }
                if let Some((v, _)) = get("t2_star") {
                    relax.t2_star_ns = v * 1e3;
                }
                if let Some((v, _)) = get("w_eq") {
                    relax.w_eq = v;
                }
            }
            Section::Noise => {
                let sigma = get("sigma").map(|s| s.0).or(relax.noise.map(|n| n.sigma_mhz));
                let tau_c = get("tau_c").map(|s| s.0).or(relax.noise.map(|n| n.tau_c_us));
                relax.noise = match (sigma, tau_c) {
                    (Some(0.0), _) => None,
                    (Some(sigma_mhz), Some(tau_c_us)) => Some(OuNoise { sigma_mhz, tau_c_us }),
                    (None, None) => None,
                    _ => return Err(fail(ErrorKind::Evaluation, *span, None, "noise needs both sigma and tau_c".into())),
                };
            }
            Section::Ensemble => {
                let members = match get("members") {
                    Some((v, s)) => count(v, s, None)?,
                    None => DEFAULT_MEMBERS,
                };
                let seed = match get("seed") {
                    Some((v, s)) if v < 9.007_199_254_740_992e15 => count(v, s, None).map(|n| n as u64)?,
                    Some((v, s)) => return Err(fail(ErrorKind::Evaluation, s, None, format!("seed {v} exceeds 2^53"))),
                    None => 0,
                };
                let spread = |l: &str, g: &str| -> Result<Option<Spread>, RawError> {
                    Ok(match (get(l), get(g)) {
                        (Some((v, s)), _) => Some(if width(v, l, s)? == 0.0 { Spread::Delta } else { Spread::Lorentzian { hwhm_mhz: v } }),
                        (_, Some((v, s))) => Some(if width(v, g, s)? == 0.0 { Spread::Delta } else { Spread::Gaussian { sigma_mhz: v } }),
                        _ => None,
                    })
                };
                ensemble = Some((members, seed, spread("lorentzian", "gaussian")?, spread("drive_lorentzian", "drive_gaussian")?));
            }
        }
    }
    let (members, seed, detuning, drive) = ensemble.unwrap_or((DEFAULT_MEMBERS, 0, None, None));
    let detuning = detuning.unwrap_or_else(|| Spread::for_t2_star(relax.t2_star_ns));
    let ensemble = EnsembleSpec::new(members, detuning, seed).with_drive(drive.unwrap_or(Spread::Delta));
    Ok(Settings { center, relax, ensemble, pump: preset.pump })
}
