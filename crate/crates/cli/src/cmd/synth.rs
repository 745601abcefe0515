use crate::output::{emit, json, Table};
use crate::{usage, Ctx, Format};
use anyhow::Result;
use clap::Args;
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use std::process::ExitCode;
use vsi_core::fit::{synthesize, DecayModel, ModelKind};

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    /// rabi, fid, exp_decay, stretched_exp, saturation or sqrt_linewidth
    #[arg(long)]
    pub model: Option<String>,
    /// Parameters as NAME=VALUE pairs or plain values in model order, comma-separated
    #[arg(long, allow_hyphen_values = true)]
    pub params: Option<String>,
    /// Standard deviation of the added Gaussian noise [default: 0]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Number of points [default: 101]
    #[arg(long)]
    pub n_points: Option<usize>,
    /// First x [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub x_start: Option<f64>,
    /// Last x [default: a few decay times or periods of the model]
    #[arg(long, allow_hyphen_values = true)]
    pub x_end: Option<f64>,
}

pub fn model_kind(name: Option<&str>) -> Result<ModelKind> {
    let names: Vec<_> = ModelKind::all().iter().map(|k| k.name()).collect();
    let name = name.ok_or_else(|| usage(format!("--model is required ({})", names.join(", "))))?;
    ModelKind::parse(name).ok_or_else(|| usage(format!("unknown model {name:?}, expected one of {}", names.join(", "))))
}

pub fn parse_params(kind: ModelKind, text: &str) -> Result<Vec<f64>> {
    let names = kind.param_names();
    let mut out = vec![None; names.len()];
    let parts: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    for (i, part) in parts.iter().enumerate() {
        let (slot, value) = match part.split_once('=') {
            Some((n, v)) => {
                let slot = names.iter().position(|k| k.eq_ignore_ascii_case(n.trim()));
                (slot.ok_or_else(|| usage(format!("{kind} has no parameter {n:?} (expected {})", names.join(", "))))?, v.trim())
            }
            None if i < names.len() => (i, *part),
            None => return Err(usage(format!("{kind} takes {} parameters, got {}", names.len(), parts.len()))),
        };
        let v: f64 = value.parse().map_err(|_| usage(format!("parameter {} = {value:?} is not a number", names[slot])))?;
        if out[slot].replace(v).is_some() {
            return Err(usage(format!("parameter {} given twice", names[slot])));
        }
    }
    out.iter()
        .zip(names)
        .map(|(v, n)| v.ok_or_else(|| usage(format!("missing parameter {n} for {kind} (expected {})", names.join(", ")))))
        .collect()
}

/// Default x range end: a few decay times, periods or saturation powers.
fn default_end(kind: ModelKind, p: &[f64]) -> f64 {
    match kind {
        ModelKind::Rabi => 3.0 * p[4],
        ModelKind::Fid => 4.0 * p[3],
        ModelKind::ExpDecay => 5.0 * p[1],
        ModelKind::StretchedExp => 2.5 * p[1],
        ModelKind::Saturation => 10.0 * p[1],
        ModelKind::SqrtLinewidth => 4.0,
    }
}

pub fn exec(ctx: &Ctx, a: SynthArgs) -> Result<ExitCode> {
    let kind = model_kind(a.model.as_deref())?;
    let params = parse_params(kind, a.params.as_deref().unwrap_or(""))?;
    let model = DecayModel::new(kind, params).map_err(|e| usage(e.to_string()))?;
    let n = a.n_points.unwrap_or(101);
    if n == 0 {
        return Err(usage("n_points = 0 gives an empty dataset"));
    }
    let noise = a.noise.unwrap_or(0.0);
    let x0 = a.x_start.unwrap_or(0.0);
    let x1 = a.x_end.unwrap_or_else(|| x0 + default_end(kind, &model.params));
    let x = super::grid("x", x0, x1, n)?;
    let y = synthesize(&model, &x, noise, ctx.seed).map_err(|e| usage(e.to_string()))?;
    let named: Vec<String> = kind.param_names().iter().zip(&model.params).map(|(n, v)| format!("{n}={v}")).collect();
    let text = match ctx.format {
        Format::Csv => {
            let mut s = String::new();
            writeln!(s, "# vsi synth model={kind} {}", named.join(" "))?;
            writeln!(s, "# noise={noise} n_points={n} x_start={x0} x_end={x1} seed={}", ctx.seed)?;
            let mut t = Table::new(&["x", "y", "sigma"]);
            t.rows = x.iter().zip(&y).map(|(&xi, &yi)| vec![xi, yi, noise]).collect();
            s + &t.to_csv()?
        }
        Format::Json => json(&serde_json::json!({
            "model": kind,
            "param_names": kind.param_names(),
            "params": model.params,
            "noise": noise,
            "seed": ctx.seed,
            "x": x,
            "y": y,
        }))?,
    };
    emit(ctx.output.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}
