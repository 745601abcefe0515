use super::fit::{report_convergence, result_csv};
use super::synth::model_kind;
use crate::output::{emit, json};
use crate::{usage, Ctx, Format};
use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vsi_core::bloch::experiments::run_curve;
use vsi_core::bloch::{EngineOptions, PulseMode};
use vsi_core::fit::{fit_auto, FitOptions, ModelKind};
use vsi_core::seq::ast::HeaderItem;
use vsi_core::seq::{compile_source, parse, serialize, set_override, templates, Family, SequenceSource};

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// Sequence file, or a built-in template such as rabi_v1v3
    pub sequence: String,
    /// Override a `let` binding or a header key (`tau=200ns`, `ensemble.members=16`)
    #[arg(long = "set", value_name = "KEY=EXPR")]
    pub set: Vec<String>,
    /// Compile only and print the number of programs
    #[arg(long)]
    pub dry_run: bool,
    /// Fit the curve: a model name, or "auto" for a template's own model
    #[arg(long)]
    pub fit: Option<String>,
    /// Where to write the fit result as JSON
    #[arg(long)]
    pub fit_output: Option<PathBuf>,
    /// finite or instantaneous [default: finite]
    #[arg(long)]
    pub pulses: Option<String>,
}

/// Source text and, for templates, the fit model that goes with it.
pub fn resolve(spec: &str) -> Result<(SequenceSource, Option<ModelKind>)> {
    let path = Path::new(spec);
    if path.is_file() {
        return Ok((SequenceSource::read(path).with_context(|| format!("reading {spec}"))?, None));
    }
    let name = spec.trim_start_matches("templates/").trim_end_matches(".seq");
    for (kind, center) in templates::all() {
        if templates::name(kind, center) == name {
            return Ok((SequenceSource::new(templates::source(kind, center), format!("templates/{name}.seq")), Some(templates::model(kind))));
        }
    }
    let names: Vec<String> = templates::all().into_iter().map(|(k, c)| templates::name(k, c)).collect();
    Err(usage(format!("{spec} is neither a file nor a template ({})", names.join(", "))))
}

/// Applies `--set` overrides and fills the ensemble seed from `--seed` when
/// the file sets none, then compiles.
pub fn compile_with(src: &SequenceSource, sets: &[String], seed: u64) -> Result<Family> {
    let mut ast = parse(src)?;
    let has_seed = ast.header.iter().any(|h| matches!(h, HeaderItem::Section { params, .. } if params.iter().any(|p| p.key == "seed")));
    let mut overrides: Vec<(String, String)> = Vec::new();
    if !has_seed {
        overrides.push(("ensemble.seed".into(), seed.to_string()));
    }
    for s in sets {
        let (k, v) = s.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=EXPR, got {s:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if overrides.is_empty() {
        return Ok(compile_source(src)?);
    }
    for (k, v) in &overrides {
        set_override(&mut ast, k, v)?;
    }
    let patched = SequenceSource::new(serialize(&ast), format!("{} (with overrides)", src.origin));
    Ok(compile_source(&patched)?)
}

pub fn exec(ctx: &Ctx, a: RunArgs) -> Result<ExitCode> {
    let (src, template_model) = resolve(&a.sequence)?;
    let family = compile_with(&src, &a.set, ctx.seed)?;
    if a.dry_run {
        let text = match ctx.format {
            Format::Csv => format!("programs\n{}\n", family.len()),
            Format::Json => json(&serde_json::json!({ "programs": family.len() }))?,
        };
        emit(ctx.output.as_deref(), &text)?;
        return Ok(ExitCode::SUCCESS);
    }
    let model = match a.fit.as_deref() {
        None => None,
        Some("auto") => Some(template_model.ok_or_else(|| usage("--fit auto needs a template; name the model for a file"))?),
        Some(name) => Some(model_kind(Some(name))?),
    };
    if model.is_some() && a.fit_output.is_none() && ctx.format == Format::Csv {
        return Err(usage("--fit with CSV output needs --fit-output for the fit result"));
    }
    let pulses = match a.pulses.as_deref() {
        None | Some("finite") => PulseMode::Finite,
        Some("instantaneous") => PulseMode::Instantaneous,
        Some(other) => return Err(usage(format!("unknown pulse mode {other:?}, expected finite or instantaneous"))),
    };
    let engine = family.settings.engine(EngineOptions { pulses, ..EngineOptions::default() })?;
    let curve = run_curve(&engine, &family.x, &family.programs)?;
    let fit = match model {
        Some(kind) => {
            let sigma = curve.stderr.iter().all(|s| *s > 0.0 && s.is_finite()).then_some(curve.stderr.as_slice());
            let opts = FitOptions { seed: ctx.seed, ..FitOptions::default() };
            Some(fit_auto(kind, &curve.x, &curve.signal, sigma, &opts)?)
        }
        None => None,
    };
    let text = match ctx.format {
        Format::Csv => curve.to_csv(),
        Format::Json => json(&serde_json::json!({
            "source": src.origin,
            "variable": family.variable,
            "x_unit": family.x_unit(),
            "curve": curve,
            "fit": fit,
        }))?,
    };
    emit(ctx.output.as_deref(), &text)?;
    let Some(r) = fit else {
        return Ok(ExitCode::SUCCESS);
    };
    if let Some(p) = &a.fit_output {
        let body = match p.extension().and_then(|e| e.to_str()) {
            Some("csv") => result_csv(&r)?,
            _ => json(&r)?,
        };
        emit(Some(p), &body)?;
    }
    Ok(report_convergence(&r))
}
