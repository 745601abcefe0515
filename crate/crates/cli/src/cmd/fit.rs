use super::synth::model_kind;
use crate::output::{emit, json};
use crate::{Ctx, Format};
use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use vsi_core::fit::{fit_auto, parse_csv, read_csv_path, FitOptions, FitResult};

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// CSV with x,y[,sigma] columns; "-" reads stdin
    pub data: PathBuf,
    /// Model to fit
    #[arg(long)]
    pub model: Option<String>,
    /// Extra jittered starts [default: 0]
    #[arg(long)]
    pub multistart: Option<usize>,
    /// Ignore a sigma column
    #[arg(long)]
    pub unweighted: bool,
}

/// `param,value,stderr` rows under comment lines with the fit summary.
pub fn result_csv(r: &FitResult) -> Result<String> {
    let mut s = String::new();
    writeln!(s, "# model={} converged={} iterations={} rss={}", r.kind, r.converged, r.iterations, r.rss)?;
    writeln!(s, "# {}", r.message)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["param", "value", "stderr"])?;
    for (i, name) in r.param_names.iter().enumerate() {
        let err = r.stderr.as_ref().map_or(String::new(), |e| e[i].to_string());
        w.write_record([name.clone(), r.params[i].to_string(), err])?;
    }
    Ok(s + &String::from_utf8(w.into_inner()?)?)
}

pub fn report_convergence(r: &FitResult) -> ExitCode {
    if r.converged {
        ExitCode::SUCCESS
    } else {
        eprintln!("warning: {} fit did not converge: {}", r.kind, r.message);
        ExitCode::from(3)
    }
}

pub fn exec(ctx: &Ctx, a: FitArgs) -> Result<ExitCode> {
    let kind = model_kind(a.model.as_deref())?;
    let data = if a.data.as_os_str() == "-" {
        parse_csv(std::io::stdin().lock()).context("reading stdin")?
    } else {
        read_csv_path(&a.data)?
    };
    let sigma = if a.unweighted { None } else { data.usable_sigma() };
    let opts = FitOptions { seed: ctx.seed, ..FitOptions::default() }.with_multistart(a.multistart.unwrap_or(0));
    let r = fit_auto(kind, &data.x, &data.y, sigma, &opts)?;
    let text = match ctx.format {
        Format::Csv => result_csv(&r)?,
        Format::Json => json(&r)?,
    };
    emit(ctx.output.as_deref(), &text)?;
    Ok(report_convergence(&r))
}
