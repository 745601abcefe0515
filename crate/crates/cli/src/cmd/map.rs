use super::grid;
use crate::output::emit;
use crate::{usage, Ctx, Format};
use anyhow::Result;
use clap::Args;
use serde::{Deserialize, Serialize};
use std::process::ExitCode;
use vsi_core::odmr::{dbm_to_watts, field_map, CenterLine, Lineshape, SpectrumOptions};
use vsi_core::par::Exec;
use vsi_core::spin::Center;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapArgs {
    /// Comma-separated centers, or "both" [default: both]
    #[arg(long)]
    pub centers: Option<String>,
    /// First field, mT [default: 0]
    #[arg(long)]
    pub b_start: Option<f64>,
    /// Last field, mT [default: 9]
    #[arg(long)]
    pub b_end: Option<f64>,
    /// Number of fields [default: 91]
    #[arg(long)]
    pub b_points: Option<usize>,
    /// First frequency, MHz [default: 0]
    #[arg(long)]
    pub f_start: Option<f64>,
    /// Last frequency, MHz [default: 300]
    #[arg(long)]
    pub f_end: Option<f64>,
    /// Number of frequencies [default: 601]
    #[arg(long)]
    pub f_points: Option<usize>,
    /// RF power, dBm [default: 33]
    #[arg(long, allow_hyphen_values = true)]
    pub power_dbm: Option<f64>,
    /// lorentzian or gaussian [default: lorentzian]
    #[arg(long)]
    pub lineshape: Option<String>,
}

pub fn centers(spec: Option<&str>) -> Result<Vec<CenterLine>> {
    let spec = spec.unwrap_or("both");
    if spec.eq_ignore_ascii_case("both") {
        return Ok(CenterLine::both());
    }
    let mut out: Vec<CenterLine> = Vec::new();
    for name in spec.split(',').map(str::trim) {
        let c = Center::parse(name).ok_or_else(|| usage(format!("unknown center {name:?}, expected v1v3, v2 or both")))?;
        if out.iter().any(|l| l.system.center == c) {
            return Err(usage(format!("center {name} listed twice")));
        }
        out.push(CenterLine::preset(c));
    }
    Ok(out)
}

pub fn exec(ctx: &Ctx, a: MapArgs) -> Result<ExitCode> {
    let lines = centers(a.centers.as_deref())?;
    let b = grid("field", a.b_start.unwrap_or(0.0), a.b_end.unwrap_or(9.0), a.b_points.unwrap_or(91))?;
    let f = grid("frequency", a.f_start.unwrap_or(0.0), a.f_end.unwrap_or(300.0), a.f_points.unwrap_or(601))?;
    let lineshape = match a.lineshape.as_deref().map(str::to_ascii_lowercase).as_deref() {
        None | Some("lorentzian") => Lineshape::Lorentzian,
        Some("gaussian") => Lineshape::Gaussian,
        Some(other) => return Err(usage(format!("unknown lineshape {other:?}"))),
    };
    let dbm = a.power_dbm.unwrap_or(33.0);
    if !dbm.is_finite() {
        return Err(usage(format!("power {dbm} dBm is not finite")));
    }
    let opts = SpectrumOptions { lineshape, ..Default::default() };
    let map = field_map(&lines, b[0], b[b.len() - 1], b.len(), &f, dbm_to_watts(dbm), &opts, Exec::Parallel)?;
    let text = match ctx.format {
        Format::Csv => map.to_csv(),
        Format::Json => map.to_json() + "\n",
    };
    emit(ctx.output.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}
