use super::{center, grid};
use crate::output::{emit, json, Table};
use crate::{Ctx, Format};
use anyhow::Result;
use clap::Args;
use serde::{Deserialize, Serialize};
use std::process::ExitCode;
use vsi_core::spin::{axial_levels_by_m, Center, SpinSystem};

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelsArgs {
    /// v1v3 or v2 [default: v1v3]
    #[arg(long)]
    pub center: Option<String>,
    /// First field, mT [default: 0]
    #[arg(long)]
    pub b_start: Option<f64>,
    /// Last field, mT [default: 9]
    #[arg(long)]
    pub b_end: Option<f64>,
    /// Number of fields [default: 91]
    #[arg(long)]
    pub points: Option<usize>,
}

pub const COLUMNS: [&str; 8] = ["B_mT", "E_m+3/2", "E_m+1/2", "E_m-1/2", "E_m-3/2", "nu1", "nu2", "central"];

/// Levels by m and the three ΔmS = ±1 branch frequencies, all in MHz.
/// nu1 joins +3/2 and +1/2, nu2 joins −1/2 and −3/2, central joins ±1/2.
pub fn table(center: Center, b: &[f64]) -> Table {
    let sys = SpinSystem::preset(center);
    let mut t = Table::new(&COLUMNS);
    for &bz in b {
        let e = axial_levels_by_m(&sys, bz);
        t.rows.push(vec![bz, e[0], e[1], e[2], e[3], (e[0] - e[1]).abs(), (e[2] - e[3]).abs(), (e[1] - e[2]).abs()]);
    }
    t
}

pub fn exec(ctx: &Ctx, a: LevelsArgs) -> Result<ExitCode> {
    let c = center(a.center.as_deref(), Center::V1V3)?;
    let b = grid("field", a.b_start.unwrap_or(0.0), a.b_end.unwrap_or(9.0), a.points.unwrap_or(91))?;
    let t = table(c, &b);
    let text = match ctx.format {
        Format::Csv => t.to_csv()?,
        Format::Json => json(&serde_json::json!({ "center": c.name(), "columns": t.columns, "rows": t.rows }))?,
    };
    emit(ctx.output.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}
