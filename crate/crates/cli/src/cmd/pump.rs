use super::center;
use crate::output::{emit, json, Table};
use crate::{usage, Ctx, Format};
use anyhow::Result;
use clap::Args;
use serde::{Deserialize, Serialize};
use std::process::ExitCode;
use vsi_core::pump::{pumping_time_constant, steady_state, transient_from, Populations, RateModel};
use vsi_core::spin::Center;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpArgs {
    /// Rate preset, v1v3 or v2 [default: v2]
    #[arg(long)]
    pub center: Option<String>,
    /// Simulated time, µs [default: 20 pumping time constants]
    #[arg(long)]
    pub duration: Option<f64>,
    /// Sample spacing, µs [default: 0.5]
    #[arg(long)]
    pub dt: Option<f64>,
    /// Pump rate override, 1/µs
    #[arg(long)]
    pub w_pump: Option<f64>,
    /// Laser power, mW, scaling the preset pump rate
    #[arg(long)]
    pub laser_mw: Option<f64>,
}

pub const COLUMNS: [&str; 7] = ["t_us", "p0", "p1", "p2", "p3", "p4", "polarization"];

pub fn model(a: &PumpArgs) -> Result<RateModel> {
    let mut m = RateModel::preset(center(a.center.as_deref(), Center::V2)?);
    if let Some(mw) = a.laser_mw {
        m = m.at_laser_power(mw);
    }
    if let Some(w) = a.w_pump {
        m = m.with_pump(w);
    }
    m.validate().map_err(|e| usage(e.to_string()))?;
    Ok(m)
}

pub fn exec(ctx: &Ctx, a: PumpArgs) -> Result<ExitCode> {
    let m = model(&a)?;
    let tau = pumping_time_constant(&m)?;
    let duration = match a.duration {
        Some(d) => d,
        None if tau.is_finite() => (20.0 * tau).ceil(),
        None => 100.0,
    };
    let dt = a.dt.unwrap_or(0.5);
    if !(duration > 0.0 && duration.is_finite() && dt > 0.0 && dt <= duration) {
        return Err(usage(format!("need 0 < dt <= duration, got dt={dt} duration={duration}")));
    }
    let series = transient_from(&m, &Populations::thermal(), duration, dt)?;
    let mut t = Table::new(&COLUMNS);
    for (time, p) in &series {
        let mut row = vec![*time];
        row.extend(p.0);
        row.push(p.polarization());
        t.rows.push(row);
    }
    let text = match ctx.format {
        Format::Csv => t.to_csv()?,
        Format::Json => json(&serde_json::json!({
            "rates": m,
            "time_constant_us": if tau.is_finite() { Some(tau) } else { None },
            "steady_state": steady_state(&m)?.0,
            "columns": t.columns,
            "rows": t.rows,
        }))?,
    };
    emit(ctx.output.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}
