pub mod fit;
pub mod levels;
pub mod map;
pub mod pump;
pub mod run;
pub mod synth;

use crate::usage;
use anyhow::Result;
use vsi_core::spin::Center;

pub fn center(name: Option<&str>, default: Center) -> Result<Center> {
    match name {
        None => Ok(default),
        Some(s) => Center::parse(s).ok_or_else(|| usage(format!("unknown center {s:?}, expected v1v3 or v2"))),
    }
}

/// Evenly spaced grid over [start, end]; just `start` when n is 1 or the
/// ends meet.
pub fn grid(what: &str, start: f64, end: f64, n: usize) -> Result<Vec<f64>> {
    if !(start.is_finite() && end.is_finite() && end >= start) {
        return Err(usage(format!("{what} range {start}..{end} must be finite and increasing")));
    }
    if n == 0 {
        return Err(usage(format!("{what} needs at least one point")));
    }
    if n == 1 || end == start {
        return Ok(vec![start]);
    }
    Ok(vsi_core::odmr::linspace(start, end, n))
}
