//! Continuous-wave ODMR: RF-power laws, lineshapes, spectra and the
//! field-frequency map for B ∥ c.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Exec};
use crate::spin::{self, Center, FieldVector, SpinSystem, TransitionOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdmrError {
    #[error("RF power must be non-negative, got {0} W")]
    NegativePower(f64),
    #[error("grid `{name}` must be non-empty and strictly increasing")]
    BadGrid { name: &'static str },
    #[error("field range must satisfy 0 <= start <= end, got {start}..{end}")]
    BadFieldRange { start: f64, end: f64 },
    #[error("map shape mismatch: {rows}x{cols} values for {nb} fields and {nf} frequencies")]
    Shape { rows: usize, cols: usize, nb: usize, nf: usize },
    #[error("RF response table needs at least one point with increasing frequency")]
    BadResponse,
    #[error("invalid map document: {0}")]
    Json(String),
}

/// Amplitude and linewidth of one ODMR line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    /// ΔPL/PL in percent, signed.
    pub amplitude: f64,
    /// Full width at half maximum, MHz.
    pub linewidth: f64,
}

/// Saturation law S(P) = s_max·P/(p0 + P) and broadening LW(P) = lw0 + a√P.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaws {
    /// Percent.
    pub s_max: f64,
    /// W.
    pub p0: f64,
    /// MHz.
    pub lw0: f64,
    /// MHz/√W.
    pub a: f64,
}

impl PowerLaws {
    pub fn preset(center: Center) -> Self {
        match center {
            Center::V1V3 => PowerLaws {
                s_max: 0.2087,
                p0: 0.8573,
                lw0: 6.193,
                a: 2.713,
            },
            Center::V2 => PowerLaws {
                s_max: 0.07112,
                p0: 0.8834,
                lw0: 7.877,
                a: 2.579,
            },
        }
    }

    pub fn line(&self, center: Center, p: f64) -> Result<LineParams, OdmrError> {
        Ok(LineParams {
            amplitude: center.odmr_sign() * saturation_amplitude(self, p)?,
            linewidth: linewidth_vs_power(self, p)?,
        })
    }
}

pub fn saturation_amplitude(laws: &PowerLaws, p: f64) -> Result<f64, OdmrError> {
    if !(p >= 0.0) {
        return Err(OdmrError::NegativePower(p));
    }
    if p.is_infinite() {
        return Ok(laws.s_max);
    }
    Ok(laws.s_max * p / (laws.p0 + p))
}

pub fn linewidth_vs_power(laws: &PowerLaws, p: f64) -> Result<f64, OdmrError> {
    if !(p >= 0.0) {
        return Err(OdmrError::NegativePower(p));
    }
    Ok(laws.lw0 + laws.a * p.sqrt())
}

/// dBm to W.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Lineshape {
    #[default]
    Lorentzian,
    Gaussian,
}

impl Lineshape {
    /// Peak-normalized profile at offset `df` for full width `fwhm`.
    pub fn eval(self, df: f64, fwhm: f64) -> f64 {
        let x = 2.0 * df / fwhm;
        match self {
            Lineshape::Lorentzian => 1.0 / (1.0 + x * x),
            Lineshape::Gaussian => (-std::f64::consts::LN_2 * x * x).exp(),
        }
    }
}

/// Relative RF power delivered to the sample versus frequency, linearly
/// interpolated and held constant beyond the table ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfResponse {
    pub freq_mhz: Vec<f64>,
    pub gain: Vec<f64>,
}

impl RfResponse {
    pub fn new(freq_mhz: Vec<f64>, gain: Vec<f64>) -> Result<Self, OdmrError> {
        if freq_mhz.is_empty()
            || freq_mhz.len() != gain.len()
            || freq_mhz.windows(2).any(|w| w[1] <= w[0])
            || gain.iter().any(|g| !(*g >= 0.0))
        {
            return Err(OdmrError::BadResponse);
        }
        Ok(RfResponse { freq_mhz, gain })
    }

    pub fn at(&self, f: f64) -> f64 {
        let xs = &self.freq_mhz;
        let ys = &self.gain;
        if f <= xs[0] {
            return ys[0];
        }
        if f >= xs[xs.len() - 1] {
            return ys[ys.len() - 1];
        }
        let k = xs.partition_point(|&x| x <= f);
        let (x0, x1) = (xs[k - 1], xs[k]);
        let t = (f - x0) / (x1 - x0);
        ys[k - 1] + t * (ys[k] - ys[k - 1])
    }
}

/// One center contributing to a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterLine {
    pub system: SpinSystem,
    pub laws: PowerLaws,
}

impl CenterLine {
    pub fn preset(center: Center) -> Self {
        CenterLine {
            system: SpinSystem::preset(center),
            laws: PowerLaws::preset(center),
        }
    }

    pub fn both() -> Vec<CenterLine> {
        Center::all().into_iter().map(CenterLine::preset).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumOptions {
    pub lineshape: Lineshape,
    pub transitions: TransitionOptions,
    pub rf_response: Option<RfResponse>,
}

fn check_grid(name: &'static str, g: &[f64]) -> Result<(), OdmrError> {
    if g.is_empty() || g.iter().any(|v| !v.is_finite()) || g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OdmrError::BadGrid { name });
    }
    Ok(())
}

/// Evenly spaced grid including both ends; a single point when n == 1.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Contribution of a single center to the spectrum on `f_grid`.
pub fn center_spectrum(
    line: &CenterLine,
    b: &FieldVector,
    f_grid: &[f64],
    p: f64,
    opts: &SpectrumOptions,
) -> Result<Vec<f64>, OdmrError> {
    if !(p >= 0.0) {
        return Err(OdmrError::NegativePower(p));
    }
    let table = spin::transition_table_with(&line.system, b, &opts.transitions);
    let norm = spin::zero_field_strength(&line.system, opts.transitions.drive);
    let sign = line.system.center.odmr_sign();
    let mut out = vec![0.0; f_grid.len()];
    for t in table.iter() {
        let weight = if norm > 0.0 { t.strength / norm } else { 0.0 };
        for (o, &f) in out.iter_mut().zip(f_grid) {
            let p_eff = match &opts.rf_response {
                Some(r) => p * r.at(f),
                None => p,
            };
            let amp = saturation_amplitude(&line.laws, p_eff)?;
            let lw = linewidth_vs_power(&line.laws, p_eff)?;
            *o += sign * amp * weight * opts.lineshape.eval(f - t.frequency, lw);
        }
    }
    Ok(out)
}

/// ΔPL/PL (%) on `f_grid`, summed over centers and their transitions.
pub fn cw_spectrum(
    centers: &[CenterLine],
    b: &FieldVector,
    f_grid: &[f64],
    p: f64,
    opts: &SpectrumOptions,
) -> Result<Vec<f64>, OdmrError> {
    check_grid("f_grid", f_grid)?;
    if !(p >= 0.0) {
        return Err(OdmrError::NegativePower(p));
    }
    let mut total = vec![0.0; f_grid.len()];
    for line in centers {
        let part = center_spectrum(line, b, f_grid, p, opts)?;
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    Ok(total)
}

/// ΔPL/PL over a (field, frequency) grid, rows indexed by field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMap {
    pub b_axis: Vec<f64>,
    pub f_axis: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl SpectrumMap {
    pub fn new(b_axis: Vec<f64>, f_axis: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, OdmrError> {
        check_grid("b_axis", &b_axis)?;
        check_grid("f_axis", &f_axis)?;
        let cols = values.first().map_or(0, Vec::len);
        if values.len() != b_axis.len() || values.iter().any(|r| r.len() != f_axis.len()) {
            return Err(OdmrError::Shape {
                rows: values.len(),
                cols,
                nb: b_axis.len(),
                nf: f_axis.len(),
            });
        }
        Ok(SpectrumMap { b_axis, f_axis, values })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Long-form CSV with header `b_mT,f_MHz,dpl_percent`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("b_mT,f_MHz,dpl_percent\n");
        for (b, row) in self.b_axis.iter().zip(&self.values) {
            for (f, v) in self.f_axis.iter().zip(row) {
                s.push_str(&format!("{b},{f},{v}\n"));
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, OdmrError> {
        let m: SpectrumMap = serde_json::from_str(text).map_err(|e| OdmrError::Json(e.to_string()))?;
        SpectrumMap::new(m.b_axis, m.f_axis, m.values)
    }
}

/// Spectra for B ∥ c at `n_b` fields from `b_start` to `b_end` (mT). A
/// zero-width range yields a single row.
#[allow(clippy::too_many_arguments)]
pub fn field_map(
    centers: &[CenterLine],
    b_start: f64,
    b_end: f64,
    n_b: usize,
    f_grid: &[f64],
    p: f64,
    opts: &SpectrumOptions,
    exec: Exec,
) -> Result<SpectrumMap, OdmrError> {
    if !(b_start >= 0.0 && b_end >= b_start && b_end.is_finite()) {
        return Err(OdmrError::BadFieldRange {
            start: b_start,
            end: b_end,
        });
    }
    check_grid("f_grid", f_grid)?;
    if !(p >= 0.0) {
        return Err(OdmrError::NegativePower(p));
    }
    let n = if b_end == b_start { 1 } else { n_b };
    let b_axis = linspace(b_start, b_end, n);
    check_grid("b_axis", &b_axis)?;
    let rows = par::map_slice(exec, &b_axis, |&bz| {
        cw_spectrum(centers, &FieldVector::along_c(bz), f_grid, p, opts)
    });
    let values = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    SpectrumMap::new(b_axis, f_grid.to_vec(), values)
}

/// Extremum of `row` within `window` of `target`: the maximum when
/// `sign > 0`, the minimum otherwise. Refined by a three-point parabola.
pub fn extremum_near(row: &[f64], f_axis: &[f64], target: f64, window: f64, sign: f64) -> Option<f64> {
    let mut best: Option<usize> = None;
    for (i, &f) in f_axis.iter().enumerate() {
        if (f - target).abs() > window {
            continue;
        }
        let better = match best {
            None => true,
            Some(j) => sign * row[i] > sign * row[j],
        };
        if better {
            best = Some(i);
        }
    }
    let i = best?;
    if i == 0 || i + 1 >= row.len() {
        return Some(f_axis[i]);
    }
    let (y0, y1, y2) = (row[i - 1], row[i], row[i + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let step = 0.5 * (f_axis[i + 1] - f_axis[i - 1]);
    if denom.abs() < f64::EPSILON * y1.abs().max(1e-300) {
        return Some(f_axis[i]);
    }
    let shift = (0.5 * (y0 - y2) / denom).clamp(-1.0, 1.0);
    Some(f_axis[i] + shift * step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn saturation_values() {
        let v13 = PowerLaws::preset(Center::V1V3);
        assert_eq!(saturation_amplitude(&v13, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(saturation_amplitude(&v13, f64::INFINITY).unwrap(), 0.2087);
        assert_abs_diff_eq!(saturation_amplitude(&v13, 1e12).unwrap(), 0.2087, epsilon = 1e-9);
        assert_abs_diff_eq!(saturation_amplitude(&v13, 0.8573).unwrap(), 0.10435, epsilon = 1e-12);
        assert!(matches!(saturation_amplitude(&v13, -1.0), Err(OdmrError::NegativePower(_))));
    }

    #[test]
    fn linewidth_values() {
        let v13 = PowerLaws::preset(Center::V1V3);
        assert_abs_diff_eq!(linewidth_vs_power(&v13, 0.0).unwrap(), 6.193);
        let flat = PowerLaws { a: 0.0, ..v13 };
        for p in [0.0, 0.5, 3.0, 40.0] {
            assert_eq!(linewidth_vs_power(&flat, p).unwrap(), 6.193);
        }
        let v2 = PowerLaws::preset(Center::V2);
        let lw = linewidth_vs_power(&v2, dbm_to_watts(33.0)).unwrap();
        assert_abs_diff_eq!(lw, 11.52, epsilon = 0.01);
        assert!(linewidth_vs_power(&v2, -0.1).is_err());
    }

    #[test]
    fn power_laws_are_monotone() {
        for c in Center::all() {
            let laws = PowerLaws::preset(c);
            let ps = linspace(0.0, 10.0, 101);
            let s: Vec<f64> = ps.iter().map(|&p| saturation_amplitude(&laws, p).unwrap()).collect();
            let lw: Vec<f64> = ps.iter().map(|&p| linewidth_vs_power(&laws, p).unwrap()).collect();
            assert!(s.windows(2).all(|w| w[1] > w[0]));
            assert!(lw.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn empty_center_list_gives_zero_spectrum() {
        let f = linspace(0.0, 300.0, 31);
        let s = cw_spectrum(&[], &FieldVector::default(), &f, 1.6, &SpectrumOptions::default()).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lorentzian_apex_equals_amplitude() {
        let line = CenterLine::preset(Center::V2);
        let f = linspace(118.0, 138.0, 201);
        let s = cw_spectrum(&[line], &FieldVector::default(), &f, 1.6, &SpectrumOptions::default()).unwrap();
        let amp = saturation_amplitude(&line.laws, 1.6).unwrap();
        assert_abs_diff_eq!(s[100], -amp, epsilon = 1e-6);
    }

    #[test]
    fn gaussian_half_width() {
        assert_abs_diff_eq!(Lineshape::Gaussian.eval(5.0, 10.0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(Lineshape::Lorentzian.eval(5.0, 10.0), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn rf_response_interpolates() {
        let r = RfResponse::new(vec![0.0, 20.0, 100.0], vec![0.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(r.at(10.0), 0.5);
        assert_abs_diff_eq!(r.at(500.0), 1.0);
        assert!(RfResponse::new(vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn rf_roll_off_suppresses_low_frequency_line() {
        let line = CenterLine::preset(Center::V1V3);
        let f = vec![28.0];
        let flat = cw_spectrum(&[line], &FieldVector::default(), &f, 1.6, &SpectrumOptions::default()).unwrap();
        let opts = SpectrumOptions {
            rf_response: Some(RfResponse::new(vec![30.0, 40.0], vec![0.05, 1.0]).unwrap()),
            ..SpectrumOptions::default()
        };
        let rolled = cw_spectrum(&[line], &FieldVector::default(), &f, 1.6, &opts).unwrap();
        assert!(rolled[0] < 0.5 * flat[0]);
        assert!(rolled[0] > 0.0);
    }

    #[test]
    fn bad_grids_rejected() {
        let opts = SpectrumOptions::default();
        assert!(cw_spectrum(&[], &FieldVector::default(), &[], 1.0, &opts).is_err());
        assert!(cw_spectrum(&[], &FieldVector::default(), &[2.0, 1.0], 1.0, &opts).is_err());
        assert!(field_map(&[], 3.0, 1.0, 4, &[1.0], 1.0, &opts, Exec::Sequential).is_err());
    }

    #[test]
    fn zero_width_field_range_gives_one_row() {
        let f = linspace(0.0, 300.0, 61);
        let m = field_map(&CenterLine::both(), 2.0, 2.0, 50, &f, 1.6, &SpectrumOptions::default(), Exec::Sequential)
            .unwrap();
        assert_eq!(m.b_axis, vec![2.0]);
        assert_eq!(m.values.len(), 1);
    }

    #[test]
    fn map_json_round_trip() {
        let f = linspace(0.0, 300.0, 7);
        let m = field_map(&CenterLine::both(), 0.0, 9.0, 4, &f, 1.6, &SpectrumOptions::default(), Exec::Sequential)
            .unwrap();
        let back = SpectrumMap::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 1 + 4 * 7);
        assert!(csv.starts_with("b_mT,f_MHz,dpl_percent\n"));
    }

    #[test]
    fn extremum_refinement_recovers_offgrid_peak() {
        let f = linspace(0.0, 100.0, 201);
        let row: Vec<f64> = f.iter().map(|&x| Lineshape::Lorentzian.eval(x - 42.13, 8.0)).collect();
        let peak = extremum_near(&row, &f, 40.0, 10.0, 1.0).unwrap();
        assert!((peak - 42.13).abs() < 0.05);
    }
}
