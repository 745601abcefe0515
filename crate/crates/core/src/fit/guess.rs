use super::model::{wrap_phase, ModelKind};
use super::FitError;
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq)]
pub struct Guess {
    pub params: Vec<f64>,
    /// Set when the data were degenerate and the guess is a placeholder.
    pub flagged: bool,
    pub note: String,
}

impl Guess {
    fn ok(params: Vec<f64>) -> Self {
        Guess { params, flagged: false, note: String::new() }
    }

    fn flagged(params: Vec<f64>, note: &str) -> Self {
        Guess { params, flagged: true, note: note.into() }
    }
}

/// Linear interpolation of (x, y) onto a uniform grid of the same length.
fn resample_uniform(x: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let n = x.len();
    let dt = (x[n - 1] - x[0]) / (n - 1) as f64;
    let uniform = x.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt.abs());
    if uniform {
        return (dt, y.to_vec());
    }
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let t = x[0] + dt * i as f64;
        while k + 2 < n && x[k + 1] < t {
            k += 1;
        }
        let span = x[k + 1] - x[k];
        let f = if span > 0.0 { ((t - x[k]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push(y[k] + f * (y[k + 1] - y[k]));
    }
    (dt, out)
}

/// Dominant nonzero frequency of y(x) from a zero-padded FFT with parabolic
/// peak refinement. x must be increasing.
pub fn estimate_frequency(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 4 || x.len() != y.len() || !(x[n - 1] > x[0]) {
        return None;
    }
    let (dt, ys) = resample_uniform(x, y);
    let mean = ys.iter().sum::<f64>() / n as f64;
    let len = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = ys.iter().map(|v| Complex64::new(v - mean, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mag: Vec<f64> = buf[..len / 2].iter().map(|c| c.norm()).collect();
    let df = 1.0 / (len as f64 * dt);
    let span = dt * (n - 1) as f64;
    // Skip the low-frequency lobe left by the mean and the envelope.
    let k_min = ((0.5 / span) / df).ceil().max(1.0) as usize;
    let (k, peak) = mag.iter().enumerate().skip(k_min).fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if k == 0 || peak == 0.0 {
        return None;
    }
    let shift = if k + 1 < mag.len() {
        let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
        let d = a - 2.0 * b + c;
        if d < 0.0 {
            (0.5 * (a - c) / d).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    Some((k as f64 + shift) * df)
}

/// Weighted linear regression y = a + b·x. Returns (a, b).
fn linreg(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    if x.len() < 2 || sw <= 0.0 {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

fn span(x: &[f64]) -> f64 {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo).max(f64::MIN_POSITIVE)
}

fn is_constant(y: &[f64]) -> bool {
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE)
}

/// For fixed ν and T, the oscillatory models are linear in
/// (offset, cosine, sine) amplitudes; returns them and the residual.
fn linear_oscillation(x: &[f64], y: &[f64], nu: f64, t: f64, offset: bool) -> Option<([f64; 3], f64)> {
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&xi, &yi) in x.iter().zip(y) {
        let e = (-xi / t).exp();
        let (s, c) = (TAU * nu * xi).sin_cos();
        let row = Vector3::new(if offset { 1.0 } else { 0.0 }, c * e, s * e);
        ata += row * row.transpose();
        aty += row * yi;
    }
    if !offset {
        ata[(0, 0)] = 1.0;
    }
    let sol = ata.cholesky()?.solve(&aty);
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let e = (-xi / t).exp();
            let (s, c) = (TAU * nu * xi).sin_cos();
            let f = sol[0] + sol[1] * c * e + sol[2] * s * e;
            (f - yi).powi(2)
        })
        .sum();
    Some(([sol[0], sol[1], sol[2]], rss))
}

fn oscillatory(kind: ModelKind, x: &[f64], y: &[f64]) -> Guess {
    let sp = span(x);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let nu = match estimate_frequency(x, y) {
        Some(f) => f,
        None => {
            let p = if kind == ModelKind::Rabi { vec![mean, 0.0, 0.0, 1.0 / sp, sp] } else { vec![mean, 1.0 / sp, 0.0, sp] };
            return Guess::flagged(p, "no oscillation found");
        }
    };
    let offset = kind == ModelKind::Rabi;
    let mut best: Option<([f64; 3], f64, f64)> = None;
    for k in 0..25 {
        let t = sp * 0.02 * 1.3f64.powi(k);
        if let Some((sol, rss)) = linear_oscillation(x, y, nu, t, offset) {
            if best.is_none_or(|b| rss < b.1) {
                best = Some((sol, rss, t));
            }
        }
    }
    let Some(([a0, c, s], _, t)) = best else {
        return Guess::flagged(vec![mean; kind.arity()], "linear subproblem failed");
    };
    let amp = (c * c + s * s).sqrt();
    match kind {
        // B·cos(θ − φ) = B cos φ cos θ + B sin φ sin θ; pick the sign of B
        // that keeps |φ| ≤ π/2.
        ModelKind::Rabi => {
            let b = if c < 0.0 { -amp } else { amp };
            let phi = if amp > 0.0 { wrap_phase((s / b).atan2(c / b)) } else { 0.0 };
            Guess::ok(vec![a0, b, phi, nu, t])
        }
        // A·cos(θ + φ) = A cos φ cos θ − A sin φ sin θ.
        _ => {
            let a = if c < 0.0 { -amp } else { amp };
            let phi = if amp > 0.0 { wrap_phase((-s / a).atan2(c / a)) } else { 0.0 };
            Guess::ok(vec![a, nu, phi, t])
        }
    }
}

fn exp_decay(x: &[f64], y: &[f64]) -> Guess {
    let sp = span(x);
    let (imax, _) = y.iter().enumerate().fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
    let sign = y[imax].signum();
    let pts: Vec<(f64, f64, f64)> = x.iter().zip(y).filter(|(_, v)| **v * sign > 0.0).map(|(a, v)| (*a, (v * sign).ln(), v * v)).collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ls: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let ws: Vec<f64> = pts.iter().map(|p| p.2).collect();
    match linreg(&xs, &ls, &ws) {
        Some((a, b)) if b < 0.0 => Guess::ok(vec![sign * a.exp(), -1.0 / b]),
        _ => Guess::flagged(vec![y[imax], sp], "no decay found"),
    }
}

fn stretched(x: &[f64], y: &[f64]) -> Guess {
    let base = exp_decay(x, y);
    if base.flagged {
        return Guess::flagged(vec![base.params[0], base.params[1], 1.0], &base.note);
    }
    let a = base.params[0];
    let x0 = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let a = x.iter().zip(y).find(|(xi, _)| **xi == x0).map_or(a, |(_, v)| if v.abs() > a.abs() * 0.5 { *v } else { a });
    let (mut lx, mut lz) = (Vec::new(), Vec::new());
    for (&xi, &yi) in x.iter().zip(y) {
        let r = yi / a;
        if xi > 0.0 && r > 0.02 && r < 0.98 {
            lx.push(xi.ln());
            lz.push((-r.ln()).ln());
        }
    }
    let w = vec![1.0; lx.len()];
    match linreg(&lx, &lz, &w) {
        Some((c, n)) if n > 0.0 => Guess::ok(vec![a, (-c / n).exp(), n.clamp(0.2, 10.0)]),
        _ => Guess::ok(vec![a, base.params[1], 1.0]),
    }
}

fn saturation(x: &[f64], y: &[f64]) -> Guess {
    let sp = span(x);
    let (imax, _) = y.iter().enumerate().fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
    let sign = y[imax].signum();
    let (mut ix, mut iy, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for (&xi, &yi) in x.iter().zip(y) {
        if xi > 0.0 && yi * sign > 0.0 {
            ix.push(1.0 / xi);
            iy.push(1.0 / yi);
            w.push(yi.powi(4));
        }
    }
    if let Some((c, m)) = linreg(&ix, &iy, &w) {
        let s = 1.0 / c;
        let p0 = m * s;
        if s * sign > 0.0 && p0 > 0.0 && s.is_finite() && p0.is_finite() {
            return Guess::ok(vec![s, p0]);
        }
    }
    let s = y[imax];
    let half = 0.5 * s;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let p0 = order
        .windows(2)
        .find(|w| (y[w[0]] - half) * sign <= 0.0 && (y[w[1]] - half) * sign > 0.0)
        .map(|w| {
            let (x0, x1, y0, y1) = (x[w[0]], x[w[1]], y[w[0]], y[w[1]]);
            x0 + (half - y0) * (x1 - x0) / (y1 - y0)
        })
        .filter(|p| *p > 0.0)
        .unwrap_or(0.5 * sp);
    Guess::ok(vec![s, p0])
}

fn sqrt_linewidth(x: &[f64], y: &[f64]) -> Guess {
    let r: Vec<f64> = x.iter().map(|v| v.sqrt()).collect();
    match linreg(&r, y, &vec![1.0; x.len()]) {
        Some((a, b)) => Guess::ok(vec![a, b]),
        None => Guess::flagged(vec![y[0], 0.0], "x has no spread"),
    }
}

/// Starting parameters from the data alone.
pub fn initial_guess(kind: ModelKind, x: &[f64], y: &[f64]) -> Result<Guess, FitError> {
    if x.len() != y.len() {
        return Err(FitError::LengthMismatch { x: x.len(), y: y.len(), sigma: x.len() });
    }
    if x.len() < 4 {
        return Err(FitError::InsufficientData { kind, needed: 4, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(FitError::BadData("non-finite value".into()));
    }
    if is_constant(y) {
        let c = y[0];
        let sp = span(x);
        let p = match kind {
            ModelKind::Rabi => vec![c, 0.0, 0.0, 1.0 / sp, sp],
            ModelKind::Fid => vec![c, 1.0 / sp, 0.0, sp],
            ModelKind::ExpDecay => vec![c, 1e3 * sp],
            ModelKind::StretchedExp => vec![c, 1e3 * sp, 1.0],
            ModelKind::Saturation => vec![c, 1e-3 * sp],
            ModelKind::SqrtLinewidth => vec![c, 0.0],
        };
        return Ok(Guess::flagged(p, "constant data"));
    }
    Ok(match kind {
        ModelKind::Rabi | ModelKind::Fid => oscillatory(kind, x, y),
        ModelKind::ExpDecay => exp_decay(x, y),
        ModelKind::StretchedExp => stretched(x, y),
        ModelKind::Saturation => saturation(x, y),
        ModelKind::SqrtLinewidth => sqrt_linewidth(x, y),
    })
}
