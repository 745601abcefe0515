use super::FitError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::fmt;

/// Closed-form signal models. Time-like x is in µs and frequencies in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// A + B·cos(2πνx − φ)·e^{−x/T}
    Rabi,
    /// A·cos(2πνx + φ)·e^{−x/T}
    Fid,
    /// A·e^{−x/T}
    ExpDecay,
    /// A·e^{−(x/T)^n}
    StretchedExp,
    /// S_max·x/(P0 + x)
    Saturation,
    /// LW0 + a·√x
    SqrtLinewidth,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl ModelKind {
    pub fn all() -> [ModelKind; 6] {
        use ModelKind::*;
        [Rabi, Fid, ExpDecay, StretchedExp, Saturation, SqrtLinewidth]
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rabi => "rabi",
            ModelKind::Fid => "fid",
            ModelKind::ExpDecay => "exp_decay",
            ModelKind::StretchedExp => "stretched_exp",
            ModelKind::Saturation => "saturation",
            ModelKind::SqrtLinewidth => "sqrt_linewidth",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        ModelKind::all().into_iter().find(|k| k.name() == s)
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Rabi => &["A", "B", "phi", "nu", "T"],
            ModelKind::Fid => &["A", "nu", "phi", "T"],
            ModelKind::ExpDecay => &["A", "T"],
            ModelKind::StretchedExp => &["A", "T", "n"],
            ModelKind::Saturation => &["S_max", "P0"],
            ModelKind::SqrtLinewidth => &["LW0", "a"],
        }
    }

    pub fn arity(self) -> usize {
        self.param_names().len()
    }

    /// Index of the phase parameter, which is kept in (−π, π].
    pub fn phase_index(self) -> Option<usize> {
        match self {
            ModelKind::Rabi | ModelKind::Fid => Some(2),
            _ => None,
        }
    }

    /// Parameters that must stay strictly positive.
    pub fn positive_indices(self) -> &'static [usize] {
        match self {
            ModelKind::Rabi => &[3, 4],
            ModelKind::Fid => &[1, 3],
            ModelKind::ExpDecay => &[1],
            ModelKind::StretchedExp => &[1, 2],
            ModelKind::Saturation => &[1],
            ModelKind::SqrtLinewidth => &[],
        }
    }

    /// Parameters that scale linearly with y.
    pub fn amplitude_indices(self) -> &'static [usize] {
        match self {
            ModelKind::Rabi => &[0, 1],
            ModelKind::Fid | ModelKind::ExpDecay | ModelKind::StretchedExp | ModelKind::Saturation => &[0],
            ModelKind::SqrtLinewidth => &[0, 1],
        }
    }

    pub fn min_points(self) -> usize {
        (2 * self.arity()).max(self.arity() + 2)
    }

    pub fn check_params(self, p: &[f64]) -> Result<(), FitError> {
        if p.len() != self.arity() {
            return Err(FitError::Arity { kind: self, expected: self.arity(), got: p.len() });
        }
        if let Some(i) = p.iter().position(|v| !v.is_finite()) {
            return Err(FitError::InvalidParam { name: self.param_names()[i], value: p[i], reason: "not finite" });
        }
        for &i in self.positive_indices() {
            if p[i] <= 0.0 {
                return Err(FitError::InvalidParam { name: self.param_names()[i], value: p[i], reason: "must be > 0" });
            }
        }
        Ok(())
    }

    fn check_x(self, x: f64) -> Result<(), FitError> {
        if !x.is_finite() {
            return Err(FitError::BadData(format!("non-finite x value {x}")));
        }
        if matches!(self, ModelKind::StretchedExp | ModelKind::SqrtLinewidth) && x < 0.0 {
            return Err(FitError::BadData(format!("{self} needs x >= 0, got {x}")));
        }
        Ok(())
    }

    /// Model value at one point, without validation.
    pub fn value(self, x: f64, p: &[f64]) -> f64 {
        match self {
            ModelKind::Rabi => p[0] + p[1] * (TAU * p[3] * x - p[2]).cos() * (-x / p[4]).exp(),
            ModelKind::Fid => p[0] * (TAU * p[1] * x + p[2]).cos() * (-x / p[3]).exp(),
            ModelKind::ExpDecay => p[0] * (-x / p[1]).exp(),
            ModelKind::StretchedExp => p[0] * (-(x / p[1]).powf(p[2])).exp(),
            ModelKind::Saturation => p[0] * x / (p[1] + x),
            ModelKind::SqrtLinewidth => p[0] + p[1] * x.sqrt(),
        }
    }

    /// Analytic gradient of the model value with respect to the parameters.
    pub fn gradient(self, x: f64, p: &[f64], out: &mut [f64]) {
        match self {
            ModelKind::Rabi => {
                let (b, phi, nu, t) = (p[1], p[2], p[3], p[4]);
                let arg = TAU * nu * x - phi;
                let (s, c) = arg.sin_cos();
                let e = (-x / t).exp();
                out[0] = 1.0;
                out[1] = c * e;
                out[2] = b * s * e;
                out[3] = -b * s * e * TAU * x;
                out[4] = b * c * e * x / (t * t);
            }
            ModelKind::Fid => {
                let (a, nu, phi, t) = (p[0], p[1], p[2], p[3]);
                let (s, c) = (TAU * nu * x + phi).sin_cos();
                let e = (-x / t).exp();
                out[0] = c * e;
                out[1] = -a * s * e * TAU * x;
                out[2] = -a * s * e;
                out[3] = a * c * e * x / (t * t);
            }
            ModelKind::ExpDecay => {
                let e = (-x / p[1]).exp();
                out[0] = e;
                out[1] = p[0] * e * x / (p[1] * p[1]);
            }
            ModelKind::StretchedExp => {
                let (a, t, n) = (p[0], p[1], p[2]);
                let r = x / t;
                let u = r.powf(n);
                let e = (-u).exp();
                out[0] = e;
                out[1] = a * e * u * n / t;
                out[2] = if r > 0.0 { -a * e * u * r.ln() } else { 0.0 };
            }
            ModelKind::Saturation => {
                let d = p[1] + x;
                out[0] = x / d;
                out[1] = -p[0] * x / (d * d);
            }
            ModelKind::SqrtLinewidth => {
                out[0] = 1.0;
                out[1] = x.sqrt();
            }
        }
    }
}

/// A model kind with concrete parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayModel {
    pub kind: ModelKind,
    pub params: Vec<f64>,
}

impl DecayModel {
    pub fn new(kind: ModelKind, params: Vec<f64>) -> Result<Self, FitError> {
        kind.check_params(&params)?;
        Ok(DecayModel { kind, params })
    }

    pub fn at(&self, x: f64) -> f64 {
        self.kind.value(x, &self.params)
    }
}

/// Evaluates a model over `x`.
pub fn evaluate(model: &DecayModel, x: &[f64]) -> Result<Vec<f64>, FitError> {
    model.kind.check_params(&model.params)?;
    x.iter()
        .map(|&xi| {
            model.kind.check_x(xi)?;
            Ok(model.at(xi))
        })
        .collect()
}

/// Model values on `x` plus Gaussian noise of standard deviation `noise`,
/// drawn from a ChaCha8 stream seeded with `seed`.
pub fn synthesize(model: &DecayModel, x: &[f64], noise: f64, seed: u64) -> Result<Vec<f64>, FitError> {
    if x.is_empty() {
        return Err(FitError::BadData("no points to synthesize".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(FitError::BadData(format!("noise level {noise} must be finite and >= 0")));
    }
    let clean = evaluate(model, x)?;
    if noise == 0.0 {
        return Ok(clean);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, noise).expect("valid sigma");
    Ok(clean.into_iter().map(|v| v + dist.sample(&mut rng)).collect())
}

pub(crate) fn check_xs(kind: ModelKind, x: &[f64]) -> Result<(), FitError> {
    x.iter().try_for_each(|&xi| kind.check_x(xi))
}

/// Wraps an angle into (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let mut w = phi.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}
