use super::guess::initial_guess;
use super::model::{check_xs, wrap_phase, ModelKind};
use super::FitError;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    /// Positive parameters bounded below by zero; the Rabi B keeps the sign
    /// it has in `init`.
    pub fn default_for(kind: ModelKind, init: &[f64]) -> Self {
        let mut b = Bounds::unbounded(kind.arity());
        for &i in kind.positive_indices() {
            b.lower[i] = 0.0;
        }
        if kind == ModelKind::Rabi && init.len() == 5 {
            if init[1] > 0.0 {
                b.lower[1] = 0.0;
            } else if init[1] < 0.0 {
                b.upper[1] = 0.0;
            }
        }
        b
    }

    /// Moves `trial` back inside the box by going halfway from `current`
    /// toward any crossed bound, so open bounds are never reached.
    fn project(&self, current: &[f64], trial: &mut [f64]) {
        for i in 0..trial.len() {
            if trial[i] < self.lower[i] {
                trial[i] = self.lower[i] + 0.5 * (current[i] - self.lower[i]);
            } else if trial[i] > self.upper[i] {
                trial[i] = self.upper[i] - 0.5 * (self.upper[i] - current[i]);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative cost change below which an accepted step ends the fit.
    pub ftol: f64,
    /// Scaled gradient (cosine between residual and each Jacobian column).
    pub gtol: f64,
    /// Extra jittered starts; 0 runs the given init only.
    pub multistart: usize,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iter: 500, ftol: 1e-10, gtol: 1e-8, multistart: 0, jitter: 0.2, seed: 0 }
    }
}

impl FitOptions {
    pub fn with_multistart(mut self, starts: usize) -> Self {
        self.multistart = starts;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: ModelKind,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    /// 1σ Jacobian-based errors; present only for converged, non-singular fits.
    pub stderr: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Condition number of the column-scaled Jacobian.
    pub condition: f64,
    pub singular: bool,
    pub message: String,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.param_names.iter().position(|n| n == name).map(|i| self.params[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }
}

struct Problem<'a> {
    kind: ModelKind,
    x: &'a [f64],
    y: &'a [f64],
    w: Option<Vec<f64>>,
}

impl Problem<'_> {
    fn weight(&self, i: usize) -> f64 {
        self.w.as_ref().map_or(1.0, |w| w[i])
    }

    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.x.len(), (0..self.x.len()).map(|i| (self.kind.value(self.x[i], p) - self.y[i]) * self.weight(i)))
    }

    fn cost(&self, p: &[f64]) -> f64 {
        let c = 0.5 * self.residuals(p).norm_squared();
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let m = p.len();
        let mut j = DMatrix::zeros(self.x.len(), m);
        let mut g = vec![0.0; m];
        for i in 0..self.x.len() {
            self.kind.gradient(self.x[i], p, &mut g);
            let w = self.weight(i);
            for k in 0..m {
                j[(i, k)] = g[k] * w;
            }
        }
        j
    }
}

fn validate(kind: ModelKind, x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<(), FitError> {
    let s_len = sigma.map_or(x.len(), |s| s.len());
    if x.len() != y.len() || s_len != x.len() {
        return Err(FitError::LengthMismatch { x: x.len(), y: y.len(), sigma: s_len });
    }
    if x.len() < kind.min_points() {
        return Err(FitError::InsufficientData { kind, needed: kind.min_points(), got: x.len() });
    }
    check_xs(kind, x)?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(FitError::BadData(format!("non-finite y at index {i}")));
    }
    if let Some(s) = sigma {
        if let Some(i) = s.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(FitError::BadData(format!("sigma[{i}] = {} must be positive", s[i])));
        }
    }
    Ok(())
}

/// Fits `kind` to (x, y[, σ]) from `init`. Non-convergence and singular
/// Jacobians are reported through the result flags.
pub fn fit(
    kind: ModelKind,
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    init: &[f64],
    bounds: Option<&Bounds>,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    validate(kind, x, y, sigma)?;
    kind.check_params(init)?;
    let bounds = bounds.cloned().unwrap_or_else(|| Bounds::default_for(kind, init));
    if bounds.lower.len() != kind.arity() || bounds.upper.len() != kind.arity() {
        return Err(FitError::Arity { kind, expected: kind.arity(), got: bounds.lower.len().min(bounds.upper.len()) });
    }
    for (i, &v) in init.iter().enumerate() {
        if v < bounds.lower[i] || v > bounds.upper[i] {
            return Err(FitError::InitOutOfBounds { name: kind.param_names()[i], value: v, lower: bounds.lower[i], upper: bounds.upper[i] });
        }
    }
    let problem = Problem { kind, x, y, w: sigma.map(|s| s.iter().map(|v| 1.0 / v).collect()) };
    let mut best = solve(&problem, init, &bounds, opts);
    if opts.multistart > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.multistart {
            let mut start: Vec<f64> = init.to_vec();
            for (i, v) in start.iter_mut().enumerate() {
                let u: f64 = rng.random_range(-1.0..1.0);
                if kind.phase_index() == Some(i) {
                    *v = wrap_phase(*v + opts.jitter * PI * u);
                } else {
                    *v *= 1.0 + opts.jitter * u;
                }
            }
            let cand = solve(&problem, &start, &bounds, opts);
            if (cand.converged, -cand.rss) > (best.converged, -best.rss) {
                best = cand;
            }
        }
    }
    Ok(best)
}

/// Fits from [`initial_guess`].
pub fn fit_auto(kind: ModelKind, x: &[f64], y: &[f64], sigma: Option<&[f64]>, opts: &FitOptions) -> Result<FitResult, FitError> {
    validate(kind, x, y, sigma)?;
    let guess = initial_guess(kind, x, y)?;
    let mut r = fit(kind, x, y, sigma, &guess.params, None, opts)?;
    if guess.flagged {
        r.message = format!("{}; initial guess flagged: {}", r.message, guess.note);
    }
    Ok(r)
}

fn solve(problem: &Problem, init: &[f64], bounds: &Bounds, opts: &FitOptions) -> FitResult {
    let kind = problem.kind;
    let m = init.len();
    let mut p = init.to_vec();
    if let Some(i) = kind.phase_index() {
        p[i] = wrap_phase(p[i]);
    }
    let mut cost = problem.cost(&p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let mut message = String::from("maximum iterations reached");
    'outer: loop {
        if cost == 0.0 {
            converged = true;
            message = "exact fit".into();
            break;
        }
        let j = problem.jacobian(&p);
        let r = problem.residuals(&p);
        let g = j.tr_mul(&r);
        let a = j.tr_mul(&j);
        let rnorm = (2.0 * cost).sqrt();
        let gscaled = (0..m)
            .map(|k| if a[(k, k)] > 0.0 { g[k].abs() / (a[(k, k)].sqrt() * rnorm) } else { 0.0 })
            .fold(0.0, f64::max);
        if gscaled < opts.gtol {
            converged = true;
            message = "gradient tolerance reached".into();
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let dmax = (0..m).map(|k| a[(k, k)]).fold(0.0, f64::max);
        loop {
            let mut lhs = a.clone();
            for k in 0..m {
                lhs[(k, k)] += lambda * a[(k, k)].max(1e-15 * dmax).max(f64::MIN_POSITIVE);
            }
            let Some(chol) = lhs.cholesky() else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    message = "damped normal equations not positive definite".into();
                    break 'outer;
                }
                continue;
            };
            let step = chol.solve(&(-&g));
            let mut trial: Vec<f64> = (0..m).map(|k| p[k] + step[k]).collect();
            bounds.project(&p, &mut trial);
            if let Some(i) = kind.phase_index() {
                trial[i] = wrap_phase(trial[i]);
            }
            let c_trial = problem.cost(&trial);
            if c_trial < cost {
                let rel = (cost - c_trial) / cost;
                p = trial;
                cost = c_trial;
                lambda = (lambda / 10.0).max(1e-12);
                if rel < opts.ftol {
                    converged = true;
                    message = "relative cost change below tolerance".into();
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // No damped step reduces the cost: the minimum is resolved to
                // floating-point precision.
                converged = true;
                message = "stalled at numerical precision".into();
                break 'outer;
            }
        }
    }
    finish(problem, p, cost, converged, iterations, message)
}

fn finish(problem: &Problem, p: Vec<f64>, cost: f64, converged: bool, iterations: usize, mut message: String) -> FitResult {
    let kind = problem.kind;
    let n = problem.x.len();
    let m = p.len();
    let j = problem.jacobian(&p);
    let norms: Vec<f64> = (0..m).map(|k| j.column(k).norm()).collect();
    let mut condition = f64::INFINITY;
    let mut covariance = None;
    if norms.iter().all(|&v| v > 0.0 && v.is_finite()) {
        let mut js = j.clone();
        for (k, nk) in norms.iter().enumerate() {
            js.column_mut(k).scale_mut(1.0 / nk);
        }
        let svd = js.svd(false, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if smin > 1e-12 * smax {
            let vt = svd.v_t.expect("requested v_t");
            let scale = if problem.w.is_some() { 1.0 } else { 2.0 * cost / (n - m) as f64 };
            let mut cov = vec![vec![0.0; m]; m];
            for a in 0..m {
                for b in 0..m {
                    let s: f64 = (0..m).map(|k| vt[(k, a)] * vt[(k, b)] / (svd.singular_values[k] * svd.singular_values[k])).sum();
                    cov[a][b] = scale * s / (norms[a] * norms[b]);
                }
            }
            covariance = Some(cov);
        }
    }
    let singular = covariance.is_none();
    if singular {
        message = format!("{message}; singular Jacobian (condition {condition:.3e})");
    }
    let stderr = match (&covariance, converged) {
        (Some(c), true) => Some((0..m).map(|k| c[k][k].max(0.0).sqrt()).collect()),
        _ => None,
    };
    FitResult {
        kind,
        param_names: kind.param_names().iter().map(|s| s.to_string()).collect(),
        params: p,
        stderr,
        covariance: if converged { covariance } else { None },
        rss: 2.0 * cost,
        converged,
        iterations,
        condition,
        singular,
        message,
    }
}
