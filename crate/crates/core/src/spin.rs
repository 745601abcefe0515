//! Spin operators, the axial zero-field-splitting Hamiltonian of the spin-3/2
//! silicon vacancy, eigenlevels and allowed-transition tables.
//!
//! Energies are in MHz, fields in mT. The z axis is the crystal c axis.

use nalgebra::{DMatrix, Matrix4, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bohr magneton over Planck constant, MHz per mT (CODATA 2018).
pub const BOHR_MHZ_PER_MT: f64 = 13.996_244_936_1;

/// Frequencies closer than this are treated as one line.
pub const DEGENERACY_TOL_MHZ: f64 = 1e-6;

const HERMITIAN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("spin quantum number {0} is not a non-negative half-integer")]
    InvalidSpin(f64),
    #[error("matrix is not Hermitian (max deviation {deviation:.3e}, scale {scale:.3e})")]
    NotHermitian { deviation: f64, scale: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// Center identity. The 28 MHz line is attributed to V1/V3 and the
/// 128 MHz line to V2; the labels are metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Center {
    V1V3,
    V2,
}

impl Center {
    pub fn name(self) -> &'static str {
        match self {
            Center::V1V3 => "v1v3",
            Center::V2 => "v2",
        }
    }

    pub fn parse(s: &str) -> Option<Center> {
        match s.to_ascii_lowercase().as_str() {
            "v1v3" | "v1/v3" | "v1" | "v3" => Some(Center::V1V3),
            "v2" => Some(Center::V2),
            _ => None,
        }
    }

    /// Sign of the zero-field ODMR line: PL increases under RF for V1/V3
    /// and decreases for V2.
    pub fn odmr_sign(self) -> f64 {
        match self {
            Center::V1V3 => 1.0,
            Center::V2 => -1.0,
        }
    }

    pub fn all() -> [Center; 2] {
        [Center::V1V3, Center::V2]
    }
}

/// Static parameters of one spin-3/2 center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    pub center: Center,
    /// Zero-field splitting 2D in MHz (signed).
    pub two_d: f64,
    pub g_factor: f64,
    /// Twice the spin quantum number; always 3 for the supported centers.
    pub twice_spin: u32,
    /// Zero-phonon line in nm.
    pub zpl_nm: f64,
}

impl SpinSystem {
    pub fn preset(center: Center) -> Self {
        match center {
            Center::V1V3 => SpinSystem {
                center,
                two_d: -28.0,
                g_factor: 2.0,
                twice_spin: 3,
                zpl_nm: 865.0,
            },
            Center::V2 => SpinSystem {
                center,
                two_d: 128.0,
                g_factor: 2.0,
                twice_spin: 3,
                zpl_nm: 887.0,
            },
        }
    }

    /// The three lattice-site entries (V1, V2, V3) with their ZPLs.
    pub fn catalog() -> [SpinSystem; 3] {
        let v1 = SpinSystem::preset(Center::V1V3);
        let v2 = SpinSystem::preset(Center::V2);
        let v3 = SpinSystem {
            zpl_nm: 908.0,
            ..v1
        };
        [v1, v2, v3]
    }

    pub fn with_two_d(mut self, two_d: f64) -> Self {
        self.two_d = two_d;
        self
    }

    /// Zeeman factor g·μB/h in MHz/mT.
    pub fn gamma(&self) -> f64 {
        self.g_factor * BOHR_MHZ_PER_MT
    }

    /// Axial parameter D = two_d / 2.
    pub fn d(&self) -> f64 {
        0.5 * self.two_d
    }

    /// Analytic level energy for B ∥ c: E(m) = D(m² − 5/4) + γ·bz·m.
    pub fn axial_energy(&self, m: f64, bz: f64) -> f64 {
        self.d() * (m * m - 1.25) + self.gamma() * bz * m
    }
}

/// Magnetic field in mT.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldVector {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl FieldVector {
    pub fn new(bx: f64, by: f64, bz: f64) -> Self {
        FieldVector { bx, by, bz }
    }

    pub fn along_c(bz: f64) -> Self {
        FieldVector::new(0.0, 0.0, bz)
    }

    pub fn magnitude(&self) -> f64 {
        (self.bx * self.bx + self.by * self.by + self.bz * self.bz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.bx.is_finite() && self.by.is_finite() && self.bz.is_finite()
    }
}

/// Cartesian spin matrices in the |s⟩, |s−1⟩, …, |−s⟩ basis.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub sx: DMatrix<Complex64>,
    pub sy: DMatrix<Complex64>,
    pub sz: DMatrix<Complex64>,
}

impl SpinOperators {
    pub fn dim(&self) -> usize {
        self.sz.nrows()
    }

    /// Projection of S on a unit direction.
    pub fn along(&self, dir: Vector3<f64>) -> DMatrix<Complex64> {
        let n = dir.normalize();
        &self.sx * Complex64::from(n.x) + &self.sy * Complex64::from(n.y) + &self.sz * Complex64::from(n.z)
    }
}

/// Builds Sx, Sy, Sz for spin `s` from the ladder-operator matrix elements.
pub fn spin_operators(s: f64) -> Result<SpinOperators, SpinError> {
    let twice = 2.0 * s;
    if !(twice.is_finite() && twice >= 0.0 && (twice - twice.round()).abs() < 1e-12) {
        return Err(SpinError::InvalidSpin(s));
    }
    let dim = twice.round() as usize + 1;
    let m = |i: usize| s - i as f64;

    let mut sz = DMatrix::<Complex64>::zeros(dim, dim);
    let mut sp = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..dim {
        sz[(i, i)] = Complex64::from(m(i));
    }
    // ⟨m+1|S+|m⟩ = sqrt(s(s+1) − m(m+1)); row i holds m(i) = m(i+1) + 1.
    for i in 0..dim - 1 {
        let mm = m(i + 1);
        sp[(i, i + 1)] = Complex64::from((s * (s + 1.0) - mm * (mm + 1.0)).sqrt());
    }
    let sm = sp.adjoint();
    let half = Complex64::from(0.5);
    let sx = (&sp + &sm) * half;
    let sy = (&sp - &sm) * Complex64::new(0.0, -0.5);
    Ok(SpinOperators { sx, sy, sz })
}

fn spin_three_halves() -> SpinOperators {
    spin_operators(1.5).expect("3/2 is a valid spin")
}

fn to_matrix4(m: &DMatrix<Complex64>) -> Matrix4<Complex64> {
    Matrix4::from_fn(|i, j| m[(i, j)])
}

/// H = D(Sz² − s(s+1)/3) + γ B·S in MHz.
pub fn hamiltonian(sys: &SpinSystem, b: &FieldVector) -> Matrix4<Complex64> {
    let ops = spin_three_halves();
    let s = 0.5 * sys.twice_spin as f64;
    let sz2 = &ops.sz * &ops.sz;
    let identity = DMatrix::<Complex64>::identity(4, 4);
    let zfs = (sz2 - identity * Complex64::from(s * (s + 1.0) / 3.0)) * Complex64::from(sys.d());
    let g = sys.gamma();
    let zeeman = &ops.sx * Complex64::from(g * b.bx)
        + &ops.sy * Complex64::from(g * b.by)
        + &ops.sz * Complex64::from(g * b.bz);
    to_matrix4(&(zfs + zeeman))
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct Eigenlevels {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl Eigenlevels {
    pub fn vector(&self, k: usize) -> nalgebra::DVector<Complex64> {
        self.vectors.column(k).into_owned()
    }
}

/// Diagonalizes a Hermitian matrix.
pub fn eigenlevels(h: &DMatrix<Complex64>) -> Result<Eigenlevels, SpinError> {
    if h.nrows() != h.ncols() {
        return Err(SpinError::NotSquare {
            rows: h.nrows(),
            cols: h.ncols(),
        });
    }
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let deviation = (h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if deviation > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(SpinError::NotHermitian { deviation, scale });
    }
    let herm = (h + h.adjoint()) * Complex64::from(0.5);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(h.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(Eigenlevels { values, vectors })
}

pub fn eigenlevels4(h: &Matrix4<Complex64>) -> Result<Eigenlevels, SpinError> {
    eigenlevels(&DMatrix::from_fn(4, 4, |i, j| h[(i, j)]))
}

/// Levels of a spin system in a field.
pub fn levels(sys: &SpinSystem, b: &FieldVector) -> Eigenlevels {
    eigenlevels4(&hamiltonian(sys, b)).expect("constructed Hamiltonian is Hermitian")
}

/// Orientation of the RF drive field used for transition strengths.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum DriveAxis {
    #[default]
    X,
    Y,
    Z,
    Direction([f64; 3]),
}

impl DriveAxis {
    fn operator(&self, ops: &SpinOperators) -> DMatrix<Complex64> {
        match *self {
            DriveAxis::X => ops.sx.clone(),
            DriveAxis::Y => ops.sy.clone(),
            DriveAxis::Z => ops.sz.clone(),
            DriveAxis::Direction([x, y, z]) => ops.along(Vector3::new(x, y, z)),
        }
    }
}

/// Which level pairs may appear in a transition table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SelectionRule {
    /// Keep pairs whose dominant |m⟩ characters differ by one.
    #[default]
    DeltaMOne,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub lower: usize,
    pub upper: usize,
    pub frequency: f64,
    pub strength: f64,
}

/// Transitions sorted by ascending frequency.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransitionTable {
    pub entries: Vec<Transition>,
}

impl TransitionTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.entries.iter().map(|t| t.frequency).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionOptions {
    pub drive: DriveAxis,
    pub selection: SelectionRule,
    pub min_strength: f64,
}

impl Default for TransitionOptions {
    fn default() -> Self {
        TransitionOptions {
            drive: DriveAxis::X,
            selection: SelectionRule::DeltaMOne,
            min_strength: 1e-4,
        }
    }
}

/// Index of the Sz basis state with the largest weight in `v`.
fn dominant_m(v: &nalgebra::DVector<Complex64>) -> usize {
    (0..v.len())
        .max_by(|&a, &b| v[a].norm_sqr().total_cmp(&v[b].norm_sqr()))
        .unwrap_or(0)
}

/// Transition table with the default drive (Sx) and ΔmS = ±1 selection.
pub fn transition_table(sys: &SpinSystem, b: &FieldVector, min_strength: f64) -> TransitionTable {
    transition_table_with(
        sys,
        b,
        &TransitionOptions {
            min_strength,
            ..TransitionOptions::default()
        },
    )
}

pub fn transition_table_with(sys: &SpinSystem, b: &FieldVector, opts: &TransitionOptions) -> TransitionTable {
    let ops = spin_three_halves();
    let drive = opts.drive.operator(&ops);
    let lv = levels(sys, b);
    let n = lv.values.len();
    let vecs: Vec<_> = (0..n).map(|k| lv.vector(k)).collect();
    let dominant: Vec<usize> = vecs.iter().map(dominant_m).collect();

    // Strengths of degenerate pairs are summed so the result does not
    // depend on the basis chosen inside a degenerate eigenspace.
    let mut raw: Vec<Transition> = Vec::new();
    for lo in 0..n {
        for up in lo + 1..n {
            let freq = lv.values[up] - lv.values[lo];
            if freq < DEGENERACY_TOL_MHZ {
                continue;
            }
            if opts.selection == SelectionRule::DeltaMOne && dominant[lo].abs_diff(dominant[up]) != 1 {
                // Degenerate subspaces mix freely; only apply the rule when
                // both levels are non-degenerate.
                let lo_deg = level_is_degenerate(&lv.values, lo);
                let up_deg = level_is_degenerate(&lv.values, up);
                if !(lo_deg || up_deg) {
                    continue;
                }
            }
            let amp = (vecs[up].adjoint() * &drive * &vecs[lo])[(0, 0)];
            raw.push(Transition {
                lower: lo,
                upper: up,
                frequency: freq,
                strength: amp.norm_sqr(),
            });
        }
    }
    raw.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));

    let mut merged: Vec<Transition> = Vec::new();
    for t in raw {
        match merged.last_mut() {
            Some(last) if (t.frequency - last.frequency).abs() < DEGENERACY_TOL_MHZ => {
                last.strength += t.strength;
            }
            _ => merged.push(t),
        }
    }
    merged.retain(|t| t.strength > opts.min_strength);
    TransitionTable { entries: merged }
}

fn level_is_degenerate(values: &[f64], k: usize) -> bool {
    values
        .iter()
        .enumerate()
        .any(|(j, v)| j != k && (v - values[k]).abs() < DEGENERACY_TOL_MHZ)
}

/// Summed strength of the zero-field line of a center; used to normalize
/// per-transition ODMR amplitudes.
pub fn zero_field_strength(sys: &SpinSystem, drive: DriveAxis) -> f64 {
    let opts = TransitionOptions {
        drive,
        selection: SelectionRule::DeltaMOne,
        min_strength: 0.0,
    };
    transition_table_with(sys, &FieldVector::default(), &opts)
        .entries
        .iter()
        .map(|t| t.strength)
        .sum()
}

/// Level energies labelled by m for B ∥ c, ordered m = 3/2, 1/2, −1/2, −3/2.
pub fn axial_levels_by_m(sys: &SpinSystem, bz: f64) -> [f64; 4] {
    let lv = levels(sys, &FieldVector::along_c(bz));
    let mut out = [f64::NAN; 4];
    for k in 0..4 {
        let idx = dominant_m(&lv.vector(k));
        out[idx] = lv.values[k];
    }
    // Exact degeneracy (bz = 0) leaves the eigenvector basis arbitrary.
    if out.iter().any(|e| e.is_nan()) {
        for (i, m) in [1.5, 0.5, -0.5, -1.5].into_iter().enumerate() {
            out[i] = sys.axial_energy(m, bz);
        }
    }
    out
}
