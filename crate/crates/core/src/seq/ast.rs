use crate::spin::Center;
use std::f64::consts::{FRAC_PI_2, PI};

/// 1-based source position. Spans never take part in structural
/// comparison, so a re-parsed AST equals the original.
#[derive(Debug, Clone, Copy, Default, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

/// Powers of time: frequencies are time⁻¹ (MHz·µs = 1).
pub type Dim = i8;
pub const TIME: Dim = 1;
pub const FREQUENCY: Dim = -1;
pub const DIMENSIONLESS: Dim = 0;

pub fn dim_name(d: Dim) -> String {
    match d {
        TIME => "time".into(),
        FREQUENCY => "frequency".into(),
        DIMENSIONLESS => "dimensionless".into(),
        d if d > 0 => format!("time^{d}"),
        d => format!("frequency^{}", -d),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Ns,
    Us,
    Ms,
    S,
    Hz,
    KHz,
    MHz,
    GHz,
}

impl Unit {
    pub const ALL: [Unit; 8] = [Unit::Ns, Unit::Us, Unit::Ms, Unit::S, Unit::Hz, Unit::KHz, Unit::MHz, Unit::GHz];

    pub fn parse(s: &str) -> Option<Unit> {
        Some(match s {
            "ns" => Unit::Ns,
            "us" | "µs" | "μs" => Unit::Us,
            "ms" => Unit::Ms,
            "s" => Unit::S,
            "Hz" => Unit::Hz,
            "kHz" => Unit::KHz,
            "MHz" => Unit::MHz,
            "GHz" => Unit::GHz,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Unit::Ns => "ns",
            Unit::Us => "us",
            Unit::Ms => "ms",
            Unit::S => "s",
            Unit::Hz => "Hz",
            Unit::KHz => "kHz",
            Unit::MHz => "MHz",
            Unit::GHz => "GHz",
        }
    }

    /// Multiplier into µs or MHz.
    pub fn factor(self) -> f64 {
        match self {
            Unit::Ns => 1e-3,
            Unit::Us => 1.0,
            Unit::Ms => 1e3,
            Unit::S => 1e6,
            Unit::Hz => 1e-6,
            Unit::KHz => 1e-3,
            Unit::MHz => 1.0,
            Unit::GHz => 1e3,
        }
    }

    pub fn dim(self) -> Dim {
        match self {
            Unit::Ns | Unit::Us | Unit::Ms | Unit::S => TIME,
            _ => FREQUENCY,
        }
    }
}

/// Named pulse axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    MinusX,
    MinusY,
}

impl Axis {
    pub fn phase(self) -> f64 {
        match self {
            Axis::X => 0.0,
            Axis::Y => FRAC_PI_2,
            Axis::MinusX => PI,
            Axis::MinusY => 3.0 * FRAC_PI_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::MinusX => "-x",
            Axis::MinusY => "-y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num { value: f64, unit: Option<Unit>, span: Span },
    Sym { name: String, span: Span },
    Axis { axis: Axis, span: Span },
    Pi { span: Span },
    Neg { expr: Box<Expr>, span: Span },
    Bin { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr>, span: Span },
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Num { span, .. }
            | Expr::Sym { span, .. }
            | Expr::Axis { span, .. }
            | Expr::Pi { span }
            | Expr::Neg { span, .. }
            | Expr::Bin { span, .. } => *span,
        }
    }

    pub fn num(value: f64, unit: Option<Unit>) -> Expr {
        Expr::Num { value, unit, span: Span::default() }
    }

    pub fn sym(name: &str) -> Expr {
        Expr::Sym { name: name.into(), span: Span::default() }
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin { op, lhs: Box::new(lhs), rhs: Box::new(rhs), span: Span::default() }
    }

    /// Every symbol referenced, in source order.
    pub fn symbols(&self, out: &mut Vec<(String, Span)>) {
        match self {
            Expr::Sym { name, span } => out.push((name.clone(), *span)),
            Expr::Neg { expr, .. } => expr.symbols(out),
            Expr::Bin { lhs, rhs, .. } => {
                lhs.symbols(out);
                rhs.symbols(out);
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub key: String,
    pub value: Expr,
    pub span: Span,
}

impl Param {
    pub fn new(key: &str, value: Expr) -> Self {
        Param { key: key.into(), value, span: Span::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Relax,
    Noise,
    Ensemble,
}

impl Section {
    pub fn name(self) -> &'static str {
        match self {
            Section::Relax => "relax",
            Section::Noise => "noise",
            Section::Ensemble => "ensemble",
        }
    }

    pub fn parse(s: &str) -> Option<Section> {
        [Section::Relax, Section::Noise, Section::Ensemble].into_iter().find(|k| k.name() == s)
    }

    /// Accepted keys and the dimension each expects.
    pub fn keys(self) -> &'static [(&'static str, Dim)] {
        match self {
            Section::Relax => &[("t1", TIME), ("t2", TIME), ("t2_star", TIME), ("w_eq", DIMENSIONLESS)],
            Section::Noise => &[("sigma", FREQUENCY), ("tau_c", TIME)],
            Section::Ensemble => &[
                ("members", DIMENSIONLESS),
                ("seed", DIMENSIONLESS),
                ("lorentzian", FREQUENCY),
                ("gaussian", FREQUENCY),
                ("drive_lorentzian", FREQUENCY),
                ("drive_gaussian", FREQUENCY),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeaderItem {
    Center { center: Center, span: Span },
    Section { section: Section, params: Vec<Param>, span: Span },
    Let { name: String, value: Expr, span: Span },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Laser,
    Rf,
    Wait,
    Readout,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [EventKind::Laser, EventKind::Rf, EventKind::Wait, EventKind::Readout];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Laser => "laser",
            EventKind::Rf => "rf",
            EventKind::Wait => "wait",
            EventKind::Readout => "readout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        EventKind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// (key, dimension, required).
    pub fn keys(self) -> &'static [(&'static str, Dim, bool)] {
        match self {
            EventKind::Rf => &[("dur", TIME, true), ("phase", DIMENSIONLESS, true), ("rabi", FREQUENCY, true), ("detuning", FREQUENCY, false)],
            _ => &[("dur", TIME, true)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Event { kind: EventKind, params: Vec<Param>, span: Span },
    Repeat { count: Expr, body: Vec<Stmt>, span: Span },
}

impl Stmt {
    pub fn event(kind: EventKind, params: Vec<Param>) -> Stmt {
        Stmt::Event { kind, params, span: Span::default() }
    }

    pub fn span(&self) -> Span {
        match self {
            Stmt::Event { span, .. } | Stmt::Repeat { span, .. } => *span,
        }
    }
}

/// `start:step:stop unit`; an empty grid when stop < start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub start: f64,
    pub step: f64,
    pub stop: f64,
    pub unit: Option<Unit>,
}

impl Range {
    pub fn dim(&self) -> Dim {
        self.unit.map_or(DIMENSIONLESS, Unit::dim)
    }

    /// Grid values in the range's own unit.
    pub fn values(&self) -> Vec<f64> {
        if self.stop < self.start {
            return Vec::new();
        }
        let n = ((self.stop - self.start) / self.step * (1.0 + 1e-12) + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub var: String,
    pub range: Range,
    pub span: Span,
}

/// Statements of a `sequence` or `reference` block; the span is the
/// block keyword.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Block {
    pub body: Vec<Stmt>,
    pub span: Span,
}

impl Block {
    pub fn new(body: Vec<Stmt>) -> Self {
        Block { body, span: Span::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceAst {
    pub header: Vec<HeaderItem>,
    pub main: Block,
    pub reference: Option<Block>,
    pub sweep: Sweep,
    /// x value of each grid point; the sweep variable when absent.
    pub axis: Option<Expr>,
}
