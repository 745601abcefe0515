//! Random valid sequence ASTs.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vsi_core::seq::ast::*;
use vsi_core::spin::Center;

const TIME_UNITS: [Unit; 4] = [Unit::Ns, Unit::Us, Unit::Ms, Unit::S];
const FREQ_UNITS: [Unit; 4] = [Unit::Hz, Unit::KHz, Unit::MHz, Unit::GHz];

#[derive(Clone)]
struct Name {
    name: String,
    dim: Dim,
    varying: bool,
    positive: bool,
}

struct Gen {
    rng: ChaCha8Rng,
    names: Vec<Name>,
    taken: Vec<String>,
}

impl Gen {
    fn number(&mut self) -> f64 {
        match self.rng.random_range(0..4) {
            0 => self.rng.random_range(1..1000) as f64,
            1 => self.rng.random_range(1e-3..1e3),
            2 => 10f64.powi(self.rng.random_range(-7..12)),
            _ => self.rng.random_range(0.0..10.0),
        }
    }

    fn leaf(&mut self, dim: Dim, positive: bool) -> Expr {
        let mut v = self.number();
        if positive && v == 0.0 {
            v = 1.0;
        }
        let unit = match dim {
            TIME => Some(*TIME_UNITS.choose(&mut self.rng).unwrap()),
            FREQUENCY => Some(*FREQ_UNITS.choose(&mut self.rng).unwrap()),
            _ => None,
        };
        Expr::num(v, unit)
    }

    fn fresh(&mut self) -> String {
        const PARTS: [&str; 8] = ["a", "tau", "t_pi", "nu", "τ", "ω_r", "delay", "n"];
        loop {
            let s = format!("{}{}", PARTS.choose(&mut self.rng).unwrap(), self.rng.random_range(0..100));
            if !self.taken.contains(&s) {
                self.taken.push(s.clone());
                return s;
            }
        }
    }

    fn symbol(&mut self, dim: Dim, constant: bool, positive: bool) -> Option<Expr> {
        let pool: Vec<Name> =
            self.names.iter().filter(|n| n.dim == dim && !(constant && n.varying) && !(positive && !n.positive && !n.varying)).cloned().collect();
        pool.choose(&mut self.rng).map(|n| Expr::sym(&n.name))
    }

    /// Any finite value of dimension `dim`.
    fn expr(&mut self, dim: Dim, depth: u32, constant: bool) -> Expr {
        if depth == 0 || self.rng.random_bool(0.3) {
            if (-1..=1).contains(&dim) {
                match self.rng.random_range(0..5) {
                    0 | 1 => {
                        if let Some(s) = self.symbol(dim, constant, false) {
                            return s;
                        }
                    }
                    2 if dim == 0 => {
                        let axes = [Axis::X, Axis::Y, Axis::MinusX, Axis::MinusY];
                        return Expr::Axis { axis: *axes.choose(&mut self.rng).unwrap(), span: Span::default() };
                    }
                    3 if dim == 0 => return Expr::Pi { span: Span::default() },
                    _ => {}
                }
                return self.leaf(dim, false);
            }
            let s = dim.signum();
            let lhs = self.leaf(s, true);
            return Expr::bin(BinOp::Mul, lhs, self.expr(dim - s, 0, constant));
        }
        let d = depth - 1;
        match self.rng.random_range(0..5) {
            0 => Expr::Neg { expr: Box::new(self.expr(dim, d, constant)), span: Span::default() },
            1 => Expr::bin(if self.rng.random() { BinOp::Add } else { BinOp::Sub }, self.expr(dim, d, constant), self.expr(dim, d, constant)),
            2 => {
                let a = self.rng.random_range(-1..=1);
                Expr::bin(BinOp::Mul, self.expr(a, d, constant), self.expr(dim - a, d, constant))
            }
            3 => {
                let a = self.rng.random_range(-1..=1);
                Expr::bin(BinOp::Div, self.expr(dim + a, d, constant), self.positive(a, d))
            }
            _ => self.expr(dim, d, constant),
        }
    }

    /// Strictly positive constant.
    fn positive(&mut self, dim: Dim, depth: u32) -> Expr {
        if depth == 0 || self.rng.random_bool(0.35) {
            if (-1..=1).contains(&dim) {
                if self.rng.random_bool(0.4) {
                    if let Some(s) = self.symbol(dim, true, true) {
                        return s;
                    }
                }
                return self.leaf(dim, true);
            }
            let s = dim.signum();
            let lhs = self.leaf(s, true);
            return Expr::bin(BinOp::Mul, lhs, self.positive(dim - s, 0));
        }
        let d = depth - 1;
        let a = self.rng.random_range(-1..=1);
        match self.rng.random_range(0..3) {
            0 => Expr::bin(BinOp::Add, self.positive(dim, d), self.positive(dim, d)),
            1 => Expr::bin(BinOp::Mul, self.positive(a, d), self.positive(dim - a, d)),
            _ => Expr::bin(BinOp::Div, self.positive(dim + a, d), self.positive(a, d)),
        }
    }

    fn params(&mut self, keys: &[(&str, Dim)]) -> Vec<Param> {
        let mut out = Vec::new();
        for &(k, d) in keys {
            if self.rng.random_bool(0.5) {
                out.push(Param::new(k, self.expr(d, 2, true)));
            }
        }
        out.shuffle(&mut self.rng);
        out
    }

    fn event(&mut self, kind: EventKind) -> Stmt {
        let dur = if self.rng.random_bool(0.3) {
            self.expr(TIME, 2, false)
        } else {
            self.positive(TIME, 2)
        };
        // Sweep-dependent durations are only checked at compile time.
        let dur = if contains_varying(&dur, &self.names) { dur } else { self.positive(TIME, 2) };
        let mut params = vec![Param::new("dur", dur)];
        if kind == EventKind::Rf {
            params.push(Param::new("phase", self.expr(DIMENSIONLESS, 3, false)));
            params.push(Param::new("rabi", self.expr(FREQUENCY, 2, false)));
            if self.rng.random() {
                params.push(Param::new("detuning", self.expr(FREQUENCY, 2, false)));
            }
        }
        params.shuffle(&mut self.rng);
        Stmt::event(kind, params)
    }

    fn count(&mut self) -> Expr {
        let sweep_count = self.names.iter().find(|n| n.varying && n.dim == DIMENSIONLESS && n.positive).map(|n| n.name.clone());
        match (self.rng.random_range(0..3), sweep_count) {
            (0, Some(n)) => Expr::sym(&n),
            (1, _) => Expr::bin(BinOp::Mul, Expr::num(self.rng.random_range(0..4) as f64, None), Expr::num(self.rng.random_range(0..4) as f64, None)),
            _ => Expr::num(self.rng.random_range(0..5) as f64, None),
        }
    }

    fn stmts(&mut self, n: usize, depth: u32) -> Vec<Stmt> {
        (0..n)
            .map(|_| match self.rng.random_range(0..6) {
                0 if depth > 0 => {
                    let k = self.rng.random_range(0..4);
                    Stmt::Repeat { count: self.count(), body: self.stmts(k, depth - 1), span: Span::default() }
                }
                1 => self.event(EventKind::Laser),
                2 | 3 => self.event(EventKind::Rf),
                _ => self.event(EventKind::Wait),
            })
            .collect()
    }

    fn block(&mut self) -> Block {
        let mut body = vec![self.event(EventKind::Laser)];
        let n = self.rng.random_range(0..6);
        body.extend(self.stmts(n, 2));
        let at = self.rng.random_range(1..=body.len());
        body.insert(at, self.event(EventKind::Readout));
        let n = self.rng.random_range(0..2);
        body.extend(self.stmts(n, 1));
        Block::new(body)
    }

    fn ast(&mut self) -> SequenceAst {
        let var = self.fresh();
        let unit = match self.rng.random_range(0..3) {
            0 => None,
            1 => Some(*TIME_UNITS.choose(&mut self.rng).unwrap()),
            _ => Some(*FREQ_UNITS.choose(&mut self.rng).unwrap()),
        };
        let start = if self.rng.random_bool(0.2) { -self.number() } else { self.rng.random_range(0..10) as f64 };
        let step = self.number().max(1e-3);
        let stop = start + step * self.rng.random_range(-2..50) as f64;
        let range = Range { start, step, stop, unit };
        self.names.push(Name { name: var.clone(), dim: range.dim(), varying: true, positive: start >= 0.0 && unit.is_none() && start.fract() == 0.0 && step.fract() == 0.0 });

        let mut header = Vec::new();
        let mut sections = vec![Section::Relax, Section::Noise, Section::Ensemble];
        sections.shuffle(&mut self.rng);
        if self.rng.random() {
            header.push(HeaderItem::Center { center: *Center::all().choose(&mut self.rng).unwrap(), span: Span::default() });
        }
        for _ in 0..self.rng.random_range(0..8) {
            if self.rng.random_bool(0.3) {
                if let Some(section) = sections.pop() {
                    let mut keys: Vec<(&str, Dim)> = section.keys().to_vec();
                    let drop = if self.rng.random() { ["gaussian", "drive_gaussian"] } else { ["lorentzian", "drive_lorentzian"] };
                    keys.retain(|(k, _)| !drop.contains(k));
                    header.push(HeaderItem::Section { section, params: self.params(&keys), span: Span::default() });
                    continue;
                }
            }
            let dim = self.rng.random_range(-2..=2);
            let positive = self.rng.random();
            let value = if positive { self.positive(dim, 3) } else { self.expr(dim, 3, false) };
            let varying = contains_varying(&value, &self.names);
            let name = self.fresh();
            self.names.push(Name { name: name.clone(), dim, varying, positive: positive && !varying });
            header.push(HeaderItem::Let { name, value, span: Span::default() });
        }
        let main = self.block();
        let reference = self.rng.random::<bool>().then(|| self.block());
        let axis = self.rng.random::<bool>().then(|| {
            let d = self.rng.random_range(-1..=1);
            self.expr(d, 3, false)
        });
        SequenceAst { header, main, reference, sweep: Sweep { var, range, span: Span::default() }, axis }
    }
}

fn contains_varying(e: &Expr, names: &[Name]) -> bool {
    let mut syms = Vec::new();
    e.symbols(&mut syms);
    syms.iter().any(|(s, _)| names.iter().any(|n| &n.name == s && n.varying))
}

pub fn generate(seed: u64) -> SequenceAst {
    Gen { rng: ChaCha8Rng::seed_from_u64(seed), names: Vec::new(), taken: Vec::new() }.ast()
}
