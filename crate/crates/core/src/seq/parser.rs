use super::ast::*;
use super::compile::{eval, Env};
use super::lexer::{lex, Tok, Token};
use super::{ErrorKind, RawError};
use crate::spin::Center;
use std::collections::{HashMap, HashSet};

const HEADER_KEYWORDS: [&str; 5] = ["center", "relax", "noise", "ensemble", "let"];
const KEYWORDS: [&str; 15] =
    ["center", "relax", "noise", "ensemble", "let", "sequence", "reference", "sweep", "axis", "repeat", "laser", "rf", "wait", "readout", "pi"];

/// Names that cannot be bound by `let` or `sweep`.
pub fn is_reserved(name: &str) -> bool {
    KEYWORDS.contains(&name) || name == "x" || name == "y"
}

pub fn parse(text: &str) -> Result<SequenceAst, RawError> {
    let toks = lex(text)?;
    let ast = Parser { toks, pos: 0 }.file()?;
    check(&ast)?;
    Ok(ast)
}

/// A lone expression, as given on a command line.
pub fn parse_expr(text: &str) -> Result<Expr, RawError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    let t = p.peek();
    if t.tok != Tok::Eof {
        return err(ErrorKind::Syntax, t.span, format!("expected end of expression, found {}", t.tok.describe()));
    }
    Ok(e)
}

fn err<T>(kind: ErrorKind, span: Span, message: impl Into<String>) -> Result<T, RawError> {
    Err(RawError::new(kind, span, message.into()))
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == w)
    }

    fn expect(&mut self, tok: Tok, context: &str) -> Result<Span, RawError> {
        let t = self.peek();
        if t.tok == tok {
            Ok(self.bump().span)
        } else {
            let (found, span) = (t.tok.describe(), t.span);
            err(ErrorKind::Syntax, span, format!("expected '{}' {context}, found {found}", describe_punct(&tok)))
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<Span, RawError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(s) if s == w => Ok(self.bump().span),
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => err(ErrorKind::UnknownKeyword, t.span, format!("unknown keyword '{s}', expected '{w}'")),
            Tok::Ident(s) if HEADER_KEYWORDS.contains(&s.as_str()) => {
                err(ErrorKind::Syntax, t.span, format!("'{s}' belongs in the header, before the sequence block"))
            }
            other => err(ErrorKind::Syntax, t.span, format!("expected '{w}', found {}", other.describe())),
        }
    }

    /// A name that may be bound.
    fn binding(&mut self, what: &str) -> Result<(String, Span), RawError> {
        let t = self.bump();
        match t.tok {
            Tok::Ident(s) if is_reserved(&s) => err(ErrorKind::Syntax, t.span, format!("'{s}' is reserved and cannot name a {what}")),
            Tok::Ident(s) => Ok((s, t.span)),
            other => err(ErrorKind::Syntax, t.span, format!("expected a {what} name, found {}", other.describe())),
        }
    }

    fn file(&mut self) -> Result<SequenceAst, RawError> {
        let mut header = Vec::new();
        while let Tok::Ident(w) = &self.peek().tok {
            if !HEADER_KEYWORDS.contains(&w.as_str()) {
                break;
            }
            header.push(self.header_item()?);
        }
        let main = self.block("sequence")?;
        let reference = if self.at_word("reference") { Some(self.block("reference")?) } else { None };
        let span = self.expect_word("sweep")?;
        let (var, _) = self.binding("sweep variable")?;
        self.expect(Tok::Eq, "after the sweep variable")?;
        let range = self.range()?;
        self.expect(Tok::Semi, "after the sweep range")?;
        let sweep = Sweep { var, range, span };
        let axis = if self.at_word("axis") {
            self.bump();
            let e = self.expr()?;
            self.expect(Tok::Semi, "after the axis expression")?;
            Some(e)
        } else {
            None
        };
        let t = self.peek().clone();
        match &t.tok {
            Tok::Eof => {}
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => return err(ErrorKind::UnknownKeyword, t.span, format!("unknown keyword '{s}'")),
            other => return err(ErrorKind::Syntax, t.span, format!("expected end of input after the sweep, found {}", other.describe())),
        }
        Ok(SequenceAst { header, main, reference, sweep, axis })
    }

    fn header_item(&mut self) -> Result<HeaderItem, RawError> {
        let t = self.bump();
        let Tok::Ident(word) = t.tok else { unreachable!("header items start with a keyword") };
        let span = t.span;
        let item = match word.as_str() {
            "center" => {
                let n = self.bump();
                let center = match &n.tok {
                    Tok::Ident(s) => Center::parse(s).ok_or_else(|| RawError::new(ErrorKind::UnknownKeyword, n.span, format!("unknown center '{s}' (v1v3 or v2)")))?,
                    other => return err(ErrorKind::Syntax, n.span, format!("expected a center name, found {}", other.describe())),
                };
                HeaderItem::Center { center, span }
            }
            "let" => {
                let (name, _) = self.binding("binding")?;
                self.expect(Tok::Eq, "after the binding name")?;
                let value = self.expr()?;
                HeaderItem::Let { name, value, span }
            }
            w => {
                let section = match w {
                    "relax" => Section::Relax,
                    "noise" => Section::Noise,
                    _ => Section::Ensemble,
                };
                HeaderItem::Section { section, params: self.params()?, span }
            }
        };
        self.expect(Tok::Semi, &format!("to end the '{word}' line"))?;
        Ok(item)
    }

    fn params(&mut self) -> Result<Vec<Param>, RawError> {
        let mut out = Vec::new();
        while let Tok::Ident(key) = &self.peek().tok {
            if self.toks.get(self.pos + 1).map(|t| &t.tok) != Some(&Tok::Eq) {
                break;
            }
            let key = key.clone();
            let span = self.bump().span;
            self.bump();
            let value = self.expr()?;
            out.push(Param { key, value, span });
        }
        Ok(out)
    }

    fn block(&mut self, word: &str) -> Result<Block, RawError> {
        let span = self.expect_word(word)?;
        let body = self.braced()?;
        Ok(Block { body, span })
    }

    fn braced(&mut self) -> Result<Vec<Stmt>, RawError> {
        self.expect(Tok::LBrace, "to open the block")?;
        let mut body = Vec::new();
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::RBrace => {
                    self.bump();
                    return Ok(body);
                }
                Tok::Ident(w) if w == "repeat" => {
                    self.bump();
                    let count = self.expr()?;
                    let inner = self.braced()?;
                    body.push(Stmt::Repeat { count, body: inner, span: t.span });
                }
                Tok::Ident(w) => match EventKind::parse(w) {
                    Some(kind) => {
                        self.bump();
                        let params = self.params()?;
                        self.expect(Tok::Semi, &format!("to end the '{w}' event"))?;
                        body.push(Stmt::Event { kind, params, span: t.span });
                    }
                    None if KEYWORDS.contains(&w.as_str()) => return err(ErrorKind::Syntax, t.span, format!("'{w}' is not allowed inside a block")),
                    None => return err(ErrorKind::UnknownKeyword, t.span, format!("unknown event '{w}' (laser, rf, wait, readout or repeat)")),
                },
                Tok::Eof => return err(ErrorKind::Syntax, t.span, "unclosed block, expected '}'"),
                other => return err(ErrorKind::Syntax, t.span, format!("expected an event, found {}", other.describe())),
            }
        }
    }

    fn signed_number(&mut self) -> Result<(f64, Option<Unit>, Span), RawError> {
        let negative = self.peek().tok == Tok::Minus;
        if negative {
            self.bump();
        }
        let t = self.bump();
        match t.tok {
            Tok::Num(v, u) => Ok((if negative { -v } else { v }, u, t.span)),
            other => err(ErrorKind::Syntax, t.span, format!("expected a number in the sweep range, found {}", other.describe())),
        }
    }

    fn range(&mut self) -> Result<Range, RawError> {
        let (start, u0, _) = self.signed_number()?;
        self.expect(Tok::Colon, "after the range start")?;
        let (step, u1, step_span) = self.signed_number()?;
        self.expect(Tok::Colon, "after the range step")?;
        let (stop, u2, stop_span) = self.signed_number()?;
        let mut unit = None;
        for u in [u2, u1, u0].into_iter().flatten() {
            match unit {
                None => unit = Some(u),
                Some(v) if v.dim() != u.dim() || v.factor() != u.factor() => {
                    return err(ErrorKind::UnitMismatch, stop_span, format!("range mixes '{}' and '{}'", u.name(), v.name()))
                }
                _ => {}
            }
        }
        if step <= 0.0 {
            return err(ErrorKind::Syntax, step_span, format!("sweep step must be positive, got {step}"));
        }
        if (stop - start) / step > 1e7 {
            return err(ErrorKind::Syntax, step_span, "sweep grid exceeds 10^7 points");
        }
        Ok(Range { start, step, stop, unit })
    }

    fn expr(&mut self) -> Result<Expr, RawError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.term()?;
            lhs = Expr::Bin { op, lhs: Box::new(lhs), rhs: Box::new(rhs), span };
        }
    }

    fn term(&mut self) -> Result<Expr, RawError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.unary()?;
            lhs = Expr::Bin { op, lhs: Box::new(lhs), rhs: Box::new(rhs), span };
        }
    }

    fn unary(&mut self) -> Result<Expr, RawError> {
        if self.peek().tok != Tok::Minus {
            return self.primary();
        }
        let span = self.bump().span;
        let axis = match self.peek().tok.clone() {
            Tok::Ident(s) if s == "x" => Some(Axis::MinusX),
            Tok::Ident(s) if s == "y" => Some(Axis::MinusY),
            _ => None,
        };
        if let Some(axis) = axis {
            self.bump();
            return Ok(Expr::Axis { axis, span });
        }
        Ok(Expr::Neg { expr: Box::new(self.unary()?), span })
    }

    fn primary(&mut self) -> Result<Expr, RawError> {
        let t = self.bump();
        let span = t.span;
        match t.tok {
            Tok::Num(value, unit) => Ok(Expr::Num { value, unit, span }),
            Tok::Ident(s) => match s.as_str() {
                "pi" => Ok(Expr::Pi { span }),
                "x" => Ok(Expr::Axis { axis: Axis::X, span }),
                "y" => Ok(Expr::Axis { axis: Axis::Y, span }),
                w if KEYWORDS.contains(&w) => err(ErrorKind::Syntax, span, format!("expected an expression, found keyword '{w}'")),
                _ => Ok(Expr::Sym { name: s, span }),
            },
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "to close the parenthesis")?;
                Ok(e)
            }
            other => {
                err(ErrorKind::Syntax, span, format!("expected an expression, found {}", other.describe()))
            }
        }
    }
}

fn describe_punct(t: &Tok) -> String {
    let d = t.describe();
    d.trim_matches('\'').to_string()
}

/// What the checker knows about a bound name.
#[derive(Clone, Copy)]
struct Binding {
    dim: Dim,
    on_sweep: bool,
}

struct Checker {
    names: HashMap<String, Binding>,
    consts: Env,
}

impl Checker {
    fn resolve(&self, e: &Expr) -> Result<bool, RawError> {
        let mut syms = Vec::new();
        e.symbols(&mut syms);
        let mut on_sweep = false;
        for (name, span) in syms {
            match self.names.get(&name) {
                Some(b) => on_sweep |= b.on_sweep,
                None => return err(ErrorKind::UnresolvedSymbol, span, format!("unknown symbol '{name}'")),
            }
        }
        Ok(on_sweep)
    }

    fn dim(&self, e: &Expr) -> Result<Dim, RawError> {
        Ok(match e {
            Expr::Num { unit, .. } => unit.map_or(DIMENSIONLESS, Unit::dim),
            Expr::Sym { name, .. } => self.names[name].dim,
            Expr::Axis { .. } | Expr::Pi { .. } => DIMENSIONLESS,
            Expr::Neg { expr, .. } => self.dim(expr)?,
            Expr::Bin { op, lhs, rhs, span } => {
                let (a, b) = (self.dim(lhs)?, self.dim(rhs)?);
                match op {
                    BinOp::Add | BinOp::Sub if a != b => {
                        let verb = if *op == BinOp::Add { "add" } else { "subtract" };
                        return err(ErrorKind::UnitMismatch, *span, format!("cannot {verb} {} and {}", dim_name(a), dim_name(b)));
                    }
                    BinOp::Add | BinOp::Sub => a,
                    BinOp::Mul => a.saturating_add(b),
                    BinOp::Div => a.saturating_sub(b),
                }
            }
        })
    }

    /// Resolves, dimension-checks and, for constant expressions, evaluates.
    fn expr(&self, e: &Expr, want: Option<Dim>, what: &str, span: Span) -> Result<(bool, Option<f64>), RawError> {
        let on_sweep = self.resolve(e)?;
        let d = self.dim(e)?;
        if let Some(w) = want {
            if d != w {
                return err(ErrorKind::UnitMismatch, span, format!("{what} expects {}, got {}", dim_name(w), dim_name(d)));
            }
        }
        if on_sweep {
            return Ok((true, None));
        }
        let v = eval(e, &self.consts);
        if !v.is_finite() {
            return err(ErrorKind::Evaluation, span, format!("{what} evaluates to {v}"));
        }
        Ok((false, Some(v)))
    }

    fn params(&self, params: &[Param], allowed: &[(&str, Dim)], owner: &str) -> Result<Vec<(bool, Option<f64>)>, RawError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for p in params {
            let Some(&(_, dim)) = allowed.iter().find(|(k, _)| *k == p.key) else {
                let keys: Vec<&str> = allowed.iter().map(|(k, _)| *k).collect();
                return err(ErrorKind::UnknownKeyword, p.span, format!("unknown {owner} key '{}' (expected {})", p.key, keys.join(", ")));
            };
            if !seen.insert(p.key.as_str()) {
                return err(ErrorKind::DuplicateDefinition, p.span, format!("'{}' given twice", p.key));
            }
            out.push(self.expr(&p.value, Some(dim), &p.key, p.span)?);
        }
        Ok(out)
    }

    fn block(&self, block: &Block, name: &str) -> Result<(), RawError> {
        match block.body.first() {
            Some(Stmt::Event { kind: EventKind::Laser, .. }) => {}
            Some(s) => return err(ErrorKind::MissingLaser, s.span(), format!("{name} block must begin with a laser event")),
            None => return err(ErrorKind::MissingLaser, block.span, format!("{name} block is empty, it needs a laser and a readout")),
        }
        self.stmts(&block.body, false)?;
        let mut readout = false;
        for s in &block.body {
            if let Stmt::Event { kind: EventKind::Readout, span, .. } = s {
                if readout {
                    return err(ErrorKind::DuplicateReadout, *span, format!("second readout in the {name} block"));
                }
                readout = true;
            }
        }
        if !readout {
            return err(ErrorKind::MissingReadout, block.span, format!("{name} block has no readout"));
        }
        Ok(())
    }

    fn stmts(&self, body: &[Stmt], in_repeat: bool) -> Result<(), RawError> {
        for s in body {
            match s {
                Stmt::Event { kind, params, span } => {
                    if in_repeat && *kind == EventKind::Readout {
                        return err(ErrorKind::DuplicateReadout, *span, "readout inside a repeat block would read out more than once");
                    }
                    let keys: Vec<(&str, Dim)> = kind.keys().iter().map(|&(k, d, _)| (k, d)).collect();
                    let values = self.params(params, &keys, kind.name())?;
                    for &(k, _, required) in kind.keys() {
                        if required && !params.iter().any(|p| p.key == k) {
                            return err(ErrorKind::Syntax, *span, format!("{} needs '{k}='", kind.name()));
                        }
                    }
                    for (p, (_, v)) in params.iter().zip(values) {
                        if p.key == "dur" {
                            if let Some(v) = v.filter(|v| *v <= 0.0) {
                                return err(ErrorKind::NonpositiveDuration, p.span, format!("{} duration must be positive, got {v} us", kind.name()));
                            }
                        }
                    }
                }
                Stmt::Repeat { count, body, span } => {
                    if let (_, Some(n)) = self.expr(count, Some(DIMENSIONLESS), "repeat count", count.span())? {
                        if n < 0.0 || (n - n.round()).abs() > 1e-9 {
                            return err(ErrorKind::Evaluation, *span, format!("repeat count must be a nonnegative integer, got {n}"));
                        }
                    }
                    self.stmts(body, true)?;
                }
            }
        }
        Ok(())
    }
}

fn check(ast: &SequenceAst) -> Result<(), RawError> {
    let mut c = Checker { names: HashMap::new(), consts: Env::new() };
    let sweep = &ast.sweep;
    c.names.insert(sweep.var.clone(), Binding { dim: sweep.range.dim(), on_sweep: true });
    let mut center = false;
    let mut sections = HashSet::new();
    for item in &ast.header {
        match item {
            HeaderItem::Center { span, .. } => {
                if std::mem::replace(&mut center, true) {
                    return err(ErrorKind::DuplicateDefinition, *span, "center given twice");
                }
            }
            HeaderItem::Section { section, params, span } => {
                if !sections.insert(section.name()) {
                    return err(ErrorKind::DuplicateDefinition, *span, format!("'{}' given twice", section.name()));
                }
                let values = c.params(params, section.keys(), section.name())?;
                for (p, (on_sweep, _)) in params.iter().zip(values) {
                    if on_sweep {
                        return err(ErrorKind::Syntax, p.span, format!("'{}' cannot depend on the sweep variable '{}'", p.key, sweep.var));
                    }
                }
                let has = |k: &str| params.iter().any(|p| p.key == k);
                for (a, b) in [("lorentzian", "gaussian"), ("drive_lorentzian", "drive_gaussian")] {
                    if has(a) && has(b) {
                        return err(ErrorKind::DuplicateDefinition, *span, format!("'{a}' and '{b}' are exclusive"));
                    }
                }
            }
            HeaderItem::Let { name, value, span } => {
                if c.names.contains_key(name) {
                    let what = if *name == sweep.var { "the sweep variable" } else { "an earlier binding" };
                    return err(ErrorKind::DuplicateDefinition, *span, format!("'{name}' shadows {what}"));
                }
                let (on_sweep, v) = c.expr(value, None, name, value.span())?;
                let dim = c.dim(value)?;
                if let Some(v) = v {
                    c.consts.insert(name.clone(), v);
                }
                c.names.insert(name.clone(), Binding { dim, on_sweep });
            }
        }
    }
    c.block(&ast.main, "sequence")?;
    if let Some(r) = &ast.reference {
        c.block(r, "reference")?;
    }
    if let Some(a) = &ast.axis {
        c.expr(a, None, "axis", a.span())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "sequence {\n  laser dur=300us;\n  rf dur=17.5ns phase=x rabi=28.57MHz;\n  readout dur=4us;\n}\nsweep t = 0:1:0ns;\n";

    fn kind_at(src: &str) -> (ErrorKind, u32, u32) {
        let e = parse(src).unwrap_err();
        (e.kind, e.span.line, e.span.col)
    }

    #[test]
    fn minimal_program_has_three_events() {
        let ast = parse(MINIMAL).unwrap();
        assert_eq!(ast.main.body.len(), 3);
        assert!(ast.reference.is_none() && ast.axis.is_none());
    }

    #[test]
    fn precedence_and_unary_axes() {
        let src = "let a = 1ns + 2ns*3 - -x*1ns;\nsequence { laser dur=a; readout dur=1us; }\nsweep t = 0:1:1;";
        let ast = parse(src).unwrap();
        let HeaderItem::Let { value, .. } = &ast.header[0] else { panic!() };
        let want = Expr::bin(
            BinOp::Sub,
            Expr::bin(BinOp::Add, Expr::num(1.0, Some(Unit::Ns)), Expr::bin(BinOp::Mul, Expr::num(2.0, Some(Unit::Ns)), Expr::num(3.0, None))),
            Expr::bin(BinOp::Mul, Expr::Axis { axis: Axis::MinusX, span: Span::default() }, Expr::num(1.0, Some(Unit::Ns))),
        );
        assert_eq!(value, &want);
    }

    #[test]
    fn each_failure_has_its_kind_and_position() {
        let cases = [
            ("sequence { pulse dur=1us; }\nsweep t = 0:1:1;", ErrorKind::UnknownKeyword, 1, 12),
            ("sequence { laser dur=1us; wait dur=tau; readout dur=1us; }\nsweep t = 0:1:1us;", ErrorKind::UnresolvedSymbol, 1, 36),
            ("sequence { laser dur=1us; readout dur=1us; readout dur=1us; }\nsweep t = 0:1:1;", ErrorKind::DuplicateReadout, 1, 44),
            ("sequence { laser dur=1us; }\nsweep t = 0:1:1;", ErrorKind::MissingReadout, 1, 1),
            ("sequence { wait dur=1us; readout dur=1us; }\nsweep t = 0:1:1;", ErrorKind::MissingLaser, 1, 12),
            ("sequence { laser dur=1us; wait dur=0ns; readout dur=1us; }\nsweep t = 0:1:1;", ErrorKind::NonpositiveDuration, 1, 32),
            ("sequence { laser dur=1MHz; readout dur=1us; }\nsweep t = 0:1:1;", ErrorKind::UnitMismatch, 1, 18),
            ("sequence { laser dur=1; readout dur=1us; }\nsweep t = 0:1:1;", ErrorKind::UnitMismatch, 1, 18),
            ("sequence { laser dur=1us + 1MHz; readout dur=1us; }\nsweep t = 0:1:1;", ErrorKind::UnitMismatch, 1, 26),
            ("sequence { laser dur=1us readout dur=1us; }\nsweep t = 0:1:1;", ErrorKind::Syntax, 1, 26),
            ("let t = 1us;\nsequence { laser dur=1us; readout dur=1us; }\nsweep t = 0:1:1;", ErrorKind::DuplicateDefinition, 1, 1),
            ("sequence { laser dur=1us; readout dur=1us; }\nsweep t = 0:0:1;", ErrorKind::Syntax, 2, 13),
            ("sequence { laser dur=1us; repeat 1.5 { wait dur=1us; } readout dur=1us; }\nsweep t = 0:1:1;", ErrorKind::Evaluation, 1, 27),
            ("sequence { laser dur=1us; repeat 2 { readout dur=1us; } }\nsweep t = 0:1:1;", ErrorKind::DuplicateReadout, 1, 38),
        ];
        for (src, kind, line, col) in cases {
            assert_eq!(kind_at(src), (kind, line, col), "{src}");
        }
    }

    #[test]
    fn reserved_names_cannot_be_bound() {
        assert_eq!(kind_at("let x = 1;\nsequence { laser dur=1us; readout dur=1us; }\nsweep t = 0:1:1;").0, ErrorKind::Syntax);
    }
}
