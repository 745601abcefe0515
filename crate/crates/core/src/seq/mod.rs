//! Text format for pulse programs and one-dimensional experiment sweeps.
//!
//! A file is a header (center preset, relaxation, noise and ensemble
//! overrides, `let` bindings), a `sequence` block, an optional `reference`
//! block, one `sweep` and an optional `axis` expression. Times are carried
//! in µs and frequencies in MHz; every literal with a physical dimension
//! needs a unit. See `docs/sequence-format.md` for the grammar.

pub mod ast;
mod compile;
mod lexer;
mod parser;
mod serialize;
pub mod templates;

pub use ast::SequenceAst;
pub use compile::{compile, Family, Settings};
pub use serialize::{serialize, serialize_expr};

use ast::Span;
use std::fmt;
use thiserror::Error;

/// Program text plus the name used in diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSource {
    pub text: String,
    pub origin: String,
}

impl SequenceSource {
    pub fn new(text: impl Into<String>, origin: impl Into<String>) -> Self {
        SequenceSource { text: text.into(), origin: origin.into() }
    }

    pub fn read(path: &std::path::Path) -> std::io::Result<Self> {
        Ok(SequenceSource::new(std::fs::read_to_string(path)?, path.display().to_string()))
    }

    fn line(&self, n: u32) -> &str {
        self.text.lines().nth(n.saturating_sub(1) as usize).unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Lexical,
    Syntax,
    UnknownKeyword,
    UnresolvedSymbol,
    UnitMismatch,
    DuplicateDefinition,
    DuplicateReadout,
    MissingReadout,
    MissingLaser,
    NonpositiveDuration,
    Evaluation,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 11] = [
        ErrorKind::Lexical,
        ErrorKind::Syntax,
        ErrorKind::UnknownKeyword,
        ErrorKind::UnresolvedSymbol,
        ErrorKind::UnitMismatch,
        ErrorKind::DuplicateDefinition,
        ErrorKind::DuplicateReadout,
        ErrorKind::MissingReadout,
        ErrorKind::MissingLaser,
        ErrorKind::NonpositiveDuration,
        ErrorKind::Evaluation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Lexical => "lexical",
            ErrorKind::Syntax => "syntax",
            ErrorKind::UnknownKeyword => "unknown_keyword",
            ErrorKind::UnresolvedSymbol => "unresolved_symbol",
            ErrorKind::UnitMismatch => "unit_mismatch",
            ErrorKind::DuplicateDefinition => "duplicate_definition",
            ErrorKind::DuplicateReadout => "duplicate_readout",
            ErrorKind::MissingReadout => "missing_readout",
            ErrorKind::MissingLaser => "missing_laser",
            ErrorKind::NonpositiveDuration => "nonpositive_duration",
            ErrorKind::Evaluation => "evaluation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ErrorKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Error before it is tied to a source text.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RawError {
    pub kind: ErrorKind,
    pub span: Span,
    pub message: String,
    pub grid_index: Option<usize>,
}

impl RawError {
    pub fn new(kind: ErrorKind, span: Span, message: String) -> Self {
        RawError { kind, span, message, grid_index: None }
    }

    fn locate(self, src: Option<&SequenceSource>) -> SeqError {
        SeqError {
            kind: self.kind,
            message: self.message,
            origin: src.map_or_else(|| "<ast>".into(), |s| s.origin.clone()),
            line: self.span.line,
            col: self.span.col,
            excerpt: src.map(|s| s.line(self.span.line).to_string()),
            grid_index: self.grid_index,
        }
    }
}

/// Diagnostic with position, offending line and, for compile errors, the
/// grid point.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct SeqError {
    pub kind: ErrorKind,
    pub message: String,
    pub origin: String,
    /// 1-based; 0 when the AST was built without a source.
    pub line: u32,
    pub col: u32,
    pub excerpt: Option<String>,
    pub grid_index: Option<usize>,
}

impl fmt::Display for SeqError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}: {}", self.origin, self.line, self.col, self.kind, self.message)?;
        if let Some(i) = self.grid_index {
            write!(f, " (grid point {i})")?;
        }
        if let Some(ex) = &self.excerpt {
            let pad: String = ex.chars().take(self.col.saturating_sub(1) as usize).map(|c| if c == '\t' { '\t' } else { ' ' }).collect();
            write!(f, "\n  {ex}\n  {pad}^")?;
        }
        Ok(())
    }
}

pub fn parse(src: &SequenceSource) -> Result<SequenceAst, SeqError> {
    parser::parse(&src.text).map_err(|e| e.locate(Some(src)))
}

pub fn parse_str(text: &str) -> Result<SequenceAst, SeqError> {
    parse(&SequenceSource::new(text, "<input>"))
}

/// Replaces the value of `let key` or of a header parameter `section.key`
/// (added when absent) with the expression `value`. The result is
/// unchecked; serialize and parse it again to validate.
pub fn set_override(ast: &mut SequenceAst, key: &str, value: &str) -> Result<(), SeqError> {
    let src = SequenceSource::new(value, format!("--set {key}"));
    let expr = parser::parse_expr(value).map_err(|e| e.locate(Some(&src)))?;
    let fail = |kind, message: String| SeqError {
        kind,
        message,
        origin: "--set".into(),
        line: 1,
        col: 1,
        excerpt: None,
        grid_index: None,
    };
    if let Some((sec, k)) = key.split_once('.') {
        let section = ast::Section::parse(sec).ok_or_else(|| fail(ErrorKind::UnknownKeyword, format!("unknown header section '{sec}'")))?;
        if !section.keys().iter().any(|(name, _)| *name == k) {
            return Err(fail(ErrorKind::UnknownKeyword, format!("'{sec}' has no key '{k}'")));
        }
        let existing = ast.header.iter_mut().find_map(|h| match h {
            ast::HeaderItem::Section { section: s, params, .. } if *s == section => Some(params),
            _ => None,
        });
        match existing {
            Some(params) => match params.iter_mut().find(|p| p.key == k) {
                Some(p) => p.value = expr,
                None => params.push(ast::Param::new(k, expr)),
            },
            None => ast.header.push(ast::HeaderItem::Section { section, params: vec![ast::Param::new(k, expr)], span: Span::default() }),
        }
        return Ok(());
    }
    for h in &mut ast.header {
        if let ast::HeaderItem::Let { name, value, .. } = h {
            if name == key {
                *value = expr;
                return Ok(());
            }
        }
    }
    Err(fail(ErrorKind::UnresolvedSymbol, format!("no 'let {key}' to override")))
}

/// Parses and compiles, attaching source excerpts to compile errors.
pub fn compile_source(src: &SequenceSource) -> Result<Family, SeqError> {
    let ast = parse(src)?;
    compile::compile_raw(&ast).map_err(|e| e.locate(Some(src)))
}
