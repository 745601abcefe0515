use super::ast::{Span, Unit};
use super::{ErrorKind, RawError};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Num(f64, Option<Unit>),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Eq,
    Colon,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Num(v, Some(u)) => format!("'{v}{}'", u.name()),
            Tok::Num(v, None) => format!("'{v}'"),
            Tok::Eof => "end of input".into(),
            t => format!("'{}'", t.punct()),
        }
    }

    fn punct(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Semi => ";",
            Tok::Eq => "=",
            Tok::Colon => ":",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
    /// Whitespace or a comment precedes the token.
    pub spaced: bool,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

pub fn lex(src: &str) -> Result<Vec<Token>, RawError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let mut spaced = true;
    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            spaced = true;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            spaced = true;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            spaced = true;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| RawError::new(ErrorKind::Lexical, span, format!("malformed number '{text}'")))?;
            if !value.is_finite() {
                return Err(RawError::new(ErrorKind::Lexical, span, format!("number '{text}' is out of range")));
            }
            let mut unit = None;
            if i < chars.len() && is_ident_start(chars[i]) {
                let ustart = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                let name: String = chars[ustart..i].iter().collect();
                let ucol = col + (ustart - start) as u32;
                unit = Some(
                    Unit::parse(&name)
                        .ok_or_else(|| RawError::new(ErrorKind::Lexical, Span::new(line, ucol), format!("unknown unit '{name}'")))?,
                );
            }
            if i < chars.len() && (chars[i] == '.' || is_ident_char(chars[i])) {
                return Err(RawError::new(ErrorKind::Lexical, Span::new(line, col + (i - start) as u32), format!("unexpected '{}' in number", chars[i])));
            }
            Tok::Num(value, unit)
        } else if is_ident_start(c) || c == '$' {
            if c == '$' {
                i += 1;
                if !(i < chars.len() && is_ident_start(chars[i])) {
                    return Err(RawError::new(ErrorKind::Lexical, span, "'$' must be followed by a name".into()));
                }
            }
            let name_start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            Tok::Ident(chars[name_start..i].iter().collect())
        } else {
            i += 1;
            match c {
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ';' => Tok::Semi,
                '=' => Tok::Eq,
                ':' => Tok::Colon,
                '+' => Tok::Plus,
                '-' | '−' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                _ => return Err(RawError::new(ErrorKind::Lexical, span, format!("unexpected character '{c}'"))),
            }
        };
        col += (i - start) as u32;
        out.push(Token { tok, span, spaced });
        spaced = false;
    }
    out.push(Token { tok: Tok::Eof, span: Span::new(line, col), spaced: true });
    Ok(out)
}
