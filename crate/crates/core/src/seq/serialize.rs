use super::ast::*;
use std::fmt::Write;

/// Canonical text: header lines in order, four-space indented blocks, a
/// blank line between sections. Parsing the output gives back `ast`.
pub fn serialize(ast: &SequenceAst) -> String {
    let mut out = String::new();
    for item in &ast.header {
        match item {
            HeaderItem::Center { center, .. } => writeln!(out, "center {};", center.name()),
            HeaderItem::Section { section, params, .. } => writeln!(out, "{}{};", section.name(), params_text(params)),
            HeaderItem::Let { name, value, .. } => writeln!(out, "let {name} = {};", serialize_expr(value)),
        }
        .unwrap();
    }
    if !ast.header.is_empty() {
        out.push('\n');
    }
    block(&mut out, "sequence", &ast.main.body);
    if let Some(r) = &ast.reference {
        out.push('\n');
        block(&mut out, "reference", &r.body);
    }
    let r = &ast.sweep.range;
    let unit = r.unit.map_or("", Unit::name);
    writeln!(out, "\nsweep {} = {}:{}:{}{unit};", ast.sweep.var, r.start, r.step, r.stop).unwrap();
    if let Some(a) = &ast.axis {
        writeln!(out, "axis {};", serialize_expr(a)).unwrap();
    }
    out
}

fn params_text(params: &[Param]) -> String {
    params.iter().map(|p| format!(" {}={}", p.key, serialize_expr(&p.value))).collect()
}

fn block(out: &mut String, name: &str, body: &[Stmt]) {
    writeln!(out, "{name} {{").unwrap();
    stmts(out, body, 1);
    out.push_str("}\n");
}

fn stmts(out: &mut String, body: &[Stmt], depth: usize) {
    let pad = "    ".repeat(depth);
    for s in body {
        match s {
            Stmt::Event { kind, params, .. } => writeln!(out, "{pad}{}{};", kind.name(), params_text(params)).unwrap(),
            Stmt::Repeat { count, body, .. } => {
                writeln!(out, "{pad}repeat {} {{", serialize_expr(count)).unwrap();
                stmts(out, body, depth + 1);
                writeln!(out, "{pad}}}").unwrap();
            }
        }
    }
}

/// Minimal parentheses; spaces around `+` and `-` only.
pub fn serialize_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e, 0, false);
    s
}

fn expr(out: &mut String, e: &Expr, parent: u8, right: bool) {
    match e {
        Expr::Num { value, unit, .. } => {
            write!(out, "{value}{}", unit.map_or("", Unit::name)).unwrap();
        }
        Expr::Sym { name, .. } => out.push_str(name),
        Expr::Axis { axis, .. } => out.push_str(axis.name()),
        Expr::Pi { .. } => out.push_str("pi"),
        Expr::Neg { expr: inner, .. } => {
            out.push('-');
            let wrap = matches!(**inner, Expr::Bin { .. } | Expr::Axis { .. });
            if wrap {
                out.push('(');
                expr(out, inner, 0, false);
                out.push(')');
            } else {
                expr(out, inner, 3, false);
            }
        }
        Expr::Bin { op, lhs, rhs, .. } => {
            let p = op.precedence();
            let wrap = p < parent || (right && p == parent);
            if wrap {
                out.push('(');
            }
            expr(out, lhs, p, false);
            match op {
                BinOp::Add | BinOp::Sub => write!(out, " {} ", op.symbol()).unwrap(),
                _ => out.push_str(op.symbol()),
            }
            expr(out, rhs, p, true);
            if wrap {
                out.push(')');
            }
        }
    }
}
