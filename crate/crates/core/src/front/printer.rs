//! Source printer. Output reparses to the same AST.

use std::fmt::{self, Write};

use crate::ast::*;
use crate::library::{binary_precedence, is_operator};
use crate::text::quote;
use crate::xpath::display_selectors;

const PREC_LAMBDA: u8 = 0;
const PREC_COMPARE: u8 = 4;
const PREC_UNARY: u8 = 7;
const PREC_POSTFIX: u8 = 8;
const PREC_ATOM: u8 = 9;

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Lambda(..) | ExprKind::If(..) => PREC_LAMBDA,
        ExprKind::InLang(..) => PREC_COMPARE,
        ExprKind::Select(..) => PREC_POSTFIX,
        ExprKind::Apply(f, args) => match (&f.kind, args.len()) {
            (ExprKind::Var(op), 2) if binary_precedence(op).is_some() => binary_precedence(op).unwrap(),
            (ExprKind::Var(op), 1) if op == "-" || op == "!" => PREC_UNARY,
            _ => PREC_POSTFIX,
        },
        ExprKind::Int(n) if n.sign() == num_bigint::Sign::Minus => PREC_UNARY,
        _ => PREC_ATOM,
    }
}

fn write_operand(out: &mut String, e: &Expr, min: u8) {
    if precedence(e) < min {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_params(out: &mut String, params: &[Param]) {
    out.push('(');
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&p.name);
        if let Some(t) = &p.ty {
            let _ = write!(out, ": {t}");
        }
    }
    out.push(')');
}

fn write_args(out: &mut String, args: &[Expr]) {
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a);
    }
    out.push(')');
}

pub fn write_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Int(n) => {
            let _ = write!(out, "{n}");
        }
        ExprKind::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        ExprKind::Str(s) => out.push_str(&quote(s)),
        ExprKind::Var(v) => out.push_str(v),
        ExprKind::Apply(f, args) => {
            if let ExprKind::Var(op) = &f.kind {
                if let (Some(p), 2) = (binary_precedence(op), args.len()) {
                    // Left-associative levels accept an equal-precedence left
                    // operand; equality and comparisons do not chain.
                    let left_min = if p == 3 || p == PREC_COMPARE { p + 1 } else { p };
                    write_operand(out, &args[0], left_min);
                    let _ = write!(out, " {op} ");
                    write_operand(out, &args[1], p + 1);
                    return;
                }
                if (op == "-" || op == "!") && args.len() == 1 {
                    out.push_str(op);
                    write_operand(out, &args[0], PREC_UNARY);
                    return;
                }
            }
            if is_operator_var(f) {
                // An operator at an arity it has no surface form for.
                out.push('(');
                write_expr(out, f);
                out.push(')');
            } else {
                write_operand(out, f, PREC_POSTFIX);
            }
            write_args(out, args);
        }
        ExprKind::Lambda(params, body) => {
            write_params(out, params);
            out.push_str(" -> ");
            write_expr(out, body);
        }
        ExprKind::If(c, t, el) => {
            out.push_str("if ");
            write_expr(out, c);
            out.push_str(" then ");
            write_expr(out, t);
            out.push_str(" else ");
            write_expr(out, el);
        }
        ExprKind::InLang(s, l) => {
            write_operand(out, s, PREC_COMPARE + 1);
            let _ = write!(out, " in {l}");
        }
        ExprKind::Select(s, path) => {
            write_operand(out, s, PREC_POSTFIX);
            let _ = write!(out, "[{}]", display_selectors(&path.selectors));
        }
    }
}

fn is_operator_var(e: &Expr) -> bool {
    matches!(&e.kind, ExprKind::Var(v) if is_operator(v))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(&mut s, self);
        f.write_str(&s)
    }
}

impl fmt::Display for SimpleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimpleType::Int => f.write_str("Int"),
            SimpleType::Bool => f.write_str("Bool"),
            SimpleType::String => f.write_str("String"),
            SimpleType::Fun(params, ret) => {
                f.write_str("(")?;
                for (i, p) in params.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ") -> {ret}")
            }
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Simple(s) => write!(f, "{s}"),
            Type::Lang(l) => f.write_str(l),
            Type::Refine { var, base, pred } => write!(f, "{{{var}: {base} | {pred}}}"),
        }
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_block(out: &mut String, stmts: &[Stmt], depth: usize) {
    out.push_str("{\n");
    for s in stmts {
        write_stmt(out, s, depth + 1);
    }
    indent(out, depth);
    out.push('}');
}

pub fn write_stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match &s.kind {
        StmtKind::Decl(x, t) => {
            let _ = writeln!(out, "var {x}: {t};");
        }
        StmtKind::Assign(x, e) => {
            let _ = writeln!(out, "{x} = {e};");
        }
        StmtKind::DeclAssign(x, Some(t), e) => {
            let _ = writeln!(out, "var {x}: {t} = {e};");
        }
        StmtKind::DeclAssign(x, None, e) => {
            let _ = writeln!(out, "var {x} = {e};");
        }
        StmtKind::Call { bind, method, args } => {
            let _ = write!(out, "var {bind} = call {method}");
            write_args(out, args);
            out.push_str(";\n");
        }
        StmtKind::Assert(e, info) => {
            let _ = write!(out, "assert {e};");
            if let Some(info) = info {
                let _ = write!(out, "  # {}", info.kind);
            }
            out.push('\n');
        }
        StmtKind::Return(e) => {
            let _ = writeln!(out, "return {e};");
        }
        StmtKind::If(c, t, e) => {
            let _ = write!(out, "if {c} ");
            write_block(out, t, depth);
            if !e.is_empty() {
                out.push_str(" else ");
                write_block(out, e, depth);
            }
            out.push('\n');
        }
        StmtKind::While(c, body) => {
            let _ = write!(out, "while {c} ");
            write_block(out, body, depth);
            out.push('\n');
        }
    }
}

fn write_sig(out: &mut String, name: &str, params: &[(String, Type)], ret: &Type) {
    let _ = write!(out, "{name}(");
    for (i, (x, t)) in params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{x}: {t}");
    }
    let _ = write!(out, "): {ret}");
}

pub fn write_def(out: &mut String, d: &Def) {
    match &d.kind {
        DefKind::Fun(fd) => {
            out.push_str("def ");
            write_sig(out, &fd.name, &fd.params, &fd.ret);
            let _ = writeln!(out, " = {};", fd.body);
        }
        DefKind::Method(m) => {
            if m.instrumented {
                out.push_str("instrumented ");
            }
            out.push_str("method ");
            write_sig(out, &m.name, &m.params, &m.ret);
            out.push('\n');
            for c in &m.contracts {
                match c {
                    Contract::Requires(e) => {
                        let _ = writeln!(out, "  requires {e}");
                    }
                    Contract::Ensures(e) => {
                        let _ = writeln!(out, "  ensures {e}");
                    }
                }
            }
            write_block(out, &m.body, 0);
            out.push('\n');
        }
        DefKind::Lang(l) => {
            let _ = writeln!(out, "lang {} = {{", l.name);
            for line in l.grammar.to_string().lines() {
                let _ = writeln!(out, "  {line}");
            }
            out.push_str("}\n");
        }
    }
}

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for (i, d) in p.defs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        write_def(&mut out, d);
    }
    out
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_stmt(&mut s, self, 0);
        f.write_str(s.trim_end())
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_program(self))
    }
}
