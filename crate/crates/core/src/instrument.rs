//! Rewrite method bodies so that every type and contract obligation becomes
//! an explicit `assert`.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::*;
use crate::check::{expr_type, TypingContext};
use crate::front::{MethodMeta, Unit};
use crate::text::Pos;
use crate::types::{all_names, check_predicate};

/// Fresh local names per method. Candidates are `__z1`, `__z2`, ... and are
/// skipped when they occur anywhere in the program.
#[derive(Debug, Clone)]
pub struct FreshNamer {
    taken: BTreeSet<String>,
    counters: BTreeMap<&'static str, usize>,
}

impl FreshNamer {
    pub fn new(taken: BTreeSet<String>) -> Self {
        FreshNamer {
            taken,
            counters: BTreeMap::new(),
        }
    }

    pub fn fresh(&mut self, prefix: &'static str) -> String {
        let n = self.counters.entry(prefix).or_insert(0);
        loop {
            *n += 1;
            let name = format!("{prefix}{n}");
            if self.taken.insert(name.clone()) {
                return name;
            }
        }
    }
}

fn type_names(t: &Type, out: &mut BTreeSet<String>) {
    if let Type::Refine { var, base, pred } = t {
        out.insert(var.clone());
        type_names(base, out);
        all_names(pred, out);
    }
}

fn stmt_names(s: &Stmt, out: &mut BTreeSet<String>) {
    match &s.kind {
        StmtKind::Decl(x, t) => {
            out.insert(x.clone());
            type_names(t, out);
        }
        StmtKind::Assign(x, e) => {
            out.insert(x.clone());
            all_names(e, out);
        }
        StmtKind::DeclAssign(x, t, e) => {
            out.insert(x.clone());
            if let Some(t) = t {
                type_names(t, out);
            }
            all_names(e, out);
        }
        StmtKind::Call { bind, method, args } => {
            out.insert(bind.clone());
            out.insert(method.clone());
            args.iter().for_each(|a| all_names(a, out));
        }
        StmtKind::Assert(e, _) | StmtKind::Return(e) => all_names(e, out),
        StmtKind::If(c, t, e) => {
            all_names(c, out);
            t.iter().chain(e).for_each(|s| stmt_names(s, out));
        }
        StmtKind::While(c, b) => {
            all_names(c, out);
            b.iter().for_each(|s| stmt_names(s, out));
        }
    }
}

/// Every identifier of the program, for fresh-name avoidance.
fn program_names(p: &Program) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for d in &p.defs {
        out.insert(d.name().to_string());
        match &d.kind {
            DefKind::Lang(_) => {}
            DefKind::Fun(f) => {
                for (x, t) in &f.params {
                    out.insert(x.clone());
                    type_names(t, &mut out);
                }
                type_names(&f.ret, &mut out);
                all_names(&f.body, &mut out);
            }
            DefKind::Method(m) => {
                for (x, t) in &m.params {
                    out.insert(x.clone());
                    type_names(t, &mut out);
                }
                type_names(&m.ret, &mut out);
                for c in &m.contracts {
                    match c {
                        Contract::Requires(e) | Contract::Ensures(e) => all_names(e, &mut out),
                    }
                }
                m.body.iter().for_each(|s| stmt_names(s, &mut out));
            }
        }
    }
    out
}

/// `assert p(subject)` for the membership predicate of `t`, or None when
/// that predicate is trivially true.
fn type_assert(t: &Type, subject: &str, info: AssertInfo, pos: Pos) -> Option<Stmt> {
    let p = check_predicate(t);
    if p.is_trivially_true() {
        return None;
    }
    let cond = p.instantiate(&Expr::var(subject).at(pos));
    Some(Stmt::new(StmtKind::Assert(cond, Some(info)), pos))
}

fn info(kind: CheckKind, expected: String, subject: Option<&str>, method: &str, arg: Option<usize>) -> AssertInfo {
    AssertInfo {
        kind,
        expected,
        subject: subject.map(str::to_string),
        method: method.to_string(),
        arg,
    }
}

fn vars(names: impl IntoIterator<Item = impl Into<String>>, pos: Pos) -> Vec<Expr> {
    names.into_iter().map(|n| Expr::var(n).at(pos)).collect()
}

struct Instrumenter<'a> {
    unit: &'a Unit,
    meta: &'a MethodMeta,
    namer: FreshNamer,
}

impl Instrumenter<'_> {
    fn block(&mut self, ctx: &mut TypingContext, stmts: &[Stmt]) -> Vec<Stmt> {
        ctx.enter();
        let mut out = Vec::new();
        for s in stmts {
            if self.stmt(ctx, s, &mut out) {
                break;
            }
        }
        ctx.exit();
        out
    }

    fn assign(&mut self, ctx: &TypingContext, x: &str, e: &Expr, pos: Pos, out: &mut Vec<Stmt>) {
        out.push(Stmt::new(StmtKind::Assign(x.to_string(), e.clone()), pos));
        let t = ctx.lookup(x).expect("assignment target is declared");
        let i = info(CheckKind::LocalType, t.to_string(), Some(x), &self.meta.name, None);
        out.extend(type_assert(t, x, i, pos));
    }

    /// Instrument one statement; true when it was a `return`.
    fn stmt(&mut self, ctx: &mut TypingContext, s: &Stmt, out: &mut Vec<Stmt>) -> bool {
        let pos = s.pos;
        match &s.kind {
            StmtKind::Decl(x, t) => {
                out.push(s.clone());
                ctx.bind(x.clone(), t.clone());
            }
            StmtKind::Assign(x, e) => self.assign(ctx, x, e, pos, out),
            StmtKind::DeclAssign(x, Some(t), e) => {
                out.push(Stmt::new(StmtKind::Decl(x.clone(), t.clone()), pos));
                ctx.bind(x.clone(), t.clone());
                self.assign(ctx, x, e, pos, out);
            }
            StmtKind::DeclAssign(x, None, e) => {
                let t = expr_type(self.unit, ctx, e).expect("typechecked initializer");
                out.push(s.clone());
                ctx.bind(x.clone(), t);
            }
            StmtKind::Call { bind, method, args } => {
                let callee = &self.unit.metas[method];
                let mut zs = Vec::new();
                for (i, (a, (_, t))) in args.iter().zip(&callee.params).enumerate() {
                    let z = self.namer.fresh("__z");
                    out.push(Stmt::new(StmtKind::DeclAssign(z.clone(), None, a.clone()), a.pos));
                    let zt = expr_type(self.unit, ctx, a).unwrap_or_else(|| t.clone());
                    ctx.bind(z.clone(), zt);
                    let i = info(CheckKind::ArgType, t.to_string(), Some(&z), method, Some(i));
                    out.extend(type_assert(t, &z, i, a.pos));
                    zs.push(z);
                }
                if callee.has_pre() {
                    let cond = Expr::apply(callee.pre.clone(), vars(zs.iter().cloned(), pos)).at(pos);
                    let i = info(CheckKind::Pre, callee.pre.to_string(), None, method, None);
                    out.push(Stmt::new(StmtKind::Assert(cond, Some(i)), pos));
                }
                out.push(Stmt::new(
                    StmtKind::Call {
                        bind: bind.clone(),
                        method: method.clone(),
                        args: vars(zs, pos),
                    },
                    pos,
                ));
                ctx.bind(bind.clone(), callee.ret.clone());
            }
            StmtKind::Assert(e, None) => {
                let i = info(CheckKind::UserAssert, e.to_string(), None, &self.meta.name, None);
                out.push(Stmt::new(StmtKind::Assert(e.clone(), Some(i)), pos));
            }
            StmtKind::Assert(..) => out.push(s.clone()),
            StmtKind::Return(e) => {
                let m = self.meta;
                let z = self.namer.fresh("__r");
                out.push(Stmt::new(StmtKind::DeclAssign(z.clone(), None, e.clone()), pos));
                let i = info(CheckKind::ReturnType, m.ret.to_string(), Some(&z), &m.name, None);
                out.extend(type_assert(&m.ret, &z, i, pos));
                if m.has_post() {
                    let mut args = vars(m.params.iter().map(|(x, _)| x.clone()), pos);
                    args.push(Expr::var(z.clone()).at(pos));
                    let cond = Expr::apply(m.post.clone(), args).at(pos);
                    let i = info(CheckKind::Post, m.post.to_string(), Some(&z), &m.name, None);
                    out.push(Stmt::new(StmtKind::Assert(cond, Some(i)), pos));
                }
                out.push(Stmt::new(StmtKind::Return(Expr::var(z).at(pos)), pos));
                return true;
            }
            StmtKind::If(c, t, e) => {
                let t = self.block(ctx, t);
                let e = self.block(ctx, e);
                out.push(Stmt::new(StmtKind::If(c.clone(), t, e), pos));
            }
            StmtKind::While(c, body) => {
                let body = self.block(ctx, body);
                out.push(Stmt::new(StmtKind::While(c.clone(), body), pos));
            }
        }
        false
    }
}

/// Instrument the body of `meta`'s method under the initial context `ctx`.
pub fn instrument_body(unit: &Unit, ctx: &TypingContext, meta: &MethodMeta, body: &[Stmt]) -> Vec<Stmt> {
    let mut ins = Instrumenter {
        unit,
        meta,
        namer: FreshNamer::new(program_names(&unit.program)),
    };
    let mut ctx = ctx.clone();
    ins.block(&mut ctx, body)
}

/// Contract-free program whose method bodies carry all checks. Methods
/// already marked `instrumented` are left alone.
pub fn instrument_program(unit: &Unit) -> Unit {
    let names = program_names(&unit.program);
    let mut out = unit.clone();
    for d in &mut out.program.defs {
        let DefKind::Method(m) = &mut d.kind else { continue };
        if m.instrumented {
            continue;
        }
        let meta = &unit.metas[&m.name];
        let mut ins = Instrumenter {
            unit,
            meta,
            namer: FreshNamer::new(names.clone()),
        };
        let mut ctx = TypingContext::from_params(&m.params);
        m.body = ins.block(&mut ctx, &m.body);
        m.contracts.clear();
        m.instrumented = true;
    }
    out
}

/// Checks a method's entry performs when it has no instrumented caller:
/// parameter types, then the precondition.
pub fn entry_checks(meta: &MethodMeta, pos: Pos) -> Vec<Stmt> {
    let mut out = Vec::new();
    for (i, (x, t)) in meta.params.iter().enumerate() {
        let inf = info(CheckKind::ArgType, t.to_string(), Some(x), &meta.name, Some(i));
        out.extend(type_assert(t, x, inf, pos));
    }
    if meta.has_pre() {
        let cond = Expr::apply(meta.pre.clone(), vars(meta.params.iter().map(|(x, _)| x.clone()), pos)).at(pos);
        let inf = info(CheckKind::Pre, meta.pre.to_string(), None, &meta.name, None);
        out.push(Stmt::new(StmtKind::Assert(cond, Some(inf)), pos));
    }
    out
}
