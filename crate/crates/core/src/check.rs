//! Simple-type checking of the erased program.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::ast::*;
use crate::front::Unit;
use crate::library::{signature, Signature};
use crate::text::Pos;

/// Language types become `String`, refinements lose their predicate.
pub fn erase(t: &Type) -> SimpleType {
    match t {
        Type::Simple(s) => s.clone(),
        Type::Lang(_) => SimpleType::String,
        Type::Refine { base, .. } => erase(base),
    }
}

/// Ordered, lexically scoped bindings. Lookup finds the most recent one.
#[derive(Debug, Clone, Default)]
pub struct TypingContext {
    bindings: Vec<(String, Type)>,
    marks: Vec<usize>,
}

impl TypingContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_params(params: &[(String, Type)]) -> Self {
        TypingContext {
            bindings: params.to_vec(),
            marks: Vec::new(),
        }
    }

    pub fn bind(&mut self, name: impl Into<String>, t: Type) {
        self.bindings.push((name.into(), t));
    }

    pub fn lookup(&self, name: &str) -> Option<&Type> {
        self.bindings.iter().rev().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn enter(&mut self) {
        self.marks.push(self.bindings.len());
    }

    pub fn exit(&mut self) {
        let m = self.marks.pop().expect("balanced scopes");
        self.bindings.truncate(m);
    }

    /// Bound in the innermost scope.
    pub fn is_local(&self, name: &str) -> bool {
        let from = self.marks.last().copied().unwrap_or(0);
        self.bindings[from..].iter().any(|(n, _)| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Type)> {
        self.bindings.iter().map(|(n, t)| (n.as_str(), t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: &'static str,
    pub file: Arc<str>,
    pub pos: Pos,
    pub msg: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.file, self.pos, self.code, self.msg)
    }
}

fn function_tables(unit: &Unit) -> (BTreeMap<&str, &FunDef>, BTreeMap<String, Type>) {
    let funs: BTreeMap<&str, &FunDef> = unit
        .program
        .defs
        .iter()
        .filter_map(|d| match &d.kind {
            DefKind::Fun(f) => Some((f.name.as_str(), f)),
            _ => None,
        })
        .collect();
    let rets = funs.iter().map(|(n, f)| (n.to_string(), f.ret.clone())).collect();
    (funs, rets)
}

/// Type of `e` under `ctx`: its declared type when it has one, otherwise
/// its simple type. None when `e` is ill-typed.
pub fn expr_type(unit: &Unit, ctx: &TypingContext, e: &Expr) -> Option<Type> {
    let (funs, fun_rets) = function_tables(unit);
    let mut out = Vec::new();
    let mut c = Checker {
        funs: &funs,
        fun_rets: &fun_rets,
        unit,
        file: Arc::from(""),
        ctx: ctx.clone(),
        out: &mut out,
        ret: SimpleType::Int,
    };
    let simple = c.infer(e);
    let declared = c.static_type(e);
    if !out.is_empty() {
        return None;
    }
    declared.or(simple.map(Type::Simple))
}

/// All simple-type errors of a resolved program, in source order.
pub fn simple_typecheck(unit: &Unit) -> Vec<Diagnostic> {
    let (funs, fun_rets) = function_tables(unit);
    let mut out = Vec::new();
    for d in &unit.program.defs {
        let mut c = Checker {
            funs: &funs,
            fun_rets: &fun_rets,
            unit,
            file: d.file.clone(),
            ctx: TypingContext::new(),
            out: &mut out,
            ret: SimpleType::Int,
        };
        match &d.kind {
            DefKind::Lang(_) => {}
            DefKind::Fun(f) => {
                c.signature(&f.params, &f.ret, d.pos);
                c.ctx = TypingContext::from_params(&f.params);
                c.expect(&f.body, &erase(&f.ret), "function body");
            }
            DefKind::Method(m) => {
                c.signature(&m.params, &m.ret, d.pos);
                let mut sig: Vec<SimpleType> = m.params.iter().map(|(_, t)| erase(t)).collect();
                for k in &m.contracts {
                    let (e, what) = match k {
                        Contract::Requires(e) => (e, "requires"),
                        Contract::Ensures(e) => {
                            sig.push(erase(&m.ret));
                            (e, "ensures")
                        }
                    };
                    c.ctx = TypingContext::new();
                    c.expect(e, &SimpleType::Fun(sig.clone(), Box::new(SimpleType::Bool)), what);
                    if matches!(k, Contract::Ensures(_)) {
                        sig.pop();
                    }
                }
                c.ctx = TypingContext::from_params(&m.params);
                c.ret = erase(&m.ret);
                c.block(&m.body);
            }
        }
    }
    out
}

struct Checker<'a> {
    funs: &'a BTreeMap<&'a str, &'a FunDef>,
    fun_rets: &'a BTreeMap<String, Type>,
    unit: &'a Unit,
    file: Arc<str>,
    ctx: TypingContext,
    out: &'a mut Vec<Diagnostic>,
    ret: SimpleType,
}

impl Checker<'_> {
    fn report(&mut self, code: &'static str, pos: Pos, msg: String) {
        self.out.push(Diagnostic {
            code,
            file: self.file.clone(),
            pos,
            msg,
        });
    }

    fn signature(&mut self, params: &[(String, Type)], ret: &Type, pos: Pos) {
        for (_, t) in params.iter().chain(std::iter::once(&(String::new(), ret.clone()))) {
            self.declared_type(t, pos);
        }
    }

    /// Declared types must be first-order and their predicates Boolean.
    fn declared_type(&mut self, t: &Type, pos: Pos) {
        if t.contains_fun() {
            self.report("FunctionType", pos, format!("function type in declared type `{t}`"));
            return;
        }
        if let Type::Refine { var, base, pred } = t {
            self.declared_type(base, pos);
            self.ctx.enter();
            self.ctx.bind(var.clone(), (**base).clone());
            self.expect(pred, &SimpleType::Bool, "refinement predicate");
            self.ctx.exit();
        }
    }

    fn block(&mut self, stmts: &[Stmt]) {
        self.ctx.enter();
        for s in stmts {
            self.stmt(s);
        }
        self.ctx.exit();
    }

    fn declare(&mut self, x: &str, t: Type, pos: Pos) {
        if self.ctx.lookup(x).is_some() {
            self.report("Redeclaration", pos, format!("`{x}` is already declared"));
        }
        self.ctx.bind(x, t);
    }

    fn stmt(&mut self, s: &Stmt) {
        let pos = s.pos;
        match &s.kind {
            StmtKind::Decl(x, t) => {
                self.declared_type(t, pos);
                self.declare(x, t.clone(), pos);
            }
            StmtKind::Assign(x, e) => match self.ctx.lookup(x).cloned() {
                Some(t) => self.expect(e, &erase(&t), &format!("assignment to `{x}`")),
                None => self.report("AssignUndeclared", pos, format!("`{x}` is not a declared variable")),
            },
            StmtKind::DeclAssign(x, Some(t), e) => {
                self.declared_type(t, pos);
                self.expect(e, &erase(t), &format!("initializer of `{x}`"));
                self.declare(x, t.clone(), pos);
            }
            StmtKind::DeclAssign(x, None, e) => {
                let inferred = self.infer(e);
                let t = self.static_type(e).or(inferred.map(Type::Simple));
                match t {
                    Some(t) if t.contains_fun() => {
                        self.report("FunctionType", pos, format!("`{x}` would hold a function"))
                    }
                    Some(t) => self.declare(x, t, pos),
                    None => {}
                }
            }
            StmtKind::Call { bind, method, args } => {
                let Some(meta) = self.unit.metas.get(method) else {
                    self.report("UnresolvedName", pos, format!("no method `{method}`"));
                    return;
                };
                if meta.params.len() != args.len() {
                    self.report(
                        "Arity",
                        pos,
                        format!("method `{method}` takes {} arguments, {} given", meta.params.len(), args.len()),
                    );
                }
                for (i, a) in args.iter().enumerate() {
                    match meta.params.get(i) {
                        Some((_, t)) => self.expect(a, &erase(t), &format!("argument {i} of `{method}`")),
                        None => {
                            self.infer(a);
                        }
                    }
                }
                let ret = meta.ret.clone();
                self.declare(bind, ret, pos);
            }
            StmtKind::Assert(e, _) => self.expect(e, &SimpleType::Bool, "assertion"),
            StmtKind::Return(e) => {
                let ret = self.ret.clone();
                self.expect(e, &ret, "return value");
            }
            StmtKind::If(c, t, e) => {
                self.expect(c, &SimpleType::Bool, "condition");
                self.block(t);
                self.block(e);
            }
            StmtKind::While(c, body) => {
                self.expect(c, &SimpleType::Bool, "condition");
                self.block(body);
            }
        }
    }

    fn static_type(&self, e: &Expr) -> Option<Type> {
        crate::front::static_type(e, &|v| self.ctx.lookup(v).cloned(), self.fun_rets)
    }

    fn expect(&mut self, e: &Expr, want: &SimpleType, what: &str) {
        let got = match (&e.kind, want) {
            (ExprKind::Lambda(params, body), SimpleType::Fun(ps, r)) => {
                if params.len() != ps.len() {
                    self.report(
                        "Arity",
                        e.pos,
                        format!("{what}: lambda takes {} parameters, expected {}", params.len(), ps.len()),
                    );
                    return;
                }
                let tys: Vec<Type> = ps.iter().map(|t| Type::Simple(t.clone())).collect();
                self.lambda(params, &tys, body, Some(r), e.pos);
                return;
            }
            _ => self.infer(e),
        };
        if let Some(got) = got {
            if &got != want {
                self.report("TypeMismatch", e.pos, format!("{what}: expected {want}, found {got}"));
            }
        }
    }

    /// Check a lambda against argument types; returns the body type.
    fn lambda(
        &mut self,
        params: &[Param],
        args: &[Type],
        body: &Expr,
        want: Option<&SimpleType>,
        pos: Pos,
    ) -> Option<SimpleType> {
        self.ctx.enter();
        for (p, a) in params.iter().zip(args) {
            let t = match &p.ty {
                Some(t) => {
                    if erase(t) != erase(a) {
                        self.report(
                            "TypeMismatch",
                            pos,
                            format!("parameter `{}` is declared {t}, applied to {}", p.name, erase(a)),
                        );
                    }
                    t.clone()
                }
                None => a.clone(),
            };
            self.ctx.bind(p.name.clone(), t);
        }
        let r = match want {
            Some(w) => {
                self.expect(body, w, "lambda body");
                Some(w.clone())
            }
            None => self.infer(body),
        };
        self.ctx.exit();
        r
    }

    /// The simple type of `e`, or None after reporting an error.
    fn infer(&mut self, e: &Expr) -> Option<SimpleType> {
        match &e.kind {
            ExprKind::Int(_) => Some(SimpleType::Int),
            ExprKind::Bool(_) => Some(SimpleType::Bool),
            ExprKind::Str(_) => Some(SimpleType::String),
            ExprKind::Var(v) => {
                if let Some(t) = self.ctx.lookup(v) {
                    return Some(erase(t));
                }
                if let Some(f) = self.funs.get(v.as_str()) {
                    let ps = f.params.iter().map(|(_, t)| erase(t)).collect();
                    return Some(SimpleType::Fun(ps, Box::new(erase(&f.ret))));
                }
                self.report("BuiltinNotApplied", e.pos, format!("builtin `{v}` must be applied"));
                None
            }
            ExprKind::Lambda(..) => {
                self.report(
                    "LambdaWithoutContext",
                    e.pos,
                    "a lambda must be applied or used as a contract".into(),
                );
                None
            }
            ExprKind::If(c, t, el) => {
                self.expect(c, &SimpleType::Bool, "condition");
                let a = self.infer(t)?;
                self.expect(el, &a, "else branch");
                Some(a)
            }
            ExprKind::InLang(s, _) => {
                self.expect(s, &SimpleType::String, "subject of `in`");
                Some(SimpleType::Bool)
            }
            ExprKind::Select(s, path) => {
                self.expect(s, &SimpleType::String, "subject of a selection");
                if path.lang.is_none() {
                    self.report(
                        "SubjectNotLanguageTyped",
                        s.pos,
                        format!("`{s}` has no language type to select `{}` under", crate::xpath::display_selectors(&path.selectors)),
                    );
                }
                Some(SimpleType::String)
            }
            ExprKind::Apply(f, args) => self.apply(e, f, args),
        }
    }

    fn apply(&mut self, e: &Expr, f: &Expr, args: &[Expr]) -> Option<SimpleType> {
        if let ExprKind::Var(name) = &f.kind {
            if self.ctx.lookup(name).is_none() && !self.funs.contains_key(name.as_str()) {
                return self.builtin(e, name, args);
            }
        }
        if let ExprKind::Lambda(params, body) = &f.kind {
            if params.len() != args.len() {
                self.report(
                    "Arity",
                    e.pos,
                    format!("lambda takes {} arguments, {} given", params.len(), args.len()),
                );
                args.iter().for_each(|a| {
                    self.infer(a);
                });
                return None;
            }
            let mut tys = Vec::new();
            for a in args {
                let t = self.infer(a)?;
                tys.push(self.static_type(a).unwrap_or(Type::Simple(t)));
            }
            return self.lambda(params, &tys, body, None, f.pos);
        }
        let ft = self.infer(f)?;
        let SimpleType::Fun(ps, r) = ft else {
            self.report("NotAFunction", f.pos, format!("`{f}` of type {ft} is applied"));
            return None;
        };
        if ps.len() != args.len() {
            self.report(
                "Arity",
                e.pos,
                format!("`{f}` takes {} arguments, {} given", ps.len(), args.len()),
            );
        }
        for (i, (a, p)) in args.iter().zip(&ps).enumerate() {
            self.expect(a, p, &format!("argument {i} of `{f}`"));
        }
        Some(*r)
    }

    fn builtin(&mut self, e: &Expr, name: &str, args: &[Expr]) -> Option<SimpleType> {
        let sig = signature(name, args.len()).filter(|s| match s {
            Signature::Fixed(ps, _) => ps.len() == args.len(),
            Signature::Equality => args.len() == 2,
        });
        match sig {
            None => {
                self.report(
                    "Arity",
                    e.pos,
                    format!("builtin `{name}` does not take {} arguments", args.len()),
                );
                args.iter().for_each(|a| {
                    self.infer(a);
                });
                None
            }
            Some(Signature::Fixed(ps, r)) => {
                for (i, (a, p)) in args.iter().zip(&ps).enumerate() {
                    self.expect(a, p, &format!("operand {i} of `{name}`"));
                }
                Some(r)
            }
            Some(Signature::Equality) => {
                let a = self.infer(&args[0]);
                if let Some(a) = a {
                    if matches!(a, SimpleType::Fun(..)) {
                        self.report("TypeMismatch", e.pos, format!("functions cannot be compared with `{name}`"));
                    } else {
                        self.expect(&args[1], &a, &format!("right operand of `{name}`"));
                    }
                } else {
                    self.infer(&args[1]);
                }
                Some(SimpleType::Bool)
            }
        }
    }
}
