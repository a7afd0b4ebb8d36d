use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::parser::parse_program;
use super::{FrontError, FrontErrorKind};
use crate::ast::*;
use crate::grammar::{Clause, Grammar};
use crate::lang::LangRegistry;
use crate::library::is_builtin;
use crate::text::Pos;
use crate::types::{all_names, fresh_name, subst};
use crate::xpath::validate_labels;

/// Preferred name of the return-value binder in post-conditions.
pub const RET_BINDER: &str = "ret";

/// Precomputed signature and contract of a method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodMeta {
    pub name: String,
    pub params: Vec<(String, Type)>,
    pub ret: Type,
    /// `(x1: t1, ..., xk: tk) -> e`, the conjunction of all `requires`.
    pub pre: Expr,
    /// `(x1: t1, ..., xk: tk, ret: t) -> e`, the conjunction of all `ensures`.
    pub post: Expr,
}

impl MethodMeta {
    fn body(lambda: &Expr) -> &Expr {
        match &lambda.kind {
            ExprKind::Lambda(_, body) => body,
            _ => lambda,
        }
    }

    pub fn pre_body(&self) -> &Expr {
        Self::body(&self.pre)
    }

    pub fn post_body(&self) -> &Expr {
        Self::body(&self.post)
    }

    pub fn has_pre(&self) -> bool {
        !crate::types::is_trivially_true(self.pre_body())
    }

    pub fn has_post(&self) -> bool {
        !crate::types::is_trivially_true(self.post_body())
    }

    /// Name bound to the return value in `post`.
    pub fn ret_binder(&self) -> &str {
        match &self.post.kind {
            ExprKind::Lambda(ps, _) => &ps.last().expect("post binds the return value").name,
            _ => RET_BINDER,
        }
    }
}

/// A resolved program with its language registry and method metadata.
#[derive(Debug, Clone)]
pub struct Unit {
    pub program: Program,
    pub langs: LangRegistry,
    pub metas: BTreeMap<String, MethodMeta>,
    /// Non-fatal findings such as unreachable grammar rules.
    pub warnings: Vec<String>,
}

/// Parse and resolve one file against the built-in languages.
pub fn load(file: &str, src: &str) -> Result<Unit, FrontError> {
    resolve(parse_program(file, src)?)
}

/// Parse several files and resolve them as one program.
pub fn load_files(files: &[(String, String)]) -> Result<Unit, FrontError> {
    let mut program = Program::default();
    let mut seen: BTreeMap<String, ()> = BTreeMap::new();
    for (name, src) in files {
        let p = parse_program(name, src)?;
        for d in p.defs {
            if seen.insert(d.name().to_string(), ()).is_some() {
                return Err(FrontError {
                    file: d.file.clone(),
                    pos: d.pos,
                    kind: FrontErrorKind::DuplicateDefinition(d.name().to_string()),
                });
            }
            program.defs.push(d);
        }
    }
    resolve(program)
}

pub fn resolve(program: Program) -> Result<Unit, FrontError> {
    resolve_with(program, LangRegistry::builtin())
}

pub fn resolve_with(mut program: Program, mut langs: LangRegistry) -> Result<Unit, FrontError> {
    let mut warnings = Vec::new();
    register_langs(&program, &mut langs, &mut warnings)?;

    let mut funs = BTreeMap::new();
    let mut methods = BTreeMap::new();
    for d in &program.defs {
        match &d.kind {
            DefKind::Fun(f) => {
                funs.insert(f.name.clone(), f.ret.clone());
            }
            DefKind::Method(m) => {
                methods.insert(m.name.clone(), m.ret.clone());
            }
            DefKind::Lang(_) => {}
        }
    }
    let globals = Globals {
        langs: &langs,
        funs: &funs,
        methods: &methods,
    };

    let mut metas = BTreeMap::new();
    for d in &mut program.defs {
        let mut r = Resolver {
            g: &globals,
            file: d.file.clone(),
            scopes: Vec::new(),
        };
        match &mut d.kind {
            DefKind::Lang(_) => {}
            DefKind::Fun(f) => {
                r.signature(&f.params, &f.ret, d.pos)?;
                r.scopes.push(f.params.iter().map(|(x, t)| (x.clone(), Some(t.clone()))).collect());
                r.expr(&mut f.body)?;
            }
            DefKind::Method(m) => {
                r.signature(&m.params, &m.ret, d.pos)?;
                let mut contracts = std::mem::take(&mut m.contracts);
                for c in &mut contracts {
                    r.contract(m, c)?;
                }
                m.contracts = contracts;
                r.scopes.push(m.params.iter().map(|(x, t)| (x.clone(), Some(t.clone()))).collect());
                let mut body = std::mem::take(&mut m.body);
                r.block(&mut body)?;
                m.body = body;
                metas.insert(m.name.clone(), method_meta(m));
            }
        }
    }
    Ok(Unit {
        program,
        langs,
        metas,
        warnings,
    })
}

fn clause_refs(c: &Clause, out: &mut BTreeSet<String>) {
    match c {
        Clause::Nonterminal(n) => {
            out.insert(n.clone());
        }
        Clause::Concat(cs) | Clause::Alt(cs) => cs.iter().for_each(|c| clause_refs(c, out)),
        Clause::Star(b) | Clause::Plus(b) | Clause::Opt(b) | Clause::RepeatExact(b, _) | Clause::RepeatRange(b, _, _) => {
            clause_refs(b, out)
        }
        Clause::Terminal(_) | Clause::CharSet(_) => {}
    }
}

fn external_refs(g: &Grammar) -> BTreeSet<String> {
    let mut refs = BTreeSet::new();
    for c in g.rules.values() {
        clause_refs(c, &mut refs);
    }
    refs.retain(|r| !g.rules.contains_key(r));
    refs
}

/// Register `lang` definitions, each after the languages it imports.
fn register_langs(program: &Program, langs: &mut LangRegistry, warnings: &mut Vec<String>) -> Result<(), FrontError> {
    let mut pending: Vec<&Def> = program
        .defs
        .iter()
        .filter(|d| matches!(d.kind, DefKind::Lang(_)))
        .collect();
    for d in &pending {
        if langs.contains(d.name()) {
            return Err(FrontError {
                file: d.file.clone(),
                pos: d.pos,
                kind: FrontErrorKind::DuplicateDefinition(d.name().to_string()),
            });
        }
    }
    while !pending.is_empty() {
        let pending_names: BTreeSet<&str> = pending.iter().map(|d| d.name()).collect();
        let ready = pending
            .iter()
            .position(|d| {
                let DefKind::Lang(l) = &d.kind else { unreachable!() };
                external_refs(&l.grammar)
                    .iter()
                    .all(|r| !pending_names.contains(r.as_str()) || r == &l.name)
            })
            .unwrap_or(0);
        let d = pending.remove(ready);
        let DefKind::Lang(l) = &d.kind else { unreachable!() };
        langs.insert(l.grammar.clone()).map_err(|e| FrontError {
            file: d.file.clone(),
            pos: d.pos,
            kind: match e {
                crate::lang::LangError::Grammar { source, .. } => FrontErrorKind::Grammar(source),
                other => FrontErrorKind::Lang(other),
            },
        })?;
        for rule in l.grammar.unreachable_rules() {
            warnings.push(format!(
                "{}:{}: rule `{rule}` of `{}` is unreachable from `start`",
                d.file, d.pos, l.name
            ));
        }
    }
    Ok(())
}

struct Globals<'a> {
    langs: &'a LangRegistry,
    funs: &'a BTreeMap<String, Type>,
    methods: &'a BTreeMap<String, Type>,
}

struct Resolver<'a> {
    g: &'a Globals<'a>,
    file: Arc<str>,
    /// Visible names with their declared type when known.
    scopes: Vec<Vec<(String, Option<Type>)>>,
}

type RResult = Result<(), FrontError>;

impl Resolver<'_> {
    fn err(&self, pos: Pos, kind: FrontErrorKind) -> FrontError {
        FrontError {
            file: self.file.clone(),
            pos,
            kind,
        }
    }

    fn lookup(&self, name: &str) -> Option<&Option<Type>> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    fn bind(&mut self, name: &str, ty: Option<Type>) {
        self.scopes
            .last_mut()
            .expect("a scope is open")
            .push((name.to_string(), ty));
    }

    /// Signature types may mention only their own binders and globals.
    fn signature(&mut self, params: &[(String, Type)], ret: &Type, pos: Pos) -> RResult {
        let saved = std::mem::take(&mut self.scopes);
        let result = params
            .iter()
            .map(|(_, t)| t)
            .chain(std::iter::once(ret))
            .try_for_each(|t| self.ty(&mut t.clone(), pos));
        self.scopes = saved;
        result
    }

    fn ty(&mut self, t: &mut Type, pos: Pos) -> RResult {
        match t {
            Type::Simple(_) => Ok(()),
            Type::Lang(l) => {
                if self.g.langs.contains(l) {
                    Ok(())
                } else {
                    Err(self.err(pos, FrontErrorKind::UnresolvedName(l.clone())))
                }
            }
            Type::Refine { var, base, pred } => {
                self.ty(base, pos)?;
                self.scopes.push(vec![(var.clone(), Some((**base).clone()))]);
                let r = self.expr(pred);
                self.scopes.pop();
                r
            }
        }
    }

    fn contract(&mut self, m: &MethodDef, c: &mut Contract) -> RResult {
        let (e, extra) = match c {
            Contract::Requires(e) => (e, None),
            Contract::Ensures(e) => (e, Some(m.ret.clone())),
        };
        let expected = m.params.len() + usize::from(extra.is_some());
        let saved = std::mem::take(&mut self.scopes);
        let result = match &mut e.kind {
            ExprKind::Lambda(params, _) => {
                if params.len() != expected {
                    Err(self.err(
                        e.pos,
                        FrontErrorKind::ContractArity {
                            method: m.name.clone(),
                            expected,
                            found: params.len(),
                        },
                    ))
                } else {
                    let sig = m.params.iter().map(|(_, t)| t.clone()).chain(extra);
                    for (p, t) in params.iter_mut().zip(sig) {
                        if p.ty.is_none() {
                            p.ty = Some(t);
                        }
                    }
                    self.expr(e)
                }
            }
            _ => self.expr(e),
        };
        self.scopes = saved;
        result
    }

    fn block(&mut self, stmts: &mut [Stmt]) -> RResult {
        self.scopes.push(Vec::new());
        let r = stmts.iter_mut().try_for_each(|s| self.stmt(s));
        self.scopes.pop();
        r
    }

    fn stmt(&mut self, s: &mut Stmt) -> RResult {
        let pos = s.pos;
        match &mut s.kind {
            StmtKind::Decl(x, t) => {
                self.ty(t, pos)?;
                let t = t.clone();
                self.bind(x, Some(t));
            }
            StmtKind::Assign(x, e) => {
                if self.lookup(x).is_none() {
                    return Err(self.err(pos, FrontErrorKind::UnresolvedName(x.clone())));
                }
                self.expr(e)?;
            }
            StmtKind::DeclAssign(x, t, e) => {
                if let Some(t) = t {
                    self.ty(t, pos)?;
                }
                self.expr(e)?;
                let ty = t.clone().or_else(|| self.static_type(e));
                self.bind(x, ty);
            }
            StmtKind::Call { bind, method, args } => {
                let Some(ret) = self.g.methods.get(method.as_str()) else {
                    return Err(self.err(pos, FrontErrorKind::UnresolvedName(method.clone())));
                };
                for a in args.iter_mut() {
                    self.expr(a)?;
                }
                self.bind(bind, Some(ret.clone()));
            }
            StmtKind::Assert(e, _) | StmtKind::Return(e) => self.expr(e)?,
            StmtKind::If(c, t, e) => {
                self.expr(c)?;
                self.block(t)?;
                self.block(e)?;
            }
            StmtKind::While(c, body) => {
                self.expr(c)?;
                self.block(body)?;
            }
        }
        Ok(())
    }

    fn expr(&mut self, e: &mut Expr) -> RResult {
        let pos = e.pos;
        match &mut e.kind {
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) => Ok(()),
            ExprKind::Var(v) => {
                if self.lookup(v).is_some() || self.g.funs.contains_key(v.as_str()) || is_builtin(v) {
                    Ok(())
                } else {
                    Err(self.err(pos, FrontErrorKind::UnresolvedName(v.clone())))
                }
            }
            ExprKind::Apply(f, args) => {
                self.expr(f)?;
                args.iter_mut().try_for_each(|a| self.expr(a))
            }
            ExprKind::Lambda(params, body) => {
                let mut scope = Vec::new();
                for p in params.iter_mut() {
                    if let Some(t) = &mut p.ty {
                        self.ty(t, pos)?;
                    }
                    scope.push((p.name.clone(), p.ty.clone()));
                }
                self.scopes.push(scope);
                let r = self.expr(body);
                self.scopes.pop();
                r
            }
            ExprKind::If(c, t, el) => {
                self.expr(c)?;
                self.expr(t)?;
                self.expr(el)
            }
            ExprKind::InLang(s, l) => {
                self.expr(s)?;
                if self.g.langs.contains(l) {
                    Ok(())
                } else {
                    Err(self.err(pos, FrontErrorKind::UnresolvedName(l.clone())))
                }
            }
            ExprKind::Select(s, path) => {
                self.expr(s)?;
                let lang = self.static_type(s).as_ref().and_then(|t| t.lang().map(str::to_string));
                if let Some(lang) = &lang {
                    let cfg = self.g.langs.cfg(lang).expect("registered language");
                    validate_labels(cfg, &path.selectors).map_err(|e| match e {
                        crate::xpath::XPathError::UnknownLabel { lang, label } => {
                            self.err(pos, FrontErrorKind::UnknownLabel { lang, label })
                        }
                        other => self.err(pos, FrontErrorKind::Syntax(other.to_string())),
                    })?;
                }
                // Without a language the checker reports the subject.
                path.lang = lang;
                Ok(())
            }
        }
    }

    fn static_type(&self, e: &Expr) -> Option<Type> {
        static_type(e, &|v| self.lookup(v).cloned().flatten(), self.g.funs)
    }
}

/// Declared or inferred type of `e`, when it has one without inference
/// through lambdas. `funs` maps function names to their return types.
pub fn static_type(
    e: &Expr,
    lookup: &dyn Fn(&str) -> Option<Type>,
    funs: &BTreeMap<String, Type>,
) -> Option<Type> {
    match &e.kind {
        ExprKind::Int(_) => Some(Type::int()),
        ExprKind::Bool(_) | ExprKind::InLang(..) => Some(Type::bool()),
        ExprKind::Str(_) | ExprKind::Select(..) => Some(Type::string()),
        ExprKind::Var(v) => lookup(v),
        ExprKind::Apply(f, args) => match &f.kind {
            ExprKind::Var(v) if lookup(v).is_none() => {
                if let Some(t) = funs.get(v) {
                    return Some(t.clone());
                }
                match crate::library::signature(v, args.len())? {
                    crate::library::Signature::Fixed(_, ret) => Some(Type::Simple(ret)),
                    crate::library::Signature::Equality => Some(Type::bool()),
                }
            }
            _ => None,
        },
        ExprKind::If(_, t, el) => {
            let a = static_type(t, lookup, funs)?;
            let b = static_type(el, lookup, funs)?;
            (a == b).then_some(a)
        }
        ExprKind::Lambda(..) => None,
    }
}

/// The language of `e` when its static type is a language type (or a
/// refinement of one), given the declared types of variables in scope.
pub fn static_lang(e: &Expr, lookup: &dyn Fn(&str) -> Option<Type>) -> Option<String> {
    static_type(e, lookup, &BTreeMap::new()).and_then(|t| t.lang().map(str::to_string))
}

/// Rename lambda parameters `from` to `to` simultaneously in `body`.
fn rename_all(body: &Expr, from: &[String], to: &[String]) -> Expr {
    let mut taken = BTreeSet::new();
    all_names(body, &mut taken);
    taken.extend(to.iter().cloned());
    let mut tmp_names = Vec::new();
    let mut out = body.clone();
    for f in from {
        let t = fresh_name("__tmp", |n| taken.contains(n) || tmp_names.iter().any(|x: &String| x == n));
        out = subst(&out, f, &Expr::var(t.clone()));
        tmp_names.push(t);
    }
    for (t, target) in tmp_names.iter().zip(to) {
        out = subst(&out, t, &Expr::var(target.clone()));
    }
    out
}

/// One clause applied to the canonical binders.
fn instantiate(clause: &Expr, binders: &[String]) -> Expr {
    match &clause.kind {
        ExprKind::Lambda(params, body) if params.len() == binders.len() => {
            let from: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
            rename_all(body, &from, binders)
        }
        _ => Expr::apply(clause.clone(), binders.iter().map(|b| Expr::var(b.clone())).collect()),
    }
}

fn method_meta(m: &MethodDef) -> MethodMeta {
    let param_names: Vec<String> = m.params.iter().map(|(x, _)| x.clone()).collect();
    let ret_name = fresh_name(RET_BINDER, |n| param_names.iter().any(|p| p == n));
    let mut post_names = param_names.clone();
    post_names.push(ret_name.clone());

    let mut pre = Expr::bool(true);
    let mut post = Expr::bool(true);
    for c in &m.contracts {
        match c {
            Contract::Requires(e) => pre = Expr::and(pre, instantiate(e, &param_names)),
            Contract::Ensures(e) => post = Expr::and(post, instantiate(e, &post_names)),
        }
    }
    let params: Vec<Param> = m
        .params
        .iter()
        .map(|(x, t)| Param::typed(x.clone(), t.clone()))
        .collect();
    let mut post_params = params.clone();
    post_params.push(Param::typed(ret_name, m.ret.clone()));
    MethodMeta {
        name: m.name.clone(),
        params: m.params.clone(),
        ret: m.ret.clone(),
        pre: Expr::lambda(params, pre),
        post: Expr::lambda(post_params, post),
    }
}
