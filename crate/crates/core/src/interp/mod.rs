//! Tree-walking interpreter for methods and expressions.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;

use crate::ast::*;
use crate::front::Unit;
use crate::instrument::entry_checks;
use crate::library::is_builtin;
use crate::parse::parse_tree;
use crate::text::Pos;
use crate::xpath::select_unique_selectors;

pub mod builtins;
mod error;
mod value;

pub use error::{ErrorKind, Location, RuntimeError};
pub use value::{Closure, Value};

pub const DEFAULT_LOOP_BUDGET: u64 = 1_000_000;
pub const DEFAULT_MAX_DEPTH: usize = 200;

const RED_ZONE: usize = 128 * 1024;
const STACK_CHUNK: usize = 4 * 1024 * 1024;

type Result<T> = std::result::Result<T, RuntimeError>;

/// Observer called on every application of a user-defined function.
pub type CallHook<'a> = Box<dyn FnMut(&str, &[Value]) + 'a>;

struct Frame {
    file: Arc<str>,
    method: String,
    instrumented: bool,
    scopes: Vec<Vec<(String, Option<Value>)>>,
    steps: u64,
}

impl Frame {
    fn new(file: Arc<str>, method: &str, instrumented: bool) -> Self {
        Frame {
            file,
            method: method.to_string(),
            instrumented,
            scopes: vec![Vec::new()],
            steps: 0,
        }
    }

    fn loc(&self, pos: Pos) -> Location {
        Location {
            file: self.file.clone(),
            line: pos.line,
            column: pos.col,
        }
    }

    fn bind(&mut self, x: &str, v: Option<Value>) {
        self.scopes.last_mut().expect("open scope").push((x.to_string(), v));
    }

    fn slot(&mut self, x: &str) -> Option<&mut Option<Value>> {
        self.scopes
            .iter_mut()
            .rev()
            .flat_map(|s| s.iter_mut().rev())
            .find(|(n, _)| n == x)
            .map(|(_, v)| v)
    }

    fn get(&self, x: &str) -> Option<&Option<Value>> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| n == x)
            .map(|(_, v)| v)
    }

    fn visible(&self) -> Vec<(String, Value)> {
        let mut out: Vec<(String, Value)> = Vec::new();
        for (n, v) in self.scopes.iter().flatten() {
            if let Some(v) = v {
                out.retain(|(m, _)| m != n);
                out.push((n.clone(), v.clone()));
            }
        }
        out
    }
}

enum Flow {
    Next,
    Return(Value),
}

pub struct Interp<'u> {
    unit: &'u Unit,
    funs: BTreeMap<&'u str, &'u FunDef>,
    methods: BTreeMap<&'u str, (&'u Def, &'u MethodDef)>,
    fun_files: BTreeMap<&'u str, Arc<str>>,
    pub loop_budget: u64,
    pub max_depth: usize,
    depth: usize,
    hook: Option<CallHook<'u>>,
}

impl<'u> Interp<'u> {
    pub fn new(unit: &'u Unit) -> Self {
        let mut funs = BTreeMap::new();
        let mut methods = BTreeMap::new();
        let mut fun_files = BTreeMap::new();
        for d in &unit.program.defs {
            match &d.kind {
                DefKind::Fun(f) => {
                    funs.insert(f.name.as_str(), f);
                    fun_files.insert(f.name.as_str(), d.file.clone());
                }
                DefKind::Method(m) => {
                    methods.insert(m.name.as_str(), (d, m));
                }
                DefKind::Lang(_) => {}
            }
        }
        Interp {
            unit,
            funs,
            methods,
            fun_files,
            loop_budget: DEFAULT_LOOP_BUDGET,
            max_depth: DEFAULT_MAX_DEPTH,
            depth: 0,
            hook: None,
        }
    }

    pub fn on_call(&mut self, hook: impl FnMut(&str, &[Value]) + 'u) {
        self.hook = Some(Box::new(hook));
    }

    /// Evaluate `e` with the given variable bindings.
    pub fn eval_expr(&mut self, env: &[(String, Value)], e: &Expr) -> Result<Value> {
        let mut frame = Frame::new(Arc::from("<expr>"), "<expr>", false);
        for (x, v) in env {
            frame.bind(x, Some(v.clone()));
        }
        self.eval(&mut frame, e)
    }

    /// Run method `name` as an entry point. Instrumented methods first check
    /// their argument types and precondition, as a caller would.
    pub fn run_method(&mut self, name: &str, args: &[Value]) -> Result<Value> {
        let Some(&(def, m)) = self.methods.get(name) else {
            return Err(RuntimeError::new(ErrorKind::Usage, format!("no method `{name}`")));
        };
        if args.len() != m.params.len() {
            return Err(RuntimeError::new(
                ErrorKind::Usage,
                format!("method `{name}` takes {} arguments, {} given", m.params.len(), args.len()),
            ));
        }
        for (i, ((x, t), a)) in m.params.iter().zip(args).enumerate() {
            let want = crate::check::erase(t);
            if a.simple_type().as_ref() != Some(&want) {
                return Err(RuntimeError::new(
                    ErrorKind::Usage,
                    format!("argument {i} (`{x}`) of `{name}` must be {want}, got {a}"),
                ));
            }
        }
        let mut prelude = Vec::new();
        if m.instrumented {
            if let Some(meta) = self.unit.metas.get(name) {
                prelude = entry_checks(meta, def.pos);
            }
        }
        self.depth = 0;
        self.invoke(def, m, args.to_vec(), &prelude)
    }

    fn invoke(&mut self, def: &Def, m: &MethodDef, args: Vec<Value>, prelude: &[Stmt]) -> Result<Value> {
        let mut frame = Frame::new(def.file.clone(), &m.name, m.instrumented);
        let loc = frame.loc(def.pos);
        if self.depth >= self.max_depth {
            return Err(RuntimeError::new(ErrorKind::BudgetExceeded, "call depth limit exceeded").at(loc));
        }
        self.depth += 1;
        for ((x, _), v) in m.params.iter().zip(args) {
            frame.bind(x, Some(v));
        }
        let result = (|| {
            for s in prelude.iter().chain(&m.body) {
                if let Flow::Return(v) = self.exec(&mut frame, s)? {
                    return Ok(v);
                }
            }
            let mut e = RuntimeError::new(
                ErrorKind::MissingReturn,
                format!("method {} ended without returning a value", m.name),
            )
            .at(loc);
            e.method = Some(m.name.clone());
            Err(e)
        })();
        self.depth -= 1;
        result
    }

    fn block(&mut self, frame: &mut Frame, stmts: &[Stmt]) -> Result<Flow> {
        frame.scopes.push(Vec::new());
        let mut flow = Ok(Flow::Next);
        for s in stmts {
            flow = self.exec(frame, s);
            if !matches!(flow, Ok(Flow::Next)) {
                break;
            }
        }
        frame.scopes.pop();
        flow
    }

    fn exec(&mut self, frame: &mut Frame, s: &Stmt) -> Result<Flow> {
        stacker::maybe_grow(RED_ZONE, STACK_CHUNK, || self.exec_inner(frame, s))
    }

    fn exec_inner(&mut self, frame: &mut Frame, s: &Stmt) -> Result<Flow> {
        match &s.kind {
            StmtKind::Decl(x, _) => frame.bind(x, None),
            StmtKind::Assign(x, e) => {
                let v = self.eval(frame, e)?;
                match frame.slot(x) {
                    Some(slot) => *slot = Some(v),
                    None => return Err(internal(frame, s.pos, format!("assignment to undeclared `{x}`"))),
                }
            }
            StmtKind::DeclAssign(x, _, e) => {
                let v = self.eval(frame, e)?;
                frame.bind(x, Some(v));
            }
            StmtKind::Call { bind, method, args } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(frame, a)?);
                }
                let Some(&(def, m)) = self.methods.get(method.as_str()) else {
                    return Err(internal(frame, s.pos, format!("no method `{method}`")));
                };
                match self.invoke(def, m, vals, &[]) {
                    Ok(v) => frame.bind(bind, Some(v)),
                    Err(mut e) => {
                        e.call_stack.push((frame.method.clone(), frame.loc(s.pos)));
                        return Err(e);
                    }
                }
            }
            StmtKind::Assert(e, info) => {
                let ok = self.eval(frame, e)?;
                match ok.as_bool() {
                    Some(true) => {}
                    Some(false) => return Err(self.assert_failed(frame, s.pos, e, info.as_ref())),
                    None => return Err(internal(frame, s.pos, "assertion is not Boolean")),
                }
            }
            StmtKind::Return(e) => return Ok(Flow::Return(self.eval(frame, e)?)),
            StmtKind::If(c, t, el) => {
                return if self.cond(frame, c)? {
                    self.block(frame, t)
                } else {
                    self.block(frame, el)
                };
            }
            StmtKind::While(c, body) => {
                while self.cond(frame, c)? {
                    frame.steps += 1;
                    if frame.steps > self.loop_budget {
                        return Err(RuntimeError::new(
                            ErrorKind::BudgetExceeded,
                            format!("loop iteration budget of {} exceeded", self.loop_budget),
                        )
                        .at(frame.loc(s.pos)));
                    }
                    if let Flow::Return(v) = self.block(frame, body)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
        }
        Ok(Flow::Next)
    }

    fn assert_failed(&mut self, frame: &Frame, pos: Pos, cond: &Expr, info: Option<&AssertInfo>) -> RuntimeError {
        let Some(info) = info else {
            let kind = if frame.instrumented {
                ErrorKind::AssertionFailed
            } else {
                ErrorKind::UserAssert
            };
            let mut e = RuntimeError::new(kind, format!("Assertion failed: {cond}")).at(frame.loc(pos));
            e.method = Some(frame.method.clone());
            e.expected = Some(cond.to_string());
            return e;
        };
        let kind = ErrorKind::from(info.kind);
        let mut e = RuntimeError::new(kind, String::new()).at(frame.loc(pos));
        e.method = Some(info.method.clone());
        e.arg = info.arg;
        e.expected = Some(info.expected.clone());
        e.actual = info.subject.as_ref().and_then(|x| frame.get(x).cloned().flatten());
        match kind {
            ErrorKind::UserAssert => e.message = format!("Assertion failed: {cond}"),
            ErrorKind::Pre | ErrorKind::Post => {
                if let ExprKind::Apply(_, args) = &cond.kind {
                    let vals: Vec<String> = args
                        .iter()
                        .map(|a| match &a.kind {
                            ExprKind::Var(x) => frame.get(x).cloned().flatten().map_or("?".into(), |v| v.to_string()),
                            _ => a.to_string(),
                        })
                        .collect();
                    e.message = format!("arguments:     ({})", vals.join(", "));
                }
            }
            _ => {}
        }
        e
    }

    fn cond(&mut self, frame: &mut Frame, c: &Expr) -> Result<bool> {
        let v = self.eval(frame, c)?;
        v.as_bool().ok_or_else(|| internal(frame, c.pos, "condition is not Boolean"))
    }

    fn eval(&mut self, frame: &mut Frame, e: &Expr) -> Result<Value> {
        stacker::maybe_grow(RED_ZONE, STACK_CHUNK, || self.eval_inner(frame, e))
    }

    fn eval_inner(&mut self, frame: &mut Frame, e: &Expr) -> Result<Value> {
        match &e.kind {
            ExprKind::Int(n) => Ok(Value::Int(n.clone())),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Str(s) => Ok(Value::Str(s.clone())),
            ExprKind::Var(x) => match frame.get(x) {
                Some(Some(v)) => Ok(v.clone()),
                Some(None) => Err(internal(frame, e.pos, format!("`{x}` is read before it is assigned"))),
                None if self.funs.contains_key(x.as_str()) => Ok(Value::Closure(Arc::new(Closure::Fun(x.clone())))),
                None => Err(internal(frame, e.pos, format!("unbound `{x}`"))),
            },
            ExprKind::Lambda(params, body) => Ok(Value::Closure(Arc::new(Closure::Lambda {
                params: params.iter().map(|p| p.name.clone()).collect(),
                body: (**body).clone(),
                env: frame.visible(),
            }))),
            ExprKind::If(c, t, el) => {
                if self.cond(frame, c)? {
                    self.eval(frame, t)
                } else {
                    self.eval(frame, el)
                }
            }
            ExprKind::InLang(s, l) => {
                let v = self.eval(frame, s)?;
                let s = v.as_str().ok_or_else(|| internal(frame, e.pos, "`in` subject is not a string"))?;
                let cfg = self.unit.langs.cfg(l).ok_or_else(|| internal(frame, e.pos, format!("unknown language `{l}`")))?;
                Ok(Value::Bool(crate::parse::recognize(cfg, s)))
            }
            ExprKind::Select(s, path) => {
                let v = self.eval(frame, s)?;
                let text = v.as_str().ok_or_else(|| internal(frame, e.pos, "selection subject is not a string"))?;
                let lang = path.lang.as_deref().ok_or_else(|| internal(frame, e.pos, "selection without a language"))?;
                let cfg = self.unit.langs.cfg(lang).expect("resolved language");
                let select_err = |msg: String| {
                    let mut err = RuntimeError::new(ErrorKind::SelectError, msg).at(frame.loc(e.pos));
                    err.actual = Some(v.clone());
                    err
                };
                let tree = parse_tree(cfg, text).map_err(|n| select_err(n.to_string()))?;
                let out = select_unique_selectors(&tree, &path.selectors).map_err(|s| select_err(s.to_string()))?;
                Ok(Value::Str(out))
            }
            ExprKind::Apply(f, args) => self.apply(frame, e, f, args),
        }
    }

    fn apply(&mut self, frame: &mut Frame, e: &Expr, f: &Expr, args: &[Expr]) -> Result<Value> {
        match &f.kind {
            ExprKind::Var(name) if frame.get(name).is_none() && !self.funs.contains_key(name.as_str()) => {
                if !is_builtin(name) {
                    return Err(internal(frame, f.pos, format!("unbound `{name}`")));
                }
                if (name == "&&" || name == "||") && args.len() == 2 {
                    let a = self.cond(frame, &args[0])?;
                    if a == (name == "||") {
                        return Ok(Value::Bool(a));
                    }
                    return Ok(Value::Bool(self.cond(frame, &args[1])?));
                }
                let vals = self.eval_args(frame, args)?;
                builtin(name, &vals).map_err(|(kind, msg)| RuntimeError::new(kind, msg).at(frame.loc(e.pos)))
            }
            ExprKind::Lambda(params, body) => {
                let vals = self.eval_args(frame, args)?;
                frame.scopes.push(Vec::new());
                for (p, v) in params.iter().zip(vals) {
                    frame.bind(&p.name, Some(v));
                }
                let r = self.eval(frame, body);
                frame.scopes.pop();
                r
            }
            _ => {
                let fv = self.eval(frame, f)?;
                let vals = self.eval_args(frame, args)?;
                match fv {
                    Value::Closure(c) => self.call_closure(&c, vals, frame.loc(e.pos)),
                    other => Err(internal(frame, f.pos, format!("{other} is not a function"))),
                }
            }
        }
    }

    fn eval_args(&mut self, frame: &mut Frame, args: &[Expr]) -> Result<Vec<Value>> {
        args.iter().map(|a| self.eval(frame, a)).collect()
    }

    fn call_closure(&mut self, c: &Closure, vals: Vec<Value>, loc: Location) -> Result<Value> {
        match c {
            Closure::Fun(name) => self.call_fun(name, vals, loc),
            Closure::Lambda { params, body, env } => {
                let mut frame = Frame::new(loc.file.clone(), "<lambda>", false);
                for (x, v) in env {
                    frame.bind(x, Some(v.clone()));
                }
                frame.scopes.push(Vec::new());
                for (p, v) in params.iter().zip(vals) {
                    frame.bind(p, Some(v));
                }
                self.eval(&mut frame, body)
            }
        }
    }

    fn call_fun(&mut self, name: &str, vals: Vec<Value>, loc: Location) -> Result<Value> {
        let f = self.funs[name];
        if self.depth >= self.max_depth {
            return Err(RuntimeError::new(ErrorKind::BudgetExceeded, "call depth limit exceeded").at(loc));
        }
        if let Some(h) = &mut self.hook {
            h(name, &vals);
        }
        let mut frame = Frame::new(self.fun_files[name].clone(), name, false);
        for ((x, _), v) in f.params.iter().zip(vals) {
            frame.bind(x, Some(v));
        }
        self.depth += 1;
        let r = self.eval(&mut frame, &f.body);
        self.depth -= 1;
        r
    }
}

fn internal(frame: &Frame, pos: Pos, msg: impl Into<String>) -> RuntimeError {
    RuntimeError::new(ErrorKind::Internal, msg).at(frame.loc(pos))
}

type BuiltinResult = std::result::Result<Value, (ErrorKind, String)>;

/// Apply a strict builtin to evaluated operands.
pub fn builtin(name: &str, args: &[Value]) -> BuiltinResult {
    use builtins as b;
    use Value::{Bool as B, Int as I, Str as S};
    let ill = || (ErrorKind::Internal, format!("ill-typed operands for `{name}`"));
    let div0 = || (ErrorKind::DivisionByZero, "Division by zero".to_string());
    let v = match (name, args) {
        ("-", [I(a)]) => I(-a),
        ("!", [B(a)]) => B(!a),
        ("+", [I(a), I(c)]) => I(a + c),
        ("-", [I(a), I(c)]) => I(a - c),
        ("*", [I(a), I(c)]) => I(a * c),
        ("/" | "div", [I(a), I(c)]) => I(b::div(a, c).ok_or_else(div0)?),
        ("%" | "mod", [I(a), I(c)]) => I(b::modulo(a, c).ok_or_else(div0)?),
        ("<", [I(a), I(c)]) => B(a < c),
        ("<=", [I(a), I(c)]) => B(a <= c),
        (">", [I(a), I(c)]) => B(a > c),
        (">=", [I(a), I(c)]) => B(a >= c),
        ("==" | "!=", [a, c]) => {
            if matches!(a, Value::Closure(_)) || a.simple_type() != c.simple_type() {
                return Err(ill());
            }
            B((a == c) == (name == "=="))
        }
        ("&&", [B(a), B(c)]) => B(*a && *c),
        ("||", [B(a), B(c)]) => B(*a || *c),
        ("length", [S(s)]) => I(b::length(s)),
        ("concat", [S(s), S(t)]) => S(format!("{s}{t}")),
        ("at", [S(s), I(i)]) => S(b::at(s, i)),
        ("substr", [S(s), I(i), I(n)]) => S(b::substr(s, i, n)),
        ("indexof", [S(s), S(t), I(i)]) => I(b::indexof(s, t, i)),
        ("contains", [S(s), S(t)]) => B(b::contains(s, t)),
        ("prefixof", [S(a), S(c)]) => B(b::prefixof(a, c)),
        ("suffixof", [S(a), S(c)]) => B(b::suffixof(a, c)),
        ("startswith", [S(s), S(p)]) => B(b::prefixof(p, s)),
        ("endswith", [S(s), S(p)]) => B(b::suffixof(p, s)),
        ("replace", [S(s), S(t), S(u)]) => S(b::replace(s, t, u)),
        ("str_to_int", [S(s)]) => I(b::str_to_int(s)),
        ("int_to_str", [I(n)]) => S(b::int_to_str(n)),
        _ => return Err(ill()),
    };
    Ok(v)
}

/// Run `name` in `unit` with default budgets.
pub fn run_method(unit: &Unit, name: &str, args: &[Value]) -> Result<Value> {
    Interp::new(unit).run_method(name, args)
}

/// Evaluate a closed expression against `unit`'s functions and languages.
pub fn eval_closed(unit: &Unit, e: &Expr) -> Result<Value> {
    Interp::new(unit).eval_expr(&[], e)
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(BigInt::from(n))
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

#[cfg(test)]
mod tests;
