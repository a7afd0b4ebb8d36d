//! Abstract syntax of FLAT programs.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;

use crate::grammar::Grammar;
use crate::text::Pos;
use crate::xpath::Selector;

/// Binder name for a refinement whose variable is unused.
pub const WILDCARD: &str = "_";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SimpleType {
    Int,
    Bool,
    String,
    Fun(Vec<SimpleType>, Box<SimpleType>),
}

#[derive(Debug, Clone)]
pub enum Type {
    Simple(SimpleType),
    Lang(String),
    Refine {
        var: String,
        base: Box<Type>,
        pred: Box<Expr>,
    },
}

impl Type {
    pub fn int() -> Type {
        Type::Simple(SimpleType::Int)
    }

    pub fn bool() -> Type {
        Type::Simple(SimpleType::Bool)
    }

    pub fn string() -> Type {
        Type::Simple(SimpleType::String)
    }

    pub fn refine(var: impl Into<String>, base: Type, pred: Expr) -> Type {
        Type::Refine {
            var: var.into(),
            base: Box::new(base),
            pred: Box::new(pred),
        }
    }

    /// The language a value of this type must belong to, if any.
    pub fn lang(&self) -> Option<&str> {
        match self {
            Type::Lang(l) => Some(l),
            Type::Refine { base, .. } => base.lang(),
            Type::Simple(_) => None,
        }
    }

    pub fn contains_fun(&self) -> bool {
        match self {
            Type::Simple(SimpleType::Fun(..)) => true,
            Type::Simple(_) | Type::Lang(_) => false,
            Type::Refine { base, .. } => base.contains_fun(),
        }
    }
}

/// Structural equality with bound variables compared up to renaming.
impl PartialEq for Type {
    fn eq(&self, other: &Type) -> bool {
        match (self, other) {
            (Type::Simple(a), Type::Simple(b)) => a == b,
            (Type::Lang(a), Type::Lang(b)) => a == b,
            (
                Type::Refine { var: v1, base: b1, pred: p1 },
                Type::Refine { var: v2, base: b2, pred: p2 },
            ) => {
                if b1 != b2 {
                    return false;
                }
                if v1 == v2 {
                    return p1 == p2;
                }
                let fresh = crate::types::fresh_name("__alpha", |n| {
                    crate::types::free_vars(p1).contains(n) || crate::types::free_vars(p2).contains(n)
                });
                let fresh_var = Expr::var(fresh);
                crate::types::subst(p1, v1, &fresh_var) == crate::types::subst(p2, v2, &fresh_var)
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: Option<Type>,
}

impl Param {
    pub fn untyped(name: impl Into<String>) -> Self {
        Param {
            name: name.into(),
            ty: None,
        }
    }

    pub fn typed(name: impl Into<String>, ty: Type) -> Self {
        Param {
            name: name.into(),
            ty: Some(ty),
        }
    }
}

/// The XPath of a selection expression. `lang` is filled in by resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XPathRef {
    pub lang: Option<String>,
    pub selectors: Vec<Selector>,
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(BigInt),
    Bool(bool),
    Str(String),
    Var(String),
    Apply(Box<Expr>, Vec<Expr>),
    Lambda(Vec<Param>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    InLang(Box<Expr>, String),
    Select(Box<Expr>, XPathRef),
}

/// Positions are ignored so that reparsed programs compare equal.
impl PartialEq for Expr {
    fn eq(&self, other: &Expr) -> bool {
        self.kind == other.kind
    }
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos }
    }

    pub fn at(self, pos: Pos) -> Self {
        Expr { pos, ..self }
    }

    pub fn int(n: impl Into<BigInt>) -> Self {
        Expr::new(ExprKind::Int(n.into()), Pos::default())
    }

    pub fn bool(b: bool) -> Self {
        Expr::new(ExprKind::Bool(b), Pos::default())
    }

    pub fn str(s: impl Into<String>) -> Self {
        Expr::new(ExprKind::Str(s.into()), Pos::default())
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::new(ExprKind::Var(name.into()), Pos::default())
    }

    pub fn apply(f: Expr, args: Vec<Expr>) -> Self {
        let pos = f.pos;
        Expr::new(ExprKind::Apply(Box::new(f), args), pos)
    }

    /// Application of a builtin or operator by name.
    pub fn call(name: &str, args: Vec<Expr>) -> Self {
        let pos = args.first().map(|a| a.pos).unwrap_or_default();
        Expr::new(ExprKind::Apply(Box::new(Expr::var(name).at(pos)), args), pos)
    }

    pub fn lambda(params: Vec<Param>, body: Expr) -> Self {
        let pos = body.pos;
        Expr::new(ExprKind::Lambda(params, Box::new(body)), pos)
    }

    pub fn in_lang(subject: Expr, lang: impl Into<String>) -> Self {
        let pos = subject.pos;
        Expr::new(ExprKind::InLang(Box::new(subject), lang.into()), pos)
    }

    /// `a && b`, dropping literal `true` operands.
    pub fn and(a: Expr, b: Expr) -> Self {
        if a.is_true() {
            return b;
        }
        if b.is_true() {
            return a;
        }
        Expr::call("&&", vec![a, b])
    }

    pub fn is_true(&self) -> bool {
        matches!(self.kind, ExprKind::Bool(true))
    }

    /// Name of the operator or builtin this expression applies, if any.
    pub fn applied_name(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Apply(f, _) => match &f.kind {
                ExprKind::Var(n) => Some(n),
                _ => None,
            },
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CheckKind {
    ArgType,
    ReturnType,
    Pre,
    Post,
    LocalType,
    UserAssert,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::ArgType => "ArgType",
            CheckKind::ReturnType => "ReturnType",
            CheckKind::Pre => "Pre",
            CheckKind::Post => "Post",
            CheckKind::LocalType => "LocalType",
            CheckKind::UserAssert => "UserAssert",
        }
    }

    pub fn from_name(s: &str) -> Option<CheckKind> {
        Some(match s {
            "ArgType" => CheckKind::ArgType,
            "ReturnType" => CheckKind::ReturnType,
            "Pre" => CheckKind::Pre,
            "Post" => CheckKind::Post,
            "LocalType" => CheckKind::LocalType,
            "UserAssert" => CheckKind::UserAssert,
            _ => return None,
        })
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What an instrumented assertion checks, for error reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct AssertInfo {
    pub kind: CheckKind,
    /// Type or contract text shown as "expected".
    pub expected: String,
    /// Variable whose value is reported as "actual".
    pub subject: Option<String>,
    /// Method the check belongs to (callee for argument and pre checks).
    pub method: String,
    pub arg: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

impl PartialEq for Stmt {
    fn eq(&self, other: &Stmt) -> bool {
        self.kind == other.kind
    }
}

impl Stmt {
    pub fn new(kind: StmtKind, pos: Pos) -> Self {
        Stmt { kind, pos }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Decl(String, Type),
    Assign(String, Expr),
    DeclAssign(String, Option<Type>, Expr),
    Call {
        bind: String,
        method: String,
        args: Vec<Expr>,
    },
    Assert(Expr, Option<AssertInfo>),
    Return(Expr),
    If(Expr, Vec<Stmt>, Vec<Stmt>),
    While(Expr, Vec<Stmt>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Contract {
    Requires(Expr),
    Ensures(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunDef {
    pub name: String,
    pub params: Vec<(String, Type)>,
    pub ret: Type,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodDef {
    pub name: String,
    pub params: Vec<(String, Type)>,
    pub ret: Type,
    pub contracts: Vec<Contract>,
    pub body: Vec<Stmt>,
    /// Set on methods produced by instrumentation.
    pub instrumented: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangDef {
    pub name: String,
    pub grammar: Grammar,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DefKind {
    Fun(FunDef),
    Method(MethodDef),
    Lang(LangDef),
}

#[derive(Debug, Clone)]
pub struct Def {
    pub kind: DefKind,
    pub pos: Pos,
    pub file: Arc<str>,
}

impl PartialEq for Def {
    fn eq(&self, other: &Def) -> bool {
        self.kind == other.kind
    }
}

impl Def {
    pub fn name(&self) -> &str {
        match &self.kind {
            DefKind::Fun(f) => &f.name,
            DefKind::Method(m) => &m.name,
            DefKind::Lang(l) => &l.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub defs: Vec<Def>,
}

impl Program {
    pub fn method(&self, name: &str) -> Option<&MethodDef> {
        self.defs.iter().find_map(|d| match &d.kind {
            DefKind::Method(m) if m.name == name => Some(m),
            _ => None,
        })
    }

    pub fn method_def(&self, name: &str) -> Option<&Def> {
        self.defs
            .iter()
            .find(|d| matches!(&d.kind, DefKind::Method(m) if m.name == name))
    }

    pub fn function(&self, name: &str) -> Option<&FunDef> {
        self.defs.iter().find_map(|d| match &d.kind {
            DefKind::Fun(f) if f.name == name => Some(f),
            _ => None,
        })
    }

    pub fn methods(&self) -> impl Iterator<Item = &MethodDef> {
        self.defs.iter().filter_map(|d| match &d.kind {
            DefKind::Method(m) => Some(m),
            _ => None,
        })
    }
}
