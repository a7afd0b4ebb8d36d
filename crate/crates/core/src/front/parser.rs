use std::collections::BTreeSet;
use std::sync::Arc;

use super::lexer::{tokenize, Tok, Token};
use super::{FrontError, FrontErrorKind};
use crate::ast::*;
use crate::grammar::parse_rules;
use crate::library::binary_precedence;
use crate::text::Pos;
use crate::xpath::Selector;

pub const KEYWORDS: &[&str] = &[
    "def",
    "method",
    "lang",
    "requires",
    "ensures",
    "var",
    "call",
    "assert",
    "return",
    "if",
    "then",
    "else",
    "while",
    "in",
    "true",
    "false",
    "instrumented",
    "Int",
    "Bool",
    "String",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Parse one source file. Positions in errors and in the AST refer to `file`.
pub fn parse_program(file: &str, src: &str) -> Result<Program, FrontError> {
    let file: Arc<str> = Arc::from(file);
    let toks = tokenize(src).map_err(|e| FrontError {
        file: file.clone(),
        pos: e.pos,
        kind: FrontErrorKind::Syntax(e.msg),
    })?;
    let mut p = Parser {
        toks,
        i: 0,
        file: file.clone(),
    };
    let mut defs = Vec::new();
    let mut seen = BTreeSet::new();
    while !p.at_eof() {
        let def = p.def()?;
        if !seen.insert(def.name().to_string()) {
            return Err(FrontError {
                file,
                pos: def.pos,
                kind: FrontErrorKind::DuplicateDefinition(def.name().to_string()),
            });
        }
        defs.push(def);
    }
    Ok(Program { defs })
}

/// Parse a standalone expression (used by tests and the CLI).
pub fn parse_expr(src: &str) -> Result<Expr, FrontError> {
    let file: Arc<str> = Arc::from("<expr>");
    let toks = tokenize(src).map_err(|e| FrontError {
        file: file.clone(),
        pos: e.pos,
        kind: FrontErrorKind::Syntax(e.msg),
    })?;
    let mut p = Parser { toks, i: 0, file };
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parse a standalone type.
pub fn parse_type(src: &str) -> Result<Type, FrontError> {
    let file: Arc<str> = Arc::from("<type>");
    let toks = tokenize(src).map_err(|e| FrontError {
        file: file.clone(),
        pos: e.pos,
        kind: FrontErrorKind::Syntax(e.msg),
    })?;
    let mut p = Parser { toks, i: 0, file };
    let t = p.ty()?;
    p.expect_eof()?;
    Ok(t)
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    file: Arc<str>,
}

type PResult<T> = Result<T, FrontError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let j = (self.i + k).min(self.toks.len() - 1);
        &self.toks[j].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(FrontError {
            file: self.file.clone(),
            pos: self.pos(),
            kind: FrontErrorKind::Syntax(msg.into()),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Str(s) => format!("string {}", crate::text::quote(s)),
            Tok::Grammar(..) => "grammar block".into(),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(format!("expected `{p}`, found {}", self.describe()))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", self.describe()))
        }
    }

    fn expect_eof(&mut self) -> PResult<()> {
        if self.at_eof() {
            Ok(())
        } else {
            self.error(format!("unexpected {}", self.describe()))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) && s != WILDCARD => {
                self.advance();
                Ok(s)
            }
            _ => self.error(format!("expected an identifier, found {}", self.describe())),
        }
    }

    fn def(&mut self) -> PResult<Def> {
        let pos = self.pos();
        let kind = if self.eat_kw("def") {
            DefKind::Fun(self.fun_def()?)
        } else if self.is_kw("method") || self.is_kw("instrumented") {
            let instrumented = self.eat_kw("instrumented");
            self.expect_kw("method")?;
            DefKind::Method(self.method_def(instrumented)?)
        } else if self.eat_kw("lang") {
            DefKind::Lang(self.lang_def()?)
        } else {
            return self.error(format!(
                "expected `def`, `method` or `lang`, found {}",
                self.describe()
            ));
        };
        Ok(Def {
            kind,
            pos,
            file: self.file.clone(),
        })
    }

    fn params(&mut self) -> PResult<Vec<(String, Type)>> {
        self.expect_punct("(")?;
        let mut out = Vec::new();
        if !self.eat_punct(")") {
            loop {
                let name = self.ident()?;
                self.expect_punct(":")?;
                out.push((name, self.ty()?));
                if self.eat_punct(")") {
                    break;
                }
                self.expect_punct(",")?;
            }
        }
        Ok(out)
    }

    fn fun_def(&mut self) -> PResult<FunDef> {
        let name = self.ident()?;
        let params = self.params()?;
        self.expect_punct(":")?;
        let ret = self.ty()?;
        self.expect_punct("=")?;
        if self.is_kw("call") {
            return self.error("method calls are statements and cannot appear in a function body");
        }
        let body = self.expr()?;
        self.eat_punct(";");
        Ok(FunDef {
            name,
            params,
            ret,
            body,
        })
    }

    fn method_def(&mut self, instrumented: bool) -> PResult<MethodDef> {
        let name = self.ident()?;
        let params = self.params()?;
        self.expect_punct(":")?;
        let ret = self.ty()?;
        let mut contracts = Vec::new();
        loop {
            if self.eat_kw("requires") {
                contracts.push(Contract::Requires(self.expr()?));
            } else if self.eat_kw("ensures") {
                contracts.push(Contract::Ensures(self.expr()?));
            } else {
                break;
            }
        }
        let body = self.block()?;
        Ok(MethodDef {
            name,
            params,
            ret,
            contracts,
            body,
            instrumented,
        })
    }

    fn lang_def(&mut self) -> PResult<LangDef> {
        let name = self.ident()?;
        self.expect_punct("=")?;
        let Tok::Grammar(text, at) = self.peek().clone() else {
            return self.error(format!("expected a `{{ ... }}` grammar block, found {}", self.describe()));
        };
        self.advance();
        let grammar = parse_rules(&name, &text).map_err(|e| FrontError {
            file: self.file.clone(),
            pos: at,
            kind: FrontErrorKind::Grammar(e.offset_by(at)),
        })?;
        self.eat_punct(";");
        Ok(LangDef { name, grammar })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.eat_punct("}") {
            if self.at_eof() {
                return self.error("unterminated block");
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        let kind = if self.eat_kw("var") {
            let name = self.ident()?;
            if self.eat_punct(":") {
                let t = self.ty()?;
                if self.eat_punct("=") {
                    if self.is_kw("call") {
                        return self.error("a call result is bound with `var y = call m(...)`");
                    }
                    let e = self.expr()?;
                    self.expect_punct(";")?;
                    StmtKind::DeclAssign(name, Some(t), e)
                } else {
                    self.expect_punct(";")?;
                    StmtKind::Decl(name, t)
                }
            } else {
                self.expect_punct("=")?;
                if self.eat_kw("call") {
                    let method = self.ident()?;
                    let args = self.args()?;
                    self.expect_punct(";")?;
                    StmtKind::Call {
                        bind: name,
                        method,
                        args,
                    }
                } else {
                    let e = self.expr()?;
                    self.expect_punct(";")?;
                    StmtKind::DeclAssign(name, None, e)
                }
            }
        } else if self.eat_kw("assert") {
            let e = self.expr()?;
            self.expect_punct(";")?;
            StmtKind::Assert(e, None)
        } else if self.eat_kw("return") {
            let e = self.expr()?;
            self.expect_punct(";")?;
            StmtKind::Return(e)
        } else if self.eat_kw("if") {
            let c = self.expr()?;
            let then = self.block()?;
            let els = if self.eat_kw("else") {
                if self.is_kw("if") {
                    vec![self.stmt()?]
                } else {
                    self.block()?
                }
            } else {
                Vec::new()
            };
            self.eat_punct(";");
            StmtKind::If(c, then, els)
        } else if self.eat_kw("while") {
            let c = self.expr()?;
            let body = self.block()?;
            self.eat_punct(";");
            StmtKind::While(c, body)
        } else if self.is_kw("call") {
            return self.error("a method call must bind its result: `var y = call m(...);`");
        } else {
            let name = self.ident()?;
            self.expect_punct("=")?;
            let e = self.expr()?;
            self.expect_punct(";")?;
            StmtKind::Assign(name, e)
        };
        Ok(Stmt::new(kind, pos))
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_punct("(")?;
        let mut out = Vec::new();
        if !self.eat_punct(")") {
            loop {
                out.push(self.expr()?);
                if self.eat_punct(")") {
                    break;
                }
                self.expect_punct(",")?;
            }
        }
        Ok(out)
    }

    pub fn ty(&mut self) -> PResult<Type> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) if s == "Int" => {
                self.advance();
                Ok(Type::int())
            }
            Tok::Ident(s) if s == "Bool" => {
                self.advance();
                Ok(Type::bool())
            }
            Tok::Ident(s) if s == "String" => {
                self.advance();
                Ok(Type::string())
            }
            Tok::Ident(s) if !is_keyword(&s) && s != WILDCARD => {
                self.advance();
                Ok(Type::Lang(s))
            }
            Tok::Punct("{") => {
                self.advance();
                let binder = match (self.peek().clone(), self.peek_at(1)) {
                    (Tok::Ident(v), Tok::Punct(":")) if v == WILDCARD || !is_keyword(&v) => {
                        self.advance();
                        self.advance();
                        Some(v)
                    }
                    _ => None,
                };
                let base = self.ty()?;
                self.expect_punct("|")?;
                let pred = self.expr()?;
                self.expect_punct("}")?;
                // `{t | e}` without a binder reuses the binder of a refined base.
                let var = binder.unwrap_or_else(|| match &base {
                    Type::Refine { var, .. } => var.clone(),
                    _ => WILDCARD.to_string(),
                });
                Ok(Type::refine(var, base, pred))
            }
            Tok::Punct("(") => {
                self.advance();
                let mut params = Vec::new();
                if !self.eat_punct(")") {
                    loop {
                        params.push(self.simple_ty()?);
                        if self.eat_punct(")") {
                            break;
                        }
                        self.expect_punct(",")?;
                    }
                }
                self.expect_punct("->")?;
                let ret = self.simple_ty()?;
                Ok(Type::Simple(SimpleType::Fun(params, Box::new(ret))))
            }
            _ => Err(FrontError {
                file: self.file.clone(),
                pos,
                kind: FrontErrorKind::Syntax(format!("expected a type, found {}", self.describe())),
            }),
        }
    }

    fn simple_ty(&mut self) -> PResult<SimpleType> {
        match self.ty()? {
            Type::Simple(s) => Ok(s),
            _ => self.error("function types are built from simple types only"),
        }
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        if self.is_kw("if") {
            let pos = self.pos();
            self.advance();
            let c = self.expr()?;
            self.expect_kw("then")?;
            let t = self.expr()?;
            self.expect_kw("else")?;
            let e = self.expr()?;
            return Ok(Expr::new(ExprKind::If(Box::new(c), Box::new(t), Box::new(e)), pos));
        }
        if self.is_punct("(") && self.lambda_ahead() {
            return self.lambda();
        }
        self.binary(1)
    }

    /// At `(`: does the matching `)` precede `->`?
    fn lambda_ahead(&self) -> bool {
        let mut depth = 0usize;
        let mut k = self.i;
        while k < self.toks.len() {
            match &self.toks[k].tok {
                Tok::Punct("(") => depth += 1,
                Tok::Punct(")") => {
                    depth -= 1;
                    if depth == 0 {
                        return matches!(self.toks.get(k + 1).map(|t| &t.tok), Some(Tok::Punct("->")));
                    }
                }
                Tok::Eof => return false,
                _ => {}
            }
            k += 1;
        }
        false
    }

    fn lambda(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.eat_punct(")") {
            loop {
                let name = self.ident()?;
                let ty = if self.eat_punct(":") { Some(self.ty()?) } else { None };
                params.push(Param { name, ty });
                if self.eat_punct(")") {
                    break;
                }
                self.expect_punct(",")?;
            }
        }
        self.expect_punct("->")?;
        let body = self.expr()?;
        Ok(Expr::new(ExprKind::Lambda(params, Box::new(body)), pos))
    }

    fn binary_op(&self) -> Option<(&'static str, u8)> {
        match self.peek() {
            Tok::Punct(p) => binary_precedence(p).map(|prec| (*p, prec)),
            _ => None,
        }
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        if min_prec == 4 {
            return self.comparison();
        }
        if min_prec > 6 {
            return self.unary();
        }
        let mut lhs = self.binary(min_prec + 1)?;
        // Equality does not chain.
        let mut chained = false;
        while let Some((op, prec)) = self.binary_op() {
            if prec != min_prec {
                break;
            }
            if prec == 3 && chained {
                return self.error("`==` and `!=` do not chain; use parentheses");
            }
            let pos = self.pos();
            self.advance();
            let rhs = self.binary(min_prec + 1)?;
            lhs = Expr::new(
                ExprKind::Apply(Box::new(Expr::var(op).at(pos)), vec![lhs, rhs]),
                pos,
            );
            chained = true;
        }
        Ok(lhs)
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.binary(5)?;
        if let Some((op, 4)) = self.binary_op() {
            let pos = self.pos();
            self.advance();
            let rhs = self.binary(5)?;
            if matches!(self.binary_op(), Some((_, 4))) || self.is_kw("in") || self.is_punct("∈") {
                return self.error("comparisons do not chain; use parentheses");
            }
            return Ok(Expr::new(
                ExprKind::Apply(Box::new(Expr::var(op).at(pos)), vec![lhs, rhs]),
                pos,
            ));
        }
        if self.eat_kw("in") || self.eat_punct("∈") {
            let lang = self.ident()?;
            let pos = lhs.pos;
            return Ok(Expr::new(ExprKind::InLang(Box::new(lhs), lang), pos));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        for op in ["-", "!"] {
            if self.eat_punct(op) {
                let arg = self.unary()?;
                return Ok(Expr::new(
                    ExprKind::Apply(Box::new(Expr::var(op).at(pos)), vec![arg]),
                    pos,
                ));
            }
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.is_punct("(") {
                let pos = self.pos();
                let args = self.args()?;
                e = Expr::new(ExprKind::Apply(Box::new(e), args), pos);
            } else if self.is_punct("[") {
                let pos = self.pos();
                self.advance();
                let selectors = self.selectors()?;
                self.expect_punct("]")?;
                e = Expr::new(
                    ExprKind::Select(Box::new(e), XPathRef { lang: None, selectors }),
                    pos,
                );
            } else {
                return Ok(e);
            }
        }
    }

    fn selectors(&mut self) -> PResult<Vec<Selector>> {
        let mut out = Vec::new();
        loop {
            let descendant = if self.eat_punct("..") {
                true
            } else if self.eat_punct(".") {
                false
            } else {
                break;
            };
            let label = match self.peek().clone() {
                Tok::Ident(s) => {
                    self.advance();
                    s
                }
                _ => return self.error(format!("expected a label, found {}", self.describe())),
            };
            if !descendant && self.is_punct("[") {
                self.advance();
                let k = match self.peek().clone() {
                    Tok::Int(n) => {
                        self.advance();
                        n
                    }
                    _ => return self.error("expected a positive index"),
                };
                self.expect_punct("]")?;
                let k: usize = match usize::try_from(&k) {
                    Ok(k) if k >= 1 => k,
                    _ => return self.error("indices start at 1"),
                };
                out.push(Selector::Child(label, k));
            } else if descendant {
                out.push(Selector::DescendantAll(label));
            } else {
                out.push(Selector::ChildAll(label));
            }
        }
        if out.is_empty() {
            return self.error("expected an xpath starting with `.` or `..`");
        }
        Ok(out)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::Int(n) => ExprKind::Int(n),
            Tok::Str(s) => ExprKind::Str(s),
            Tok::Ident(s) if s == "true" => ExprKind::Bool(true),
            Tok::Ident(s) if s == "false" => ExprKind::Bool(false),
            Tok::Ident(s) if s == "call" => {
                return self.error("method calls are statements: `var y = call m(...);`")
            }
            Tok::Ident(s) if !is_keyword(&s) && s != WILDCARD => ExprKind::Var(s),
            Tok::Punct("(") => {
                self.advance();
                let e = self.expr()?;
                self.expect_punct(")")?;
                return Ok(e.at(pos));
            }
            _ => return self.error(format!("expected an expression, found {}", self.describe())),
        };
        self.advance();
        Ok(Expr::new(kind, pos))
    }
}
