//! Concrete syntax: lexing, parsing, printing and name resolution.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::grammar::GrammarError;
use crate::lang::LangError;
use crate::text::Pos;

mod lexer;
mod parser;
mod printer;
mod resolve;

pub use parser::{is_keyword, parse_expr, parse_program, parse_type, KEYWORDS};
pub use printer::{print_program, write_expr, write_stmt};
pub use resolve::{load, load_files, resolve, resolve_with, static_lang, static_type, MethodMeta, Unit, RET_BINDER};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrontErrorKind {
    Syntax(String),
    DuplicateDefinition(String),
    UnresolvedName(String),
    UnknownLabel { lang: String, label: String },
    Grammar(GrammarError),
    Lang(LangError),
    ContractArity {
        method: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct FrontError {
    pub file: Arc<str>,
    pub pos: Pos,
    pub kind: FrontErrorKind,
}

impl FrontError {
    pub fn code(&self) -> &'static str {
        match self.kind {
            FrontErrorKind::Syntax(_) => "SyntaxError",
            FrontErrorKind::DuplicateDefinition(_) => "DuplicateDefinition",
            FrontErrorKind::UnresolvedName(_) => "UnresolvedName",
            FrontErrorKind::UnknownLabel { .. } => "UnknownLabel",
            FrontErrorKind::Grammar(_) | FrontErrorKind::Lang(_) => "GrammarError",
            FrontErrorKind::ContractArity { .. } => "ContractArity",
        }
    }
}

impl fmt::Display for FrontError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let FrontErrorKind::Grammar(e) = &self.kind {
            // Positioned grammar errors already carry their location.
            if grammar_pos(e).is_some() {
                return write!(f, "{}:{e}", self.file);
            }
        }
        write!(f, "{}:{}: ", self.file, self.pos)?;
        match &self.kind {
            FrontErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            FrontErrorKind::DuplicateDefinition(n) => write!(f, "`{n}` is defined more than once"),
            FrontErrorKind::UnresolvedName(n) => write!(f, "unresolved name `{n}`"),
            FrontErrorKind::UnknownLabel { lang, label } => {
                write!(f, "`{label}` is not a nonterminal of `{lang}`")
            }
            FrontErrorKind::Grammar(e) => write!(f, "{e}"),
            FrontErrorKind::Lang(e) => write!(f, "{e}"),
            FrontErrorKind::ContractArity {
                method,
                expected,
                found,
            } => write!(
                f,
                "contract of method `{method}` takes {found} parameters, expected {expected}"
            ),
        }
    }
}

fn grammar_pos(e: &GrammarError) -> Option<Pos> {
    match e {
        GrammarError::Syntax { pos, .. }
        | GrammarError::DuplicateRule { pos, .. }
        | GrammarError::BadRepetition { pos, .. }
        | GrammarError::BadCharRange { pos, .. }
        | GrammarError::EmptyCharSet { pos } => Some(*pos),
        _ => None,
    }
}
