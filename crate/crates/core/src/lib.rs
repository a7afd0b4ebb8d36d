pub mod ast;
pub mod cfg;
pub mod check;
pub mod front;
pub mod fuzz;
pub mod grammar;
pub mod instrument;
pub mod interp;
pub mod lang;
pub mod library;
pub mod parse;
pub mod text;
pub mod types;
pub mod xpath;

pub use ast::{Expr, Program, SimpleType, Stmt, Type};
pub use cfg::CoreCfg;
pub use check::{simple_typecheck, Diagnostic};
pub use front::{load, load_files, MethodMeta, Unit};
pub use fuzz::{fuzz, FuzzConfig, FuzzError, FuzzReport, Producer};
pub use grammar::Grammar;
pub use instrument::instrument_program;
pub use interp::{ErrorKind, Interp, RuntimeError, Value};
pub use lang::LangRegistry;
pub use parse::DerivationTree;
pub use types::{normalize, NormalizedType, Predicate};
pub use xpath::XPath;
