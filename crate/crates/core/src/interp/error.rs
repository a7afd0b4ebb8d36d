use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::Value;
use crate::ast::CheckKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ErrorKind {
    ArgType,
    ReturnType,
    Pre,
    Post,
    LocalType,
    UserAssert,
    /// A failed `assert` of unknown origin.
    AssertionFailed,
    DivisionByZero,
    SelectError,
    MissingReturn,
    BudgetExceeded,
    Internal,
    Usage,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::ArgType => "ArgType",
            ErrorKind::ReturnType => "ReturnType",
            ErrorKind::Pre => "Pre",
            ErrorKind::Post => "Post",
            ErrorKind::LocalType => "LocalType",
            ErrorKind::UserAssert => "UserAssert",
            ErrorKind::AssertionFailed => "AssertionFailed",
            ErrorKind::DivisionByZero => "DivisionByZero",
            ErrorKind::SelectError => "SelectError",
            ErrorKind::MissingReturn => "MissingReturn",
            ErrorKind::BudgetExceeded => "BudgetExceeded",
            ErrorKind::Internal => "Internal",
            ErrorKind::Usage => "Usage",
        }
    }

    /// Violations of a type or a contract.
    pub fn is_check(self) -> bool {
        matches!(
            self,
            ErrorKind::ArgType
                | ErrorKind::ReturnType
                | ErrorKind::Pre
                | ErrorKind::Post
                | ErrorKind::LocalType
                | ErrorKind::UserAssert
                | ErrorKind::AssertionFailed
        )
    }
}

impl From<CheckKind> for ErrorKind {
    fn from(k: CheckKind) -> Self {
        match k {
            CheckKind::ArgType => ErrorKind::ArgType,
            CheckKind::ReturnType => ErrorKind::ReturnType,
            CheckKind::Pre => ErrorKind::Pre,
            CheckKind::Post => ErrorKind::Post,
            CheckKind::LocalType => ErrorKind::LocalType,
            CheckKind::UserAssert => ErrorKind::UserAssert,
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub file: Arc<str>,
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeError {
    pub kind: ErrorKind,
    pub location: Option<Location>,
    /// Expected type, or the text of the violated contract.
    pub expected: Option<String>,
    pub actual: Option<Value>,
    /// Method the check belongs to and the argument index, when known.
    pub method: Option<String>,
    pub arg: Option<usize>,
    pub message: String,
    /// Innermost call first: the method and the location of its call site.
    pub call_stack: Vec<(String, Location)>,
}

impl RuntimeError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        RuntimeError {
            kind,
            location: None,
            expected: None,
            actual: None,
            method: None,
            arg: None,
            message: message.into(),
            call_stack: Vec::new(),
        }
    }

    pub fn at(mut self, loc: Location) -> Self {
        self.location = Some(loc);
        self
    }

    fn headline(&self) -> String {
        let method = self.method.as_deref().unwrap_or("?");
        match self.kind {
            ErrorKind::ArgType => match self.arg {
                Some(i) => format!("Type mismatch for argument {i} of method {method}"),
                None => format!("Type mismatch for an argument of method {method}"),
            },
            ErrorKind::ReturnType => format!("Type mismatch for the return value of method {method}"),
            ErrorKind::LocalType => format!("Type mismatch in method {method}"),
            ErrorKind::Pre => format!("Precondition of method {method} violated"),
            ErrorKind::Post => format!("Postcondition of method {method} violated"),
            _ => self.message.clone(),
        }
    }

    /// JSON object `{kind, location, expected, actual}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind.name(),
            "location": self.location.as_ref().map(|l| serde_json::json!({
                "file": &*l.file,
                "line": l.line,
                "column": l.column,
            })),
            "expected": self.expected,
            "actual": self.actual.as_ref().map(Value::to_json),
        })
    }
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.headline())?;
        if let Some(e) = &self.expected {
            match self.kind {
                ErrorKind::Pre | ErrorKind::Post => writeln!(f, "  contract:      {e}")?,
                // The headline already shows the condition.
                ErrorKind::UserAssert | ErrorKind::AssertionFailed => {}
                _ => writeln!(f, "  expected type: {e}")?,
            }
        }
        if let Some(a) = &self.actual {
            writeln!(f, "  actual value:  {a}")?;
        }
        if matches!(self.kind, ErrorKind::Pre | ErrorKind::Post) && !self.message.is_empty() {
            writeln!(f, "  {}", self.message)?;
        }
        if let Some(l) = &self.location {
            writeln!(f, "  at {l}")?;
        }
        for (m, l) in &self.call_stack {
            writeln!(f, "  called from {m} at {l}")?;
        }
        Ok(())
    }
}

impl std::error::Error for RuntimeError {}
