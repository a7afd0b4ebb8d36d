use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::ToPrimitive;

use crate::ast::{Expr, SimpleType};
use crate::text::quote;

#[derive(Debug, Clone, PartialEq)]
pub enum Closure {
    Lambda {
        params: Vec<String>,
        body: Expr,
        env: Vec<(String, Value)>,
    },
    /// A named function used as a value.
    Fun(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(BigInt),
    Bool(bool),
    Str(String),
    Closure(Arc<Closure>),
}

impl Value {
    pub fn int(n: impl Into<BigInt>) -> Self {
        Value::Int(n.into())
    }

    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }

    pub fn simple_type(&self) -> Option<SimpleType> {
        match self {
            Value::Int(_) => Some(SimpleType::Int),
            Value::Bool(_) => Some(SimpleType::Bool),
            Value::Str(_) => Some(SimpleType::String),
            Value::Closure(_) => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Integers outside the `i64` range become decimal strings.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Int(n) => match n.to_i64() {
                Some(i) => serde_json::Value::from(i),
                None => serde_json::Value::from(n.to_string()),
            },
            Value::Bool(b) => serde_json::Value::from(*b),
            Value::Str(s) => serde_json::Value::from(s.as_str()),
            Value::Closure(_) => serde_json::Value::from(self.to_string()),
        }
    }

    /// Read a JSON scalar as a value of type `want`.
    pub fn from_json(v: &serde_json::Value, want: &SimpleType) -> Option<Value> {
        match (v, want) {
            (serde_json::Value::Number(n), SimpleType::Int) => {
                if let Some(i) = n.as_i64() {
                    Some(Value::int(i))
                } else {
                    n.as_u64().map(Value::int)
                }
            }
            (serde_json::Value::String(s), SimpleType::Int) => s.parse::<BigInt>().ok().map(Value::Int),
            (serde_json::Value::Bool(b), SimpleType::Bool) => Some(Value::Bool(*b)),
            (serde_json::Value::String(s), SimpleType::String) => Some(Value::str(s.clone())),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => f.write_str(&quote(s)),
            Value::Closure(c) => match &**c {
                Closure::Lambda { params, .. } => write!(f, "<lambda/{}>", params.len()),
                Closure::Fun(name) => write!(f, "<function {name}>"),
            },
        }
    }
}
