//! Names and simple-type signatures of the builtin library.

use crate::ast::SimpleType;

/// Operand shape of a builtin, for the simple type checker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Signature {
    Fixed(Vec<SimpleType>, SimpleType),
    /// `==` / `!=`: both operands of the same first-order type.
    Equality,
}

/// Binary operators in the surface syntax, with their precedence levels
/// (higher binds tighter).
pub const BINARY_OPERATORS: &[(&str, u8)] = &[
    ("||", 1),
    ("&&", 2),
    ("==", 3),
    ("!=", 3),
    ("<", 4),
    ("<=", 4),
    (">", 4),
    (">=", 4),
    ("+", 5),
    ("-", 5),
    ("*", 6),
    ("/", 6),
    ("%", 6),
];

pub fn binary_precedence(op: &str) -> Option<u8> {
    BINARY_OPERATORS.iter().find(|(o, _)| *o == op).map(|(_, p)| *p)
}

pub fn is_operator(name: &str) -> bool {
    name == "!" || binary_precedence(name).is_some()
}

pub const NAMED: &[&str] = &[
    "div",
    "mod",
    "length",
    "concat",
    "at",
    "substr",
    "indexof",
    "contains",
    "prefixof",
    "suffixof",
    "startswith",
    "endswith",
    "replace",
    "str_to_int",
    "int_to_str",
];

pub fn is_builtin(name: &str) -> bool {
    is_operator(name) || NAMED.contains(&name)
}

/// Signature of a builtin applied to `arity` arguments (`-` is both
/// subtraction and negation).
pub fn signature(name: &str, arity: usize) -> Option<Signature> {
    use SimpleType::{Bool, Int, String as Str};
    let fixed = |params: Vec<SimpleType>, ret: SimpleType| Some(Signature::Fixed(params, ret));
    match name {
        "-" if arity == 1 => fixed(vec![Int], Int),
        "+" | "-" | "*" | "/" | "%" | "div" | "mod" => fixed(vec![Int, Int], Int),
        "<" | "<=" | ">" | ">=" => fixed(vec![Int, Int], Bool),
        "==" | "!=" => Some(Signature::Equality),
        "&&" | "||" => fixed(vec![Bool, Bool], Bool),
        "!" => fixed(vec![Bool], Bool),
        "length" => fixed(vec![Str], Int),
        "concat" => fixed(vec![Str, Str], Str),
        "at" => fixed(vec![Str, Int], Str),
        "substr" => fixed(vec![Str, Int, Int], Str),
        "indexof" => fixed(vec![Str, Str, Int], Int),
        "contains" | "prefixof" | "suffixof" | "startswith" | "endswith" => fixed(vec![Str, Str], Bool),
        "replace" => fixed(vec![Str, Str, Str], Str),
        "str_to_int" => fixed(vec![Str], Int),
        "int_to_str" => fixed(vec![Int], Str),
        _ => None,
    }
}

/// Arities a builtin accepts.
pub fn arities(name: &str) -> &'static [usize] {
    match name {
        "-" => &[1, 2],
        "!" | "length" | "str_to_int" | "int_to_str" => &[1],
        "substr" | "indexof" | "replace" => &[3],
        _ if is_builtin(name) => &[2],
        _ => &[],
    }
}
