//! Source positions and the escape handling shared by grammar literals, char
//! sets and program string literals.

use std::fmt;

/// A 1-based line/column position in a source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }

    /// Translate a position relative to an embedded block that starts at
    /// `base` into a position in the enclosing text.
    pub fn offset_by(self, base: Pos) -> Pos {
        if self.line <= 1 {
            Pos::new(base.line, base.col + self.col.saturating_sub(1))
        } else {
            Pos::new(base.line + self.line - 1, self.col)
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Result of reading one escape sequence after a backslash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Escape {
    Char(char),
    /// The escape was malformed; carries a short description.
    Invalid(&'static str),
}

/// Decode the escape sequence starting right after a `\`.
///
/// `next` yields the following characters; at most three are consumed.
pub(crate) fn read_escape(next: &mut impl FnMut() -> Option<char>) -> Escape {
    match next() {
        Some('\\') => Escape::Char('\\'),
        Some('"') => Escape::Char('"'),
        Some('-') => Escape::Char('-'),
        Some(']') => Escape::Char(']'),
        Some('[') => Escape::Char('['),
        Some('^') => Escape::Char('^'),
        Some('n') => Escape::Char('\n'),
        Some('t') => Escape::Char('\t'),
        Some('r') => Escape::Char('\r'),
        Some('x') => {
            let hi = next().and_then(|c| c.to_digit(16));
            let lo = next().and_then(|c| c.to_digit(16));
            match (hi, lo) {
                (Some(h), Some(l)) => match char::from_u32(h * 16 + l) {
                    Some(c) => Escape::Char(c),
                    None => Escape::Invalid("invalid hex escape"),
                },
                _ => Escape::Invalid("expected two hex digits after \\x"),
            }
        }
        Some(_) => Escape::Invalid("unknown escape sequence"),
        None => Escape::Invalid("unterminated escape sequence"),
    }
}

fn push_escaped(out: &mut String, c: char, extra: &[char]) {
    match c {
        '\\' => out.push_str("\\\\"),
        '\n' => out.push_str("\\n"),
        '\t' => out.push_str("\\t"),
        '\r' => out.push_str("\\r"),
        c if extra.contains(&c) => {
            if matches!(c, '"' | '-' | ']' | '[' | '^') {
                out.push('\\');
                out.push(c);
            } else {
                out.push_str(&format!("\\x{:02x}", c as u32));
            }
        }
        c if (c as u32) < 0x20 || c as u32 == 0x7f => {
            out.push_str(&format!("\\x{:02x}", c as u32));
        }
        c => out.push(c),
    }
}

/// Render `s` as a double-quoted literal that reads back to `s`.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        push_escaped(&mut out, c, &['"']);
    }
    out.push('"');
    out
}

/// Render one character for use inside a `[...]` char set.
pub(crate) fn escape_set_char(c: char) -> String {
    let mut out = String::new();
    push_escaped(&mut out, c, &['-', ']', '[', '^', '"']);
    out
}
