//! The EBNF meta-notation used inside `lang` definitions.
//!
//! A grammar is a list of rules `name: clause ;`. Clauses support string
//! terminals, nonterminal references, juxtaposition, `|`, the postfix
//! operators `*`, `+`, `?`, `{k}`, `{k1,k2}`, and char sets `[a-z]` /
//! `[^...]`. A rule named `start` is mandatory. Nonterminals that are not
//! defined locally may name another language type, in which case that
//! grammar is imported.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use crate::text::{self, Escape, Pos};

/// Largest repetition bound accepted in `{k}` and `{k1,k2}`.
pub const MAX_REPEAT: u32 = 1000;

/// Upper end (inclusive) of the alphabet negated char sets complement over.
pub const NEGATION_ALPHABET_MAX: u32 = 0x7f;

/// Name of the mandatory start rule.
pub const START: &str = "start";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Clause {
    Terminal(String),
    Nonterminal(String),
    Concat(Vec<Clause>),
    Alt(Vec<Clause>),
    Star(Box<Clause>),
    Plus(Box<Clause>),
    Opt(Box<Clause>),
    RepeatExact(Box<Clause>, u32),
    RepeatRange(Box<Clause>, u32, u32),
    CharSet(CharSet),
}

/// A bracketed character set. Ranges are kept as written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharSet {
    pub ranges: Vec<(char, char)>,
    pub negated: bool,
}

impl CharSet {
    /// Member codepoints as sorted, disjoint, inclusive ranges.
    pub fn members(&self) -> Vec<(u32, u32)> {
        let mut ranges: Vec<(u32, u32)> =
            self.ranges.iter().map(|&(lo, hi)| (lo as u32, hi as u32)).collect();
        ranges.sort_unstable();
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(ranges.len());
        for (lo, hi) in ranges {
            match merged.last_mut() {
                Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        if !self.negated {
            return merged;
        }
        let mut out = Vec::new();
        let mut next = 0u32;
        for (lo, hi) in merged {
            if lo > NEGATION_ALPHABET_MAX {
                break;
            }
            if lo > next {
                out.push((next, lo - 1));
            }
            next = next.max(hi + 1);
        }
        if next <= NEGATION_ALPHABET_MAX {
            out.push((next, NEGATION_ALPHABET_MAX));
        }
        out
    }

    pub fn contains(&self, c: char) -> bool {
        let c = c as u32;
        self.members().iter().any(|&(lo, hi)| lo <= c && c <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    pub name: String,
    pub rules: IndexMap<String, Clause>,
    /// Language types referenced by this grammar. Filled by
    /// [`Grammar::resolve_imports`].
    pub imports: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("{pos}: syntax error in grammar: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: duplicate rule `{name}`")]
    DuplicateRule { pos: Pos, name: String },
    #[error("grammar `{grammar}` has no `start` rule")]
    MissingStart { grammar: String },
    #[error("undefined nonterminal `{name}` in rule `{rule}` of grammar `{grammar}`")]
    UndefinedNonterminal {
        grammar: String,
        rule: String,
        name: String,
    },
    #[error("{pos}: bad repetition: {msg}")]
    BadRepetition { pos: Pos, msg: String },
    #[error("{pos}: bad character range {lo:?}-{hi:?}")]
    BadCharRange { pos: Pos, lo: char, hi: char },
    #[error("{pos}: character set is empty")]
    EmptyCharSet { pos: Pos },
    #[error("nonterminals derive no finite sentence: {}", .0.join(", "))]
    NonProductive(Vec<String>),
}

impl GrammarError {
    /// Shift the position of a positioned error by the location of the
    /// block the grammar was embedded in.
    pub fn offset_by(self, base: Pos) -> Self {
        match self {
            GrammarError::Syntax { pos, msg } => GrammarError::Syntax {
                pos: pos.offset_by(base),
                msg,
            },
            GrammarError::DuplicateRule { pos, name } => GrammarError::DuplicateRule {
                pos: pos.offset_by(base),
                name,
            },
            GrammarError::BadRepetition { pos, msg } => GrammarError::BadRepetition {
                pos: pos.offset_by(base),
                msg,
            },
            GrammarError::BadCharRange { pos, lo, hi } => GrammarError::BadCharRange {
                pos: pos.offset_by(base),
                lo,
                hi,
            },
            GrammarError::EmptyCharSet { pos } => GrammarError::EmptyCharSet {
                pos: pos.offset_by(base),
            },
            other => other,
        }
    }
}

/// Parse and fully validate a grammar, resolving references to other
/// language types against `registry`.
pub fn parse_grammar(
    name: &str,
    source: &str,
    registry: &BTreeMap<String, Grammar>,
) -> Result<Grammar, GrammarError> {
    let mut g = parse_rules(name, source)?;
    g.resolve_imports(registry)?;
    Ok(g)
}

/// Parse the rule block without resolving cross-grammar references.
///
/// Checks everything that is local to the text: syntax, duplicate rules,
/// the `start` rule, repetition bounds and char ranges.
pub fn parse_rules(name: &str, source: &str) -> Result<Grammar, GrammarError> {
    let mut p = RuleParser::new(source);
    let mut rules = IndexMap::new();
    loop {
        p.skip_trivia();
        if p.at_end() {
            break;
        }
        let pos = p.pos();
        let rule = p.ident().ok_or_else(|| p.error("expected rule name"))?;
        p.skip_trivia();
        p.expect(':')?;
        let clause = p.alternation()?;
        p.skip_trivia();
        p.expect(';')?;
        if rules.contains_key(&rule) {
            return Err(GrammarError::DuplicateRule { pos, name: rule });
        }
        rules.insert(rule, clause);
    }
    if !rules.contains_key(START) {
        return Err(GrammarError::MissingStart {
            grammar: name.to_string(),
        });
    }
    Ok(Grammar {
        name: name.to_string(),
        rules,
        imports: BTreeSet::new(),
    })
}

impl Grammar {
    /// Check that every nonterminal reference names a local rule or a
    /// language in `registry`, and record the latter as imports.
    pub fn resolve_imports(
        &mut self,
        registry: &BTreeMap<String, Grammar>,
    ) -> Result<(), GrammarError> {
        let mut imports = BTreeSet::new();
        for (rule, clause) in &self.rules {
            let mut refs = Vec::new();
            clause.nonterminals(&mut refs);
            for r in refs {
                if self.rules.contains_key(r) {
                    continue;
                }
                if registry.contains_key(r) {
                    imports.insert(r.to_string());
                } else {
                    return Err(GrammarError::UndefinedNonterminal {
                        grammar: self.name.clone(),
                        rule: rule.clone(),
                        name: r.to_string(),
                    });
                }
            }
        }
        self.imports = imports;
        Ok(())
    }

    pub fn start(&self) -> &Clause {
        &self.rules[START]
    }

    /// Rules that cannot be reached from `start`. Not an error, but worth a
    /// warning.
    pub fn unreachable_rules(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![START];
        while let Some(r) = stack.pop() {
            if !seen.insert(r) {
                continue;
            }
            if let Some(clause) = self.rules.get(r) {
                let mut refs = Vec::new();
                clause.nonterminals(&mut refs);
                stack.extend(refs.into_iter().filter(|n| self.rules.contains_key(*n)));
            }
        }
        self.rules
            .keys()
            .filter(|k| !seen.contains(k.as_str()))
            .cloned()
            .collect()
    }
}

impl Clause {
    fn nonterminals<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Clause::Nonterminal(n) => out.push(n),
            Clause::Terminal(_) | Clause::CharSet(_) => {}
            Clause::Concat(parts) | Clause::Alt(parts) => {
                parts.iter().for_each(|p| p.nonterminals(out))
            }
            Clause::Star(b)
            | Clause::Plus(b)
            | Clause::Opt(b)
            | Clause::RepeatExact(b, _)
            | Clause::RepeatRange(b, _, _) => b.nonterminals(out),
        }
    }
}

struct RuleParser {
    chars: Vec<char>,
    at: usize,
    line: u32,
    col: u32,
}

impl RuleParser {
    fn new(src: &str) -> Self {
        RuleParser {
            chars: src.chars().collect(),
            at: 0,
            line: 1,
            col: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos::new(self.line, self.col)
    }

    fn error(&self, msg: impl Into<String>) -> GrammarError {
        GrammarError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        }
    }

    fn at_end(&self) -> bool {
        self.at >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.at).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.at += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, c: char) -> Result<(), GrammarError> {
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(match self.peek() {
                Some(found) => format!("expected `{c}`, found `{found}`"),
                None => format!("expected `{c}`, found end of input"),
            }))
        }
    }

    fn ident(&mut self) -> Option<String> {
        let c = self.peek()?;
        if !(c.is_ascii_alphabetic() || c == '_') {
            return None;
        }
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        Some(s)
    }

    fn number(&mut self) -> Result<u32, GrammarError> {
        let pos = self.pos();
        let mut digits = String::new();
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            digits.push(c);
            self.bump();
        }
        if digits.is_empty() {
            return Err(self.error("expected a repetition count"));
        }
        digits.parse().map_err(|_| GrammarError::BadRepetition {
            pos,
            msg: format!("count {digits} is too large"),
        })
    }

    fn alternation(&mut self) -> Result<Clause, GrammarError> {
        let mut choices = vec![self.sequence()?];
        loop {
            self.skip_trivia();
            if self.peek() == Some('|') {
                self.bump();
                choices.push(self.sequence()?);
            } else {
                break;
            }
        }
        Ok(if choices.len() == 1 {
            choices.pop().unwrap()
        } else {
            Clause::Alt(choices)
        })
    }

    fn sequence(&mut self) -> Result<Clause, GrammarError> {
        let mut parts = Vec::new();
        loop {
            self.skip_trivia();
            match self.peek() {
                None | Some('|') | Some(';') | Some(')') => break,
                _ => parts.push(self.postfix()?),
            }
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Clause::Concat(parts)
        })
    }

    fn postfix(&mut self) -> Result<Clause, GrammarError> {
        let mut clause = self.atom()?;
        loop {
            // Suffixes bind tightly: no whitespace before them.
            let pos = self.pos();
            match self.peek() {
                Some('*') => {
                    self.bump();
                    clause = Clause::Star(Box::new(clause));
                }
                Some('+') => {
                    self.bump();
                    clause = Clause::Plus(Box::new(clause));
                }
                Some('?') => {
                    self.bump();
                    clause = Clause::Opt(Box::new(clause));
                }
                Some('{') => {
                    self.bump();
                    self.skip_trivia();
                    let k1 = self.number()?;
                    self.skip_trivia();
                    if self.peek() == Some(',') {
                        self.bump();
                        self.skip_trivia();
                        let k2 = self.number()?;
                        self.skip_trivia();
                        self.expect('}')?;
                        if k1 >= k2 {
                            return Err(GrammarError::BadRepetition {
                                pos,
                                msg: format!("{{{k1},{k2}}} needs the lower bound below the upper"),
                            });
                        }
                        if k2 > MAX_REPEAT {
                            return Err(GrammarError::BadRepetition {
                                pos,
                                msg: format!("bound {k2} exceeds {MAX_REPEAT}"),
                            });
                        }
                        clause = Clause::RepeatRange(Box::new(clause), k1, k2);
                    } else {
                        self.expect('}')?;
                        if k1 < 2 {
                            return Err(GrammarError::BadRepetition {
                                pos,
                                msg: format!("{{{k1}}} needs a count of at least 2"),
                            });
                        }
                        if k1 > MAX_REPEAT {
                            return Err(GrammarError::BadRepetition {
                                pos,
                                msg: format!("count {k1} exceeds {MAX_REPEAT}"),
                            });
                        }
                        clause = Clause::RepeatExact(Box::new(clause), k1);
                    }
                }
                _ => break,
            }
        }
        Ok(clause)
    }

    fn atom(&mut self) -> Result<Clause, GrammarError> {
        match self.peek() {
            Some('"') => {
                self.bump();
                let mut lit = String::new();
                loop {
                    match self.bump() {
                        None | Some('\n') => return Err(self.error("unterminated string literal")),
                        Some('"') => break,
                        Some('\\') => lit.push(self.escape()?),
                        Some(c) => lit.push(c),
                    }
                }
                if lit.is_empty() {
                    return Err(self.error("empty terminal literal"));
                }
                Ok(Clause::Terminal(lit))
            }
            Some('(') => {
                self.bump();
                let inner = self.alternation()?;
                self.skip_trivia();
                self.expect(')')?;
                Ok(inner)
            }
            Some('[') => self.char_set(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                Ok(Clause::Nonterminal(self.ident().unwrap()))
            }
            Some(c) => Err(self.error(format!("unexpected `{c}`"))),
            None => Err(self.error("unexpected end of grammar")),
        }
    }

    fn escape(&mut self) -> Result<char, GrammarError> {
        match text::read_escape(&mut || self.bump()) {
            Escape::Char(c) => Ok(c),
            Escape::Invalid(msg) => Err(self.error(msg)),
        }
    }

    fn set_char(&mut self) -> Result<char, GrammarError> {
        match self.bump() {
            None => Err(self.error("unterminated character set")),
            Some('\\') => self.escape(),
            Some(c) => Ok(c),
        }
    }

    fn char_set(&mut self) -> Result<Clause, GrammarError> {
        let start = self.pos();
        self.bump();
        let negated = if self.peek() == Some('^') {
            self.bump();
            true
        } else {
            false
        };
        let mut ranges = Vec::new();
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated character set")),
                Some(']') => {
                    self.bump();
                    break;
                }
                _ => {}
            }
            let pos = self.pos();
            let lo = self.set_char()?;
            let is_range = self.peek() == Some('-')
                && self.chars.get(self.at + 1).is_some_and(|&c| c != ']');
            if is_range {
                self.bump();
                let hi = self.set_char()?;
                if lo > hi {
                    return Err(GrammarError::BadCharRange { pos, lo, hi });
                }
                ranges.push((lo, hi));
            } else {
                ranges.push((lo, lo));
            }
        }
        let set = CharSet { ranges, negated };
        if set.members().is_empty() {
            return Err(GrammarError::EmptyCharSet { pos: start });
        }
        Ok(Clause::CharSet(set))
    }
}

impl fmt::Display for CharSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        if self.negated {
            f.write_str("^")?;
        }
        for &(lo, hi) in &self.ranges {
            f.write_str(&text::escape_set_char(lo))?;
            if lo != hi {
                write!(f, "-{}", text::escape_set_char(hi))?;
            }
        }
        f.write_str("]")
    }
}

impl Clause {
    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, wrap: bool) -> fmt::Result {
        if wrap {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }

    fn is_compound(&self) -> bool {
        matches!(self, Clause::Alt(_) | Clause::Concat(_))
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clause::Terminal(s) => f.write_str(&text::quote(s)),
            Clause::Nonterminal(n) => f.write_str(n),
            Clause::CharSet(set) => write!(f, "{set}"),
            Clause::Concat(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    p.fmt_child(f, p.is_compound())?;
                }
                Ok(())
            }
            Clause::Alt(choices) => {
                for (i, c) in choices.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    c.fmt_child(f, matches!(c, Clause::Alt(_)))?;
                }
                Ok(())
            }
            Clause::Star(b) => {
                b.fmt_child(f, b.is_compound())?;
                f.write_str("*")
            }
            Clause::Plus(b) => {
                b.fmt_child(f, b.is_compound())?;
                f.write_str("+")
            }
            Clause::Opt(b) => {
                b.fmt_child(f, b.is_compound())?;
                f.write_str("?")
            }
            Clause::RepeatExact(b, k) => {
                b.fmt_child(f, b.is_compound())?;
                write!(f, "{{{k}}}")
            }
            Clause::RepeatRange(b, k1, k2) => {
                b.fmt_child(f, b.is_compound())?;
                write!(f, "{{{k1},{k2}}}")
            }
        }
    }
}

impl fmt::Display for Grammar {
    /// Prints the rule block, one rule per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, clause) in &self.rules {
            writeln!(f, "{name}: {clause};")?;
        }
        Ok(())
    }
}
