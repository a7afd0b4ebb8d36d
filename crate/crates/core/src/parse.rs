//! Earley recognition and derivation-tree construction over a [`CoreCfg`].
//!
//! Positions are offsets in Unicode scalar values. Nullable nonterminals are
//! handled by advancing over them at prediction time (Aycock–Horspool), so
//! left recursion, ε-rules and ambiguity are all accepted.
//!
//! When a string has several derivations the tree is chosen top-down: the
//! lowest-indexed alternative that can span the node wins, and within it the
//! children are split leftmost-longest. Helper nonterminals introduced by
//! desugaring are spliced out so labels match the written grammar.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;
use thiserror::Error;

use crate::cfg::{Atom, CoreCfg, NtId};

/// A labeled parse tree. Leaves are terminals and carry their text; inner
/// nodes carry a nonterminal label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationTree {
    /// Nonterminal label, or `None` for a terminal leaf.
    pub label: Option<String>,
    /// Half-open `[start, end)` span in scalar values.
    pub span: (usize, usize),
    pub children: Vec<DerivationTree>,
    /// The matched text of a terminal leaf; empty for inner nodes.
    pub text: String,
}

impl DerivationTree {
    pub fn is_leaf(&self) -> bool {
        self.label.is_none()
    }

    /// Concatenated text of all leaves below this node.
    pub fn yield_text(&self) -> String {
        let mut out = String::new();
        self.push_yield(&mut out);
        out
    }

    fn push_yield(&self, out: &mut String) {
        if self.is_leaf() {
            out.push_str(&self.text);
        } else {
            for c in &self.children {
                c.push_yield(out);
            }
        }
    }

    /// All nodes in pre-order.
    pub fn preorder(&self) -> Vec<&DerivationTree> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("tree serialization is infallible")
    }
}

impl Serialize for DerivationTree {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("DerivationTree", 3)?;
        st.serialize_field("label", &self.label)?;
        st.serialize_field("span", &[self.span.0, self.span.1])?;
        if self.is_leaf() {
            st.serialize_field("text", &self.text)?;
        } else {
            st.serialize_field("children", &self.children)?;
        }
        st.end()
    }
}

impl fmt::Display for DerivationTree {
    /// Bracketed form, e.g. `(start (host "W"))`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            None => f.write_str(&crate::text::quote(&self.text)),
            Some(label) => {
                write!(f, "({label}")?;
                for c in &self.children {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("string is not in language `{lang}`: parsing fails at offset {} (of {len})", .offset + 1)]
pub struct NotInLanguage {
    pub lang: String,
    /// Length of the longest prefix that is still a viable prefix of some
    /// sentence, i.e. the 0-based offset of the first offending character
    /// (equal to the input length when the input ends too early).
    pub offset: usize,
    pub len: usize,
}

pub fn recognize(cfg: &CoreCfg, s: &str) -> bool {
    let input: Vec<char> = s.chars().collect();
    Chart::run(cfg, &input).accepts()
}

pub fn parse_tree(cfg: &CoreCfg, s: &str) -> Result<DerivationTree, NotInLanguage> {
    let input: Vec<char> = s.chars().collect();
    let chart = Chart::run(cfg, &input);
    if !chart.accepts() {
        return Err(NotInLanguage {
            lang: cfg.name().to_string(),
            offset: chart.furthest,
            len: input.len(),
        });
    }
    let mut builder = TreeBuilder {
        cfg,
        input: &input,
        chart: &chart,
        feasible: HashMap::new(),
        active: HashSet::new(),
    };
    let n = input.len();
    let children = builder
        .node(cfg.start(), 0, n)
        .expect("accepted input always has a derivation");
    Ok(builder.wrap(cfg.start(), 0, n, children).remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Item {
    nt: u32,
    alt: u32,
    dot: u32,
    origin: u32,
}

struct Chart<'c> {
    cfg: &'c CoreCfg,
    sets: Vec<Vec<Item>>,
    seen: Vec<HashSet<Item>>,
    /// Items whose next atom is a given nonterminal, per position.
    waiting: Vec<HashMap<u32, Vec<Item>>>,
    /// Completed spans: (nonterminal, start) -> ends.
    completed: HashMap<(u32, u32), Vec<u32>>,
    furthest: usize,
    len: usize,
}

impl<'c> Chart<'c> {
    fn run(cfg: &'c CoreCfg, input: &[char]) -> Self {
        let n = input.len();
        let mut chart = Chart {
            cfg,
            sets: vec![Vec::new(); n + 1],
            seen: vec![HashSet::new(); n + 1],
            waiting: vec![HashMap::new(); n + 1],
            completed: HashMap::new(),
            furthest: 0,
            len: n,
        };
        let start = cfg.start();
        for alt in 0..cfg.nonterminal(start).alternatives.len() {
            chart.add(0, Item {
                nt: start as u32,
                alt: alt as u32,
                dot: 0,
                origin: 0,
            });
        }
        for pos in 0..=n {
            if chart.sets[pos].is_empty() {
                continue;
            }
            chart.furthest = pos;
            let mut i = 0;
            while i < chart.sets[pos].len() {
                let item = chart.sets[pos][i];
                chart.process(pos, item, input);
                i += 1;
            }
        }
        chart
    }

    fn atoms(&self, item: &Item) -> &'c [Atom] {
        &self.cfg.nonterminal(item.nt as usize).alternatives[item.alt as usize]
    }

    fn add(&mut self, pos: usize, item: Item) {
        if self.seen[pos].insert(item) {
            if let Some(Atom::Nonterminal(m)) = self.atoms(&item).get(item.dot as usize) {
                self.waiting[pos].entry(*m as u32).or_default().push(item);
            }
            self.sets[pos].push(item);
        }
    }

    fn advance(item: Item) -> Item {
        Item {
            dot: item.dot + 1,
            ..item
        }
    }

    fn process(&mut self, pos: usize, item: Item, input: &[char]) {
        let atoms = self.atoms(&item);
        match atoms.get(item.dot as usize) {
            None => {
                let key = (item.nt, item.origin);
                let ends = self.completed.entry(key).or_default();
                if !ends.contains(&(pos as u32)) {
                    ends.push(pos as u32);
                }
                let parents = self.waiting[item.origin as usize]
                    .get(&item.nt)
                    .cloned()
                    .unwrap_or_default();
                for parent in parents {
                    self.add(pos, Self::advance(parent));
                }
            }
            Some(Atom::Nonterminal(m)) => {
                let m = *m;
                for alt in 0..self.cfg.nonterminal(m).alternatives.len() {
                    self.add(pos, Item {
                        nt: m as u32,
                        alt: alt as u32,
                        dot: 0,
                        origin: pos as u32,
                    });
                }
                if self.cfg.nullable(m) {
                    self.add(pos, Self::advance(item));
                }
            }
            Some(Atom::Literal(lit)) => {
                let end = pos + lit.len();
                if end <= input.len() && input[pos..end] == lit[..] {
                    self.add(end, Self::advance(item));
                }
            }
            Some(Atom::Class(class)) => {
                if pos < input.len() && class.contains(input[pos]) {
                    self.add(pos + 1, Self::advance(item));
                }
            }
        }
    }

    fn accepts(&self) -> bool {
        self.has_span(self.cfg.start(), 0, self.len)
    }

    fn has_span(&self, nt: NtId, start: usize, end: usize) -> bool {
        self.completed
            .get(&(nt as u32, start as u32))
            .is_some_and(|ends| ends.contains(&(end as u32)))
    }

    /// Ends of completed spans of `nt` starting at `start`, longest first.
    fn ends(&self, nt: NtId, start: usize, limit: usize) -> Vec<usize> {
        let mut ends: Vec<usize> = self
            .completed
            .get(&(nt as u32, start as u32))
            .map(|e| e.iter().map(|&x| x as usize).filter(|&x| x <= limit).collect())
            .unwrap_or_default();
        ends.sort_unstable_by(|a, b| b.cmp(a));
        ends
    }
}

struct TreeBuilder<'a> {
    cfg: &'a CoreCfg,
    input: &'a [char],
    chart: &'a Chart<'a>,
    /// Memo for "atoms[k..] of (nt, alt) can span pos..end".
    feasible: HashMap<(u32, u32, u32, u32, u32), bool>,
    /// Nodes currently under construction; guards against unit cycles.
    active: HashSet<(NtId, usize, usize)>,
}

impl TreeBuilder<'_> {
    fn can(&mut self, nt: NtId, alt: usize, k: usize, pos: usize, end: usize) -> bool {
        let key = (nt as u32, alt as u32, k as u32, pos as u32, end as u32);
        if let Some(&v) = self.feasible.get(&key) {
            return v;
        }
        let atoms = &self.cfg.nonterminal(nt).alternatives[alt];
        let v = match atoms.get(k) {
            None => pos == end,
            Some(Atom::Literal(lit)) => {
                let next = pos + lit.len();
                next <= end && self.input[pos..next] == lit[..] && self.can(nt, alt, k + 1, next, end)
            }
            Some(Atom::Class(class)) => {
                pos < end && class.contains(self.input[pos]) && self.can(nt, alt, k + 1, pos + 1, end)
            }
            Some(Atom::Nonterminal(m)) => {
                let m = *m;
                self.chart
                    .ends(m, pos, end)
                    .into_iter()
                    .any(|e| self.can(nt, alt, k + 1, e, end))
            }
        };
        self.feasible.insert(key, v);
        v
    }

    /// Children of a node for `nt` spanning `start..end`, before wrapping.
    fn node(&mut self, nt: NtId, start: usize, end: usize) -> Option<Vec<DerivationTree>> {
        if !self.active.insert((nt, start, end)) {
            return None;
        }
        let mut result = None;
        for alt in 0..self.cfg.nonterminal(nt).alternatives.len() {
            if !self.can(nt, alt, 0, start, end) {
                continue;
            }
            if let Some(children) = self.split(nt, alt, 0, start, end) {
                result = Some(children);
                break;
            }
        }
        self.active.remove(&(nt, start, end));
        result
    }

    fn split(
        &mut self,
        nt: NtId,
        alt: usize,
        k: usize,
        pos: usize,
        end: usize,
    ) -> Option<Vec<DerivationTree>> {
        let atoms = &self.cfg.nonterminal(nt).alternatives[alt];
        match atoms.get(k) {
            None => (pos == end).then(Vec::new),
            Some(Atom::Literal(lit)) => {
                let next = pos + lit.len();
                let mut rest = self.split(nt, alt, k + 1, next, end)?;
                rest.insert(0, self.leaf(pos, next));
                Some(rest)
            }
            Some(Atom::Class(_)) => {
                let mut rest = self.split(nt, alt, k + 1, pos + 1, end)?;
                rest.insert(0, self.leaf(pos, pos + 1));
                Some(rest)
            }
            Some(Atom::Nonterminal(m)) => {
                let m = *m;
                for e in self.chart.ends(m, pos, end) {
                    if !self.can(nt, alt, k + 1, e, end) {
                        continue;
                    }
                    let Some(children) = self.node(m, pos, e) else {
                        continue;
                    };
                    let Some(rest) = self.split(nt, alt, k + 1, e, end) else {
                        continue;
                    };
                    let mut out = self.wrap(m, pos, e, children);
                    out.extend(rest);
                    return Some(out);
                }
                None
            }
        }
    }

    fn leaf(&self, start: usize, end: usize) -> DerivationTree {
        DerivationTree {
            label: None,
            span: (start, end),
            children: Vec::new(),
            text: self.input[start..end].iter().collect(),
        }
    }

    /// Labeled nonterminals become a node; helpers are spliced away.
    fn wrap(
        &self,
        nt: NtId,
        start: usize,
        end: usize,
        children: Vec<DerivationTree>,
    ) -> Vec<DerivationTree> {
        match &self.cfg.nonterminal(nt).label {
            Some(label) => vec![DerivationTree {
                label: Some(label.clone()),
                span: (start, end),
                children,
                text: String::new(),
            }],
            None => children,
        }
    }
}
