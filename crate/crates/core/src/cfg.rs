//! Plain context-free grammars obtained by lowering the EBNF notation.
//!
//! Every EBNF operator is replaced by a fresh, unlabeled nonterminal:
//!
//! | clause          | lowering                                  |
//! |-----------------|-------------------------------------------|
//! | `a*`            | `N ::= ε \| a N`                          |
//! | `a+`            | `N ::= a \| a N`                          |
//! | `a?`            | `N ::= ε \| a`                            |
//! | `a{k}`          | `a` repeated `k` times inline             |
//! | `a{k1,k2}`      | `N ::= a^k1 \| a^(k1+1) \| ... \| a^k2`   |
//! | `(a \| b)`      | `N ::= a \| b`                            |
//!
//! Imported language types are inlined: their rules are copied in under
//! mangled internal names, the imported start rule is labeled with the
//! language name and the other rules keep their own names as labels.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::grammar::{CharSet, Clause, Grammar, GrammarError, START};

pub type NtId = usize;

/// A char class as sorted, disjoint, inclusive codepoint ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharClass {
    ranges: Vec<(u32, u32)>,
    size: u64,
}

impl CharClass {
    pub fn new(set: &CharSet) -> Self {
        let ranges = set.members();
        let size = ranges.iter().map(|&(lo, hi)| (hi - lo) as u64 + 1).sum();
        CharClass { ranges, size }
    }

    pub fn contains(&self, c: char) -> bool {
        let c = c as u32;
        match self.ranges.binary_search_by(|&(lo, _)| lo.cmp(&c)) {
            Ok(_) => true,
            Err(0) => false,
            Err(i) => c <= self.ranges[i - 1].1,
        }
    }

    /// Number of member codepoints (surrogates included in the count are
    /// skipped when sampling).
    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn ranges(&self) -> &[(u32, u32)] {
        &self.ranges
    }

    /// The `index`-th member in codepoint order.
    pub fn nth(&self, mut index: u64) -> Option<char> {
        for &(lo, hi) in &self.ranges {
            let len = (hi - lo) as u64 + 1;
            if index < len {
                return char::from_u32(lo + index as u32);
            }
            index -= len;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Atom {
    Literal(Box<[char]>),
    Class(CharClass),
    Nonterminal(NtId),
}

/// Where a nonterminal came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    /// A rule written in grammar `lang`.
    Rule { lang: String, rule: String },
    /// Introduced while lowering `clause`, inside rule `rule` of `lang`.
    Synthesized {
        lang: String,
        rule: String,
        clause: Clause,
    },
}

#[derive(Debug, Clone)]
pub struct Nonterminal {
    /// Unique internal name.
    pub name: String,
    /// Label shown in derivation trees; `None` for synthesized helpers,
    /// which are spliced out of trees.
    pub label: Option<String>,
    pub alternatives: Vec<Vec<Atom>>,
    pub origin: Origin,
}

#[derive(Debug, Clone)]
pub struct CoreCfg {
    name: String,
    nonterminals: Vec<Nonterminal>,
    start: NtId,
    min_depth: Vec<u32>,
    alt_min_depth: Vec<Vec<u32>>,
    nullable: Vec<bool>,
}

impl CoreCfg {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn start(&self) -> NtId {
        self.start
    }

    pub fn nonterminals(&self) -> &[Nonterminal] {
        &self.nonterminals
    }

    pub fn nonterminal(&self, id: NtId) -> &Nonterminal {
        &self.nonterminals[id]
    }

    /// Minimal derivation height of each nonterminal.
    pub fn min_depth(&self, id: NtId) -> u32 {
        self.min_depth[id]
    }

    /// Minimal derivation height of a nonterminal when it expands through
    /// alternative `alt`.
    pub fn alt_min_depth(&self, id: NtId, alt: usize) -> u32 {
        self.alt_min_depth[id][alt]
    }

    pub fn nullable(&self, id: NtId) -> bool {
        self.nullable[id]
    }

    /// Every label that can appear in a derivation tree, sorted.
    pub fn labels(&self) -> Vec<&str> {
        let mut labels: Vec<&str> = self
            .nonterminals
            .iter()
            .filter_map(|n| n.label.as_deref())
            .collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.nonterminals
            .iter()
            .any(|n| n.label.as_deref() == Some(label))
    }

    /// Total number of atoms over all alternatives.
    pub fn size(&self) -> usize {
        self.nonterminals
            .iter()
            .flat_map(|n| n.alternatives.iter())
            .map(|alt| alt.len().max(1))
            .sum()
    }
}

/// Lower `g` (and everything it imports from `registry`) into a [`CoreCfg`].
pub fn desugar(g: &Grammar, registry: &BTreeMap<String, Grammar>) -> Result<CoreCfg, GrammarError> {
    let mut lowering = Lowering {
        main: g,
        registry,
        nts: Vec::new(),
        index: HashMap::new(),
        pending: VecDeque::new(),
    };
    let start = lowering.intern(&g.name, START)?;
    while let Some((id, lang, rule)) = lowering.pending.pop_front() {
        let grammar = lowering.grammar(&lang);
        let clause = grammar.rules[rule.as_str()].clone();
        let alternatives = lowering.alternatives(&lang, &rule, &clause)?;
        lowering.nts[id].alternatives = alternatives;
    }
    let nonterminals = lowering.nts;
    let (min_depth, alt_min_depth) = compute_min_depth(&nonterminals)?;
    let nullable = compute_nullable(&nonterminals);
    Ok(CoreCfg {
        name: g.name.clone(),
        nonterminals,
        start,
        min_depth,
        alt_min_depth,
        nullable,
    })
}

struct Lowering<'a> {
    main: &'a Grammar,
    registry: &'a BTreeMap<String, Grammar>,
    nts: Vec<Nonterminal>,
    index: HashMap<(String, String), NtId>,
    pending: VecDeque<(NtId, String, String)>,
}

impl<'a> Lowering<'a> {
    fn grammar(&self, lang: &str) -> &'a Grammar {
        if lang == self.main.name {
            self.main
        } else {
            &self.registry[lang]
        }
    }

    fn intern(&mut self, lang: &str, rule: &str) -> Result<NtId, GrammarError> {
        let key = (lang.to_string(), rule.to_string());
        if let Some(&id) = self.index.get(&key) {
            return Ok(id);
        }
        let is_main = lang == self.main.name;
        let (name, label) = if is_main {
            (rule.to_string(), rule.to_string())
        } else if rule == START {
            (format!("{lang}.{rule}"), lang.to_string())
        } else {
            (format!("{lang}.{rule}"), rule.to_string())
        };
        let id = self.nts.len();
        self.nts.push(Nonterminal {
            name,
            label: Some(label),
            alternatives: Vec::new(),
            origin: Origin::Rule {
                lang: lang.to_string(),
                rule: rule.to_string(),
            },
        });
        self.index.insert(key, id);
        self.pending.push_back((id, lang.to_string(), rule.to_string()));
        Ok(id)
    }

    /// Resolve a nonterminal reference made inside grammar `lang`.
    fn reference(&mut self, lang: &str, rule: &str, name: &str) -> Result<NtId, GrammarError> {
        let grammar = self.grammar(lang);
        if grammar.rules.contains_key(name) {
            self.intern(lang, name)
        } else if self.registry.contains_key(name) && name != self.main.name {
            self.intern(name, START)
        } else {
            Err(GrammarError::UndefinedNonterminal {
                grammar: lang.to_string(),
                rule: rule.to_string(),
                name: name.to_string(),
            })
        }
    }

    fn fresh(&mut self, lang: &str, rule: &str, clause: &Clause) -> NtId {
        let id = self.nts.len();
        let prefix = if lang == self.main.name {
            rule.to_string()
        } else {
            format!("{lang}.{rule}")
        };
        self.nts.push(Nonterminal {
            name: format!("{prefix}~{id}"),
            label: None,
            alternatives: Vec::new(),
            origin: Origin::Synthesized {
                lang: lang.to_string(),
                rule: rule.to_string(),
                clause: clause.clone(),
            },
        });
        id
    }

    fn alternatives(
        &mut self,
        lang: &str,
        rule: &str,
        clause: &Clause,
    ) -> Result<Vec<Vec<Atom>>, GrammarError> {
        match clause {
            Clause::Alt(choices) => choices
                .iter()
                .map(|c| self.sequence(lang, rule, c))
                .collect(),
            other => Ok(vec![self.sequence(lang, rule, other)?]),
        }
    }

    fn sequence(&mut self, lang: &str, rule: &str, clause: &Clause) -> Result<Vec<Atom>, GrammarError> {
        let mut out = Vec::new();
        self.lower_into(lang, rule, clause, &mut out)?;
        Ok(out)
    }

    fn lower_into(
        &mut self,
        lang: &str,
        rule: &str,
        clause: &Clause,
        out: &mut Vec<Atom>,
    ) -> Result<(), GrammarError> {
        match clause {
            Clause::Terminal(s) => out.push(Atom::Literal(s.chars().collect())),
            Clause::CharSet(set) => out.push(Atom::Class(CharClass::new(set))),
            Clause::Nonterminal(n) => {
                let id = self.reference(lang, rule, n)?;
                out.push(Atom::Nonterminal(id));
            }
            Clause::Concat(parts) => {
                for p in parts {
                    self.lower_into(lang, rule, p, out)?;
                }
            }
            Clause::RepeatExact(body, k) => {
                let body = self.sequence(lang, rule, body)?;
                for _ in 0..*k {
                    out.extend(body.iter().cloned());
                }
            }
            Clause::Alt(_)
            | Clause::Star(_)
            | Clause::Plus(_)
            | Clause::Opt(_)
            | Clause::RepeatRange(..) => {
                let id = self.fresh(lang, rule, clause);
                let alts = match clause {
                    Clause::Alt(_) => self.alternatives(lang, rule, clause)?,
                    Clause::Star(body) => {
                        let mut rec = self.sequence(lang, rule, body)?;
                        rec.push(Atom::Nonterminal(id));
                        vec![Vec::new(), rec]
                    }
                    Clause::Plus(body) => {
                        let once = self.sequence(lang, rule, body)?;
                        let mut rec = once.clone();
                        rec.push(Atom::Nonterminal(id));
                        vec![once, rec]
                    }
                    Clause::Opt(body) => vec![Vec::new(), self.sequence(lang, rule, body)?],
                    Clause::RepeatRange(body, k1, k2) => {
                        let once = self.sequence(lang, rule, body)?;
                        (*k1..=*k2)
                            .map(|n| {
                                let mut alt = Vec::with_capacity(once.len() * n as usize);
                                for _ in 0..n {
                                    alt.extend(once.iter().cloned());
                                }
                                alt
                            })
                            .collect()
                    }
                    _ => unreachable!(),
                };
                self.nts[id].alternatives = alts;
                out.push(Atom::Nonterminal(id));
            }
        }
        Ok(())
    }
}

fn alt_depth(alt: &[Atom], depth: &[u32]) -> u32 {
    let mut d = 0u32;
    for atom in alt {
        if let Atom::Nonterminal(n) = atom {
            d = d.max(depth[*n]);
        }
    }
    d.saturating_add(1)
}

/// Least fixed point of `depth(n) = min over alts (1 + max child depth)`.
fn compute_min_depth(nts: &[Nonterminal]) -> Result<(Vec<u32>, Vec<Vec<u32>>), GrammarError> {
    let mut depth = vec![u32::MAX; nts.len()];
    let mut changed = true;
    while changed {
        changed = false;
        for (id, nt) in nts.iter().enumerate() {
            for alt in &nt.alternatives {
                let d = alt_depth(alt, &depth);
                if d < depth[id] {
                    depth[id] = d;
                    changed = true;
                }
            }
        }
    }
    let stuck: Vec<String> = nts
        .iter()
        .zip(&depth)
        .filter(|(_, d)| **d == u32::MAX)
        .map(|(n, _)| n.name.clone())
        .collect();
    if !stuck.is_empty() {
        return Err(GrammarError::NonProductive(stuck));
    }
    let alt_depths = nts
        .iter()
        .map(|nt| nt.alternatives.iter().map(|a| alt_depth(a, &depth)).collect())
        .collect();
    Ok((depth, alt_depths))
}

fn compute_nullable(nts: &[Nonterminal]) -> Vec<bool> {
    let mut nullable = vec![false; nts.len()];
    let mut changed = true;
    while changed {
        changed = false;
        for (id, nt) in nts.iter().enumerate() {
            if nullable[id] {
                continue;
            }
            let derives_empty = nt.alternatives.iter().any(|alt| {
                alt.iter().all(|a| match a {
                    Atom::Nonterminal(n) => nullable[*n],
                    _ => false,
                })
            });
            if derives_empty {
                nullable[id] = true;
                changed = true;
            }
        }
    }
    nullable
}
