//! Selector paths over derivation trees.
//!
//! A path is a chain of selectors evaluated left to right starting from the
//! root: `.A[k]` picks the k-th direct child labeled `A` (1-based), `.A`
//! all direct `A` children and `..A` all `A`-labeled descendants (the node
//! itself excluded). Results are reported once per distinct node, in
//! pre-order.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::cfg::CoreCfg;
use crate::parse::DerivationTree;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Selector {
    Child(String, usize),
    ChildAll(String),
    DescendantAll(String),
}

impl Selector {
    pub fn label(&self) -> &str {
        match self {
            Selector::Child(l, _) | Selector::ChildAll(l) | Selector::DescendantAll(l) => l,
        }
    }
}

/// A selector chain bound to the language it is interpreted against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XPath {
    pub lang: String,
    pub selectors: Vec<Selector>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum XPathError {
    #[error("bad xpath `{text}` at offset {offset}: {msg}")]
    Syntax {
        text: String,
        offset: usize,
        msg: String,
    },
    #[error("`{label}` is not a nonterminal of `{lang}`")]
    UnknownLabel { lang: String, label: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectError {
    #[error("xpath `{path}` selects nothing")]
    NoMatch { path: String },
    #[error("xpath `{path}` selects {count} nodes, expected exactly one")]
    AmbiguousMatch { path: String, count: usize },
}

/// Parse a selector chain without checking labels.
pub fn parse_selectors(text: &str) -> Result<Vec<Selector>, XPathError> {
    let chars: Vec<char> = text.chars().collect();
    let err = |offset: usize, msg: &str| XPathError::Syntax {
        text: text.to_string(),
        offset,
        msg: msg.to_string(),
    };
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        if chars[i] != '.' {
            return Err(err(i, "expected `.` or `..`"));
        }
        let descendant = chars.get(i + 1) == Some(&'.');
        i += if descendant { 2 } else { 1 };
        let start = i;
        while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
            i += 1;
        }
        if start == i || chars[start].is_ascii_digit() {
            return Err(err(start, "expected a label"));
        }
        let label: String = chars[start..i].iter().collect();
        if chars.get(i) == Some(&'[') {
            if descendant {
                return Err(err(i, "an index is only allowed on `.A[k]`"));
            }
            let num_start = i + 1;
            let mut j = num_start;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if chars.get(j) != Some(&']') || j == num_start {
                return Err(err(num_start, "expected `[k]` with a positive index"));
            }
            let digits: String = chars[num_start..j].iter().collect();
            let k: usize = digits
                .parse()
                .map_err(|_| err(num_start, "index out of range"))?;
            if k == 0 {
                return Err(err(num_start, "indices start at 1"));
            }
            out.push(Selector::Child(label, k));
            i = j + 1;
        } else if descendant {
            out.push(Selector::DescendantAll(label));
        } else {
            out.push(Selector::ChildAll(label));
        }
    }
    if out.is_empty() {
        return Err(err(0, "empty xpath"));
    }
    Ok(out)
}

/// Check every label of `selectors` against the grammar.
pub fn validate_labels(cfg: &CoreCfg, selectors: &[Selector]) -> Result<(), XPathError> {
    for s in selectors {
        if !cfg.has_label(s.label()) {
            return Err(XPathError::UnknownLabel {
                lang: cfg.name().to_string(),
                label: s.label().to_string(),
            });
        }
    }
    Ok(())
}

/// Parse `text` as a path over the language of `cfg`.
pub fn parse_xpath(cfg: &CoreCfg, text: &str) -> Result<XPath, XPathError> {
    let selectors = parse_selectors(text)?;
    validate_labels(cfg, &selectors)?;
    Ok(XPath {
        lang: cfg.name().to_string(),
        selectors,
    })
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Child(l, k) => write!(f, ".{l}[{k}]"),
            Selector::ChildAll(l) => write!(f, ".{l}"),
            Selector::DescendantAll(l) => write!(f, "..{l}"),
        }
    }
}

/// Writes the selector chain, e.g. `.A[1]..B.C`.
pub fn display_selectors(selectors: &[Selector]) -> String {
    selectors.iter().map(ToString::to_string).collect()
}

impl fmt::Display for XPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&display_selectors(&self.selectors))
    }
}

/// Flattened pre-order view of a tree.
struct Flat<'t> {
    nodes: Vec<&'t DerivationTree>,
    children: Vec<Vec<usize>>,
    /// One past the last pre-order index inside each node's subtree.
    subtree_end: Vec<usize>,
}

impl<'t> Flat<'t> {
    fn new(root: &'t DerivationTree) -> Self {
        let mut flat = Flat {
            nodes: Vec::new(),
            children: Vec::new(),
            subtree_end: Vec::new(),
        };
        flat.visit(root);
        flat
    }

    fn visit(&mut self, node: &'t DerivationTree) -> usize {
        let id = self.nodes.len();
        self.nodes.push(node);
        self.children.push(Vec::new());
        self.subtree_end.push(0);
        for c in &node.children {
            let cid = self.visit(c);
            self.children[id].push(cid);
        }
        self.subtree_end[id] = self.nodes.len();
        id
    }

    fn has_label(&self, id: usize, label: &str) -> bool {
        self.nodes[id].label.as_deref() == Some(label)
    }
}

fn matching_nodes<'t>(tree: &'t DerivationTree, selectors: &[Selector]) -> Vec<&'t DerivationTree> {
    let flat = Flat::new(tree);
    let mut current: BTreeSet<usize> = BTreeSet::from([0]);
    for sel in selectors {
        let mut next = BTreeSet::new();
        for &n in &current {
            match sel {
                Selector::Child(label, k) => {
                    if let Some(&c) = flat.children[n]
                        .iter()
                        .filter(|&&c| flat.has_label(c, label))
                        .nth(k - 1)
                    {
                        next.insert(c);
                    }
                }
                Selector::ChildAll(label) => {
                    next.extend(flat.children[n].iter().copied().filter(|&c| flat.has_label(c, label)));
                }
                Selector::DescendantAll(label) => {
                    next.extend((n + 1..flat.subtree_end[n]).filter(|&d| flat.has_label(d, label)));
                }
            }
        }
        current = next;
    }
    current.into_iter().map(|id| flat.nodes[id]).collect()
}

/// Yields of every node selected by `path`, in document order.
pub fn select_all(tree: &DerivationTree, path: &XPath) -> Vec<String> {
    select_all_selectors(tree, &path.selectors)
}

pub fn select_all_selectors(tree: &DerivationTree, selectors: &[Selector]) -> Vec<String> {
    matching_nodes(tree, selectors)
        .into_iter()
        .map(DerivationTree::yield_text)
        .collect()
}

/// The yield of the single node selected by `path`.
pub fn select_unique(tree: &DerivationTree, path: &XPath) -> Result<String, SelectError> {
    select_unique_selectors(tree, &path.selectors)
}

pub fn select_unique_selectors(
    tree: &DerivationTree,
    selectors: &[Selector],
) -> Result<String, SelectError> {
    let nodes = matching_nodes(tree, selectors);
    match nodes.len() {
        0 => Err(SelectError::NoMatch {
            path: display_selectors(selectors),
        }),
        1 => Ok(nodes[0].yield_text()),
        count => Err(SelectError::AmbiguousMatch {
            path: display_selectors(selectors),
            count,
        }),
    }
}
