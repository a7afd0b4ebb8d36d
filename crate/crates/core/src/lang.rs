//! Registry of language types: grammar sources plus their desugared form.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::cfg::{desugar, CoreCfg};
use crate::grammar::{parse_grammar, Grammar, GrammarError};

pub const HOST: &str = r#"
start: label ("." label)*;
label: [a-zA-Z0-9]+;
"#;

pub const URL: &str = r#"
start: scheme "://" host path?;
scheme: "http" | "https" | "ftp";
host: Host;
path: "/" | ("/" segment)+ "/"?;
segment: [a-zA-Z0-9._~\-]+;
"#;

pub const REL_PATH: &str = r#"
start: (part "/")*;
part: "foo" | ".." | ".";
"#;

pub const INT_EXP: &str = r#"
start: (number op)* number;
number: [0-9]+;
op: "+" | "-";
"#;

pub const TEAM_NAME_FORMAT: &str = r#"
start: char{1,20};
char: [a-zA-Z0-9-_ ];
"#;

pub const JSON: &str = r#"
start: ws value ws;
value: object | array | string | number | "true" | "false" | "null";
object: "{" ws "}" | "{" members "}";
members: member ("," member)*;
member: ws string ws ":" element;
array: "[" ws "]" | "[" elements "]";
elements: element ("," element)*;
element: ws value ws;
string: "\"" char* "\"";
char: [^\"\\\x00-\x1f] | "\\" escape;
escape: [\"\\/bfnrt] | "u" hex{4};
hex: [0-9a-fA-F];
number: "-"? int frac? exp?;
int: "0" | [1-9] [0-9]*;
frac: "." [0-9]+;
exp: [eE] [+\-]? [0-9]+;
ws: [ \t\n\r]*;
"#;

/// Built-in language types in definition order (imports come first).
pub const BUILTINS: &[(&str, &str)] = &[
    ("Host", HOST),
    ("URL", URL),
    ("RelPath", REL_PATH),
    ("IntExp", INT_EXP),
    ("TeamNameFormat", TEAM_NAME_FORMAT),
    ("JSON", JSON),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("language `{0}` is already defined")]
    Duplicate(String),
    #[error("in language `{lang}`: {source}")]
    Grammar {
        lang: String,
        #[source]
        source: GrammarError,
    },
}

#[derive(Debug, Clone, Default)]
pub struct LangRegistry {
    grammars: BTreeMap<String, Grammar>,
    cfgs: BTreeMap<String, Arc<CoreCfg>>,
}

impl LangRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// A registry preloaded with the built-in language types.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        for (name, source) in BUILTINS {
            reg.define(name, source).expect("built-in grammars are valid");
        }
        reg
    }

    /// Parse `source` as the grammar of a new language `name`.
    pub fn define(&mut self, name: &str, source: &str) -> Result<(), LangError> {
        if self.contains(name) {
            return Err(LangError::Duplicate(name.to_string()));
        }
        let g = parse_grammar(name, source, &self.grammars).map_err(|source| LangError::Grammar {
            lang: name.to_string(),
            source,
        })?;
        self.insert(g)
    }

    /// Register an already parsed grammar, resolving its imports first.
    pub fn insert(&mut self, mut g: Grammar) -> Result<(), LangError> {
        let name = g.name.clone();
        if self.contains(&name) {
            return Err(LangError::Duplicate(name));
        }
        let wrap = |source| LangError::Grammar {
            lang: name.clone(),
            source,
        };
        g.resolve_imports(&self.grammars).map_err(wrap)?;
        let cfg = desugar(&g, &self.grammars).map_err(wrap)?;
        self.cfgs.insert(name.clone(), Arc::new(cfg));
        self.grammars.insert(name, g);
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.grammars.contains_key(name)
    }

    pub fn cfg(&self, name: &str) -> Option<&Arc<CoreCfg>> {
        self.cfgs.get(name)
    }

    pub fn grammar(&self, name: &str) -> Option<&Grammar> {
        self.grammars.get(name)
    }

    pub fn grammars(&self) -> &BTreeMap<String, Grammar> {
        &self.grammars
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.grammars.keys().map(String::as_str)
    }
}
