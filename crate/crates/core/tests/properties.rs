use std::collections::{BTreeMap, BTreeSet};

use flat_core::check::erase;
use flat_core::front::{parse_expr, parse_type};
use flat_core::fuzz::{default_max_depth, generate, rng_for};
use flat_core::grammar::{parse_grammar, parse_rules, Clause, Grammar};
use flat_core::interp::{builtin, Value};
use flat_core::parse::{parse_tree, recognize, DerivationTree};
use flat_core::{normalize, LangRegistry, Type};
use proptest::prelude::*;

type Spans = BTreeMap<String, BTreeSet<(usize, usize)>>;

/// End positions of `c` matched from `i`, given the current approximation
/// of every rule's span relation.
fn ends(c: &Clause, s: &[char], i: usize, rules: &Spans) -> BTreeSet<usize> {
    match c {
        Clause::Terminal(t) => {
            let t: Vec<char> = t.chars().collect();
            if s[i..].starts_with(&t) {
                BTreeSet::from([i + t.len()])
            } else {
                BTreeSet::new()
            }
        }
        Clause::CharSet(set) => match s.get(i) {
            Some(&ch) if set.contains(ch) => BTreeSet::from([i + 1]),
            _ => BTreeSet::new(),
        },
        Clause::Nonterminal(n) => rules[n].iter().filter(|(a, _)| *a == i).map(|(_, b)| *b).collect(),
        Clause::Concat(parts) => parts.iter().fold(BTreeSet::from([i]), |acc, p| {
            acc.iter().flat_map(|&j| ends(p, s, j, rules)).collect()
        }),
        Clause::Alt(alts) => alts.iter().flat_map(|a| ends(a, s, i, rules)).collect(),
        Clause::Opt(b) => {
            let mut out = ends(b, s, i, rules);
            out.insert(i);
            out
        }
        Clause::Star(b) => {
            let mut out = BTreeSet::from([i]);
            let mut todo = vec![i];
            while let Some(j) = todo.pop() {
                for k in ends(b, s, j, rules) {
                    if out.insert(k) {
                        todo.push(k);
                    }
                }
            }
            out
        }
        Clause::Plus(b) => ends(b, s, i, rules)
            .into_iter()
            .flat_map(|j| ends(&Clause::Star(b.clone()), s, j, rules))
            .collect(),
        Clause::RepeatExact(b, k) => ends(&Clause::Concat(vec![(**b).clone(); *k as usize]), s, i, rules),
        Clause::RepeatRange(b, lo, hi) => (*lo..=*hi)
            .flat_map(|k| ends(&Clause::RepeatExact(b.clone(), k), s, i, rules))
            .collect(),
    }
}

/// Membership by least fixpoint over the original clauses.
fn oracle_member(g: &Grammar, s: &str) -> bool {
    let s: Vec<char> = s.chars().collect();
    let mut rules: Spans = g.rules.keys().map(|k| (k.clone(), BTreeSet::new())).collect();
    loop {
        let mut changed = false;
        for (name, clause) in &g.rules {
            for i in 0..=s.len() {
                for j in ends(clause, &s, i, &rules) {
                    changed |= rules.get_mut(name).unwrap().insert((i, j));
                }
            }
        }
        if !changed {
            break;
        }
    }
    rules["start"].contains(&(0, s.len()))
}

fn clause_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("\"a\"".to_string()),
        Just("\"b\"".to_string()),
        Just("\"ab\"".to_string()),
        Just("[a]".to_string()),
        Just("[a-b]".to_string()),
        Just("[^b]".to_string()),
        Just("start".to_string()),
        Just("r1".to_string()),
        Just("r2".to_string()),
    ];
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=3).prop_map(|v| format!("({})", v.join(" "))),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(|v| format!("({})", v.join(" | "))),
            inner.clone().prop_map(|c| format!("({c})*")),
            inner.clone().prop_map(|c| format!("({c})+")),
            inner.clone().prop_map(|c| format!("({c})?")),
            inner.clone().prop_map(|c| format!("({c}){{2}}")),
            inner.prop_map(|c| format!("({c}){{1,3}}")),
        ]
    })
}

fn grammar_text() -> impl Strategy<Value = String> {
    (clause_text(), clause_text(), clause_text())
        .prop_map(|(a, b, c)| format!("start: {a};\nr1: {b} | \"b\";\nr2: {c} | \"a\";\n"))
}

fn words(max: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..max {
        layer = layer
            .iter()
            .flat_map(|w| [format!("{w}a"), format!("{w}b")])
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

fn check_tree(t: &DerivationTree, s: &[char], labels: &BTreeSet<&str>) {
    assert_eq!(t.yield_text(), s[t.span.0..t.span.1].iter().collect::<String>());
    if let Some(l) = &t.label {
        assert!(labels.contains(l.as_str()), "synthesized label {l}");
    }
    let mut at = t.span.0;
    for c in &t.children {
        assert_eq!(c.span.0, at);
        at = c.span.1;
        check_tree(c, s, labels);
    }
    if !t.children.is_empty() {
        assert_eq!(at, t.span.1);
    }
}

fn type_text() -> impl Strategy<Value = String> {
    let base = prop_oneof![
        Just("Int".to_string()),
        Just("String".to_string()),
        Just("Bool".to_string()),
        Just("URL".to_string()),
        Just("Host".to_string()),
    ];
    base.prop_recursive(3, 6, 1, |inner| {
        (inner, prop::sample::select(vec!["x", "y", "s", "_"]), prop::sample::select(vec!["true", "x == x", "y != 1"]))
            .prop_map(|(t, b, p)| {
                if b == "_" {
                    format!("{{{t} | {p}}}")
                } else {
                    format!("{{{b}: {t} | {p}}}")
                }
            })
    })
}

fn expr_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (-20i64..20).prop_map(|n| n.to_string()),
        Just("true".to_string()),
        Just("x".to_string()),
        Just("s".to_string()),
        Just("\"a\\\"b\\n\"".to_string()),
        Just("\"\"".to_string()),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        let binop = prop::sample::select(vec!["+", "-", "*", "<", "<=", "==", "!=", "&&", "||", "%"]);
        prop_oneof![
            (inner.clone(), binop, inner.clone()).prop_map(|(a, o, b)| format!("({a} {o} {b})")),
            inner.clone().prop_map(|a| format!("!{a}")),
            inner.clone().prop_map(|a| format!("-{a}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("substr({a}, {b}, 1)")),
            inner.clone().prop_map(|a| format!("({a} in URL)")),
            inner.clone().prop_map(|a| format!("((x) -> {a})(1)")),
            inner.prop_map(|a| format!("({a})[.A[2]..B]")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn desugaring_preserves_membership(src in grammar_text()) {
        let g = parse_grammar("G", &src, &BTreeMap::new()).unwrap();
        let cfg = flat_core::cfg::desugar(&g, &BTreeMap::new());
        prop_assume!(cfg.is_ok());
        let cfg = cfg.unwrap();
        for w in words(5) {
            prop_assert_eq!(recognize(&cfg, &w), oracle_member(&g, &w), "{:?} on {}", w, src);
        }
    }

    #[test]
    fn grammar_print_reparse(src in grammar_text()) {
        let g = parse_rules("G", &src).unwrap();
        let again = parse_rules("G", &g.to_string()).unwrap();
        prop_assert_eq!(g.rules, again.rules);
    }

    #[test]
    fn recognize_agrees_with_parse_tree(src in grammar_text()) {
        let g = parse_grammar("G", &src, &BTreeMap::new()).unwrap();
        let Ok(cfg) = flat_core::cfg::desugar(&g, &BTreeMap::new()) else { return Ok(()) };
        let labels: BTreeSet<&str> = cfg.labels().into_iter().collect();
        for w in words(4) {
            let chars: Vec<char> = w.chars().collect();
            match parse_tree(&cfg, &w) {
                Ok(t) => {
                    prop_assert!(recognize(&cfg, &w));
                    prop_assert_eq!(t.span, (0, chars.len()));
                    check_tree(&t, &chars, &labels);
                }
                Err(e) => {
                    prop_assert!(!recognize(&cfg, &w));
                    prop_assert!(e.offset <= chars.len());
                }
            }
        }
    }

    #[test]
    fn expression_print_reparse(src in expr_text()) {
        let e = parse_expr(&src).unwrap();
        let printed = e.to_string();
        let again = parse_expr(&printed).unwrap();
        prop_assert_eq!(&again, &e, "{} printed as {}", src, printed);
        prop_assert_eq!(again.to_string(), printed);
    }

    #[test]
    fn normalization_is_idempotent(src in type_text()) {
        let t = parse_type(&src).unwrap();
        let n = normalize(&t);
        prop_assert_eq!(normalize(&n.to_type()), n);
    }

    #[test]
    fn erasure_is_idempotent(src in type_text()) {
        let t = parse_type(&src).unwrap();
        let e = erase(&t);
        prop_assert_eq!(erase(&Type::Simple(e.clone())), e.clone());
        prop_assert_eq!(normalize(&t).base, e);
    }

    #[test]
    fn euclidean_division(a in -1000i64..1000, b in -50i64..50) {
        let q = builtin("div", &[Value::from(a), Value::from(b)]);
        let r = builtin("mod", &[Value::from(a), Value::from(b)]);
        if b == 0 {
            prop_assert!(q.is_err() && r.is_err());
        } else {
            let (Value::Int(q), Value::Int(r)) = (q.unwrap(), r.unwrap()) else { unreachable!() };
            let (q, r): (i64, i64) = (q.try_into().unwrap(), r.try_into().unwrap());
            prop_assert_eq!(a, b * q + r);
            prop_assert!(0 <= r && r < b.abs());
        }
    }
}

#[test]
fn builtin_trees_are_well_formed() {
    let reg = LangRegistry::builtin();
    for lang in reg.names() {
        let cfg = reg.cfg(lang).unwrap();
        let labels: BTreeSet<&str> = cfg.labels().into_iter().collect();
        for i in 0..300 {
            let s = generate(cfg, &mut rng_for(31, i), default_max_depth(cfg));
            let chars: Vec<char> = s.chars().collect();
            let t = parse_tree(cfg, &s).unwrap();
            check_tree(&t, &chars, &labels);
            assert_eq!(t, parse_tree(cfg, &s).unwrap());
        }
    }
}

#[test]
fn team_name_classes_are_covered() {
    let reg = LangRegistry::builtin();
    let cfg = reg.cfg("TeamNameFormat").unwrap();
    let mut seen = BTreeSet::new();
    for i in 0..10_000 {
        seen.extend(generate(cfg, &mut rng_for(12, i), default_max_depth(cfg)).chars());
    }
    let declared: BTreeSet<char> = ('a'..='z')
        .chain('A'..='Z')
        .chain('0'..='9')
        .chain(['-', '_', ' '])
        .collect();
    assert_eq!(seen, declared);
}
