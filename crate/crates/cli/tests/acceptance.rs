//! Acceptance criteria, one line of output per criterion.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic;
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use flat_core::cfg::CoreCfg;
use flat_core::front::{parse_type, print_program};
use flat_core::fuzz::{self, default_max_depth, generate, rng_for, synthesize_producers, FuzzConfig, Producer};
use flat_core::interp::{builtin, run_method, Interp};
use flat_core::parse::{parse_tree, recognize, DerivationTree};
use flat_core::types::{check_predicate, normalize};
use flat_core::xpath::{parse_xpath, select_all, Selector, XPath};
use flat_core::{check, instrument_program, load, ErrorKind, LangRegistry, SimpleType, Type, Unit, Value};
use rand::seq::SliceRandom;
use rand::Rng;

const MALICIOUS_URL: &str = "https://localhost'); DROP TABLE users --/";
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture(name: &str) -> Unit {
    let src = std::fs::read_to_string(fixtures().join(name)).unwrap();
    let unit = load(name, &src).unwrap_or_else(|e| panic!("{e}"));
    assert!(check::simple_typecheck(&unit).is_empty(), "{name} does not typecheck");
    unit
}

fn flatc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_flatc"))
        .args(args)
        .current_dir(fixtures())
        .env_remove("FLATC_SEED")
        .output()
        .unwrap()
}

fn builtin_cfg(name: &str) -> std::sync::Arc<CoreCfg> {
    LangRegistry::builtin().cfg(name).unwrap().clone()
}

fn fuzz_config(seed: u64) -> FuzzConfig {
    FuzzConfig {
        num: 1000,
        seed,
        ..FuzzConfig::default()
    }
}

fn injection_rejected() {
    assert!(!recognize(&builtin_cfg("URL"), MALICIOUS_URL));
    let unit = instrument_program(&fixture("getname.flat"));
    let err = run_method(&unit, "getname", &[Value::from(MALICIOUS_URL)]).unwrap_err();
    assert_eq!(err.kind, ErrorKind::ArgType);
    let want = "Type mismatch for argument 0 of method getname\n  expected type: URL\n  actual value:  \"https://localhost'); DROP TABLE users --/\"\n  at getname.flat:2:1\n";
    assert_eq!(err.to_string(), want);

    let args = serde_json::to_string(&[MALICIOUS_URL]).unwrap();
    let out = flatc(&["run", "getname.flat", "--method", "getname", "--args", &args]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8(out.stderr).unwrap(), want);
}

fn empty_host_found() {
    let unit = instrument_program(&fixture("getname_buggy.flat"));
    for seed in SEEDS {
        let started = Instant::now();
        let r = fuzz::fuzz(&unit, "getname", &fuzz_config(seed), &BTreeMap::new()).unwrap();
        assert!(started.elapsed() < Duration::from_secs(60), "seed {seed} over budget");
        assert_eq!(r.executed + r.discarded, 1000);
        let found = r
            .failures
            .iter()
            .filter(|f| f.error.kind == ErrorKind::ReturnType && f.error.actual == Some(Value::from("")))
            .count();
        assert!(found >= 1, "seed {seed}: no empty-host failure");
    }
    let run = || flatc(&["run", "getname_buggy.flat", "--method", "getname", "--args", r#"["http://W"]"#]);
    let (a, b) = (run(), run());
    assert_eq!(a.status.code(), Some(2));
    let err = String::from_utf8(a.stderr.clone()).unwrap();
    assert!(err.starts_with("Type mismatch for the return value of method getname\n  expected type: Host\n  actual value:  \"\"\n"), "{err}");
    assert_eq!(a.stderr, b.stderr);
}

fn fix_verified() {
    let unit = instrument_program(&fixture("getname_fixed_ensures.flat"));
    assert!(unit.metas["getname"].has_post());
    for seed in SEEDS {
        let started = Instant::now();
        let r = fuzz::fuzz(&unit, "getname", &fuzz_config(seed), &BTreeMap::new()).unwrap();
        assert!(started.elapsed() < Duration::from_secs(60), "seed {seed} over budget");
        assert_eq!(r.executed, 1000);
        assert!(r.failures.is_empty(), "seed {seed}: {:?}", r.failures.first());
    }
}

fn safesql_contained() {
    let unit = fixture("safesql.flat");
    let cfg = unit.langs.cfg("SafeSQL").unwrap().clone();
    assert!(!recognize(&cfg, "INSERT INTO hosts VALUES ('localhost'); DROP TABLE users --')"));
    assert!(recognize(&cfg, "INSERT INTO hosts VALUES ('example.com')"));

    let unit = instrument_program(&unit);
    let err = run_method(&unit, "save_hostname", &[Value::from("localhost'); DROP TABLE users --")]).unwrap_err();
    assert_eq!(err.kind, ErrorKind::LocalType);
    assert_eq!(err.expected.as_deref(), Some("SafeSQL"));
    assert_eq!(
        err.actual,
        Some(Value::from("INSERT INTO hosts VALUES ('localhost'); DROP TABLE users --')"))
    );
    assert_eq!(
        run_method(&unit, "save_hostname", &[Value::from("example.com")]).unwrap(),
        Value::from("INSERT INTO hosts VALUES ('example.com')")
    );
}

fn team_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == ' '
}

fn team_names() {
    let cfg = builtin_cfg("TeamNameFormat");
    let depth = default_max_depth(&cfg);
    for i in 0..1000 {
        let s = generate(&cfg, &mut rng_for(17, i), depth);
        assert!((1..=20).contains(&s.chars().count()), "{s:?}");
        assert!(s.chars().all(team_name_char), "{s:?}");
    }

    let unit = fixture("teamname.flat");
    let meta = &unit.metas["validate_teamname"];
    let producers = synthesize_producers(&unit, meta, &BTreeMap::new(), &FuzzConfig::default()).unwrap();
    let Producer::GrammarBased(g) = &producers[0] else { panic!("expected a grammar producer") };
    assert_eq!(g.lang, "TeamNameFormat");
    assert!(g.pred.is_some());
    let mut filtered = 0;
    for i in 0..1000 {
        let (v, _) = producers[0].produce(&unit, &mut rng_for(23, i)).unwrap();
        let s = v.as_str().unwrap();
        assert!(recognize(&cfg, s));
        for edge in ["-", "_"] {
            assert!(!s.starts_with(edge) && !s.ends_with(edge), "{s:?}");
        }
        filtered += 1;
    }
    assert_eq!(filtered, 1000);

    let team_name = parse_type(
        "{s: TeamNameFormat | !startswith(s, \"-\") && !endswith(s, \"-\") && !startswith(s, \"_\") && !endswith(s, \"_\")}",
    )
    .unwrap();
    let p = check_predicate(&team_name);
    let sat = |s: &str| {
        Interp::new(&unit)
            .eval_expr(&[(p.var.clone(), Value::from(s))], &p.pred)
            .unwrap()
    };
    assert_eq!(sat("R-_b"), Value::Bool(true));
    assert_eq!(sat("_R"), Value::Bool(false));
    assert_eq!(sat("a;b"), Value::Bool(false));

    // The validator still rejects it.
    let unit = instrument_program(&unit);
    let err = run_method(&unit, "validate_teamname", &[Value::from("R-_b")]).unwrap_err();
    assert_eq!(err.kind, ErrorKind::UserAssert);
}

/// Satisfaction checked one refinement layer at a time.
fn layered_holds(unit: &Unit, t: &Type, v: &Value, globals: &[(&str, i64)]) -> bool {
    match t {
        Type::Simple(s) => v.simple_type().as_ref() == Some(s),
        Type::Lang(l) => v
            .as_str()
            .is_some_and(|s| recognize(unit.langs.cfg(l).unwrap(), s)),
        Type::Refine { base, pred, .. } => {
            if !layered_holds(unit, base, v, globals) {
                return false;
            }
            let binder = effective_binder(t);
            let mut env: Vec<(String, Value)> = globals
                .iter()
                .filter(|(g, _)| *g != binder)
                .map(|(g, n)| (g.to_string(), Value::from(*n)))
                .collect();
            env.push((binder.to_string(), v.clone()));
            Interp::new(unit)
                .eval_expr(&env, pred)
                .unwrap_or_else(|e| panic!("{pred} under {env:?}: {e}"))
                == Value::Bool(true)
        }
    }
}

/// `{t | e}` binds the value under the binder of `t`.
fn effective_binder(t: &Type) -> &str {
    match t {
        Type::Refine { var, base, .. } if var == "_" => effective_binder(base),
        Type::Refine { var, .. } => var,
        _ => "_",
    }
}

fn normalized_holds(unit: &Unit, t: &Type, v: &Value, globals: &[(&str, i64)]) -> bool {
    let n = normalize(t);
    if v.simple_type() != Some(n.base.clone()) {
        return false;
    }
    let mut env: Vec<(String, Value)> = globals
        .iter()
        .filter(|(g, _)| *g != n.var)
        .map(|(g, k)| (g.to_string(), Value::from(*k)))
        .collect();
    env.push((n.var.clone(), v.clone()));
    Interp::new(unit).eval_expr(&env, &n.pred).unwrap() == Value::Bool(true)
}

const BINDERS: [&str; 4] = ["x", "y", "n", "k"];
const GLOBALS: [(&str, i64); 4] = [("x", 3), ("y", -2), ("n", 5), ("k", 0)];

fn random_int_pred(rng: &mut impl Rng, b: &str) -> String {
    let g = BINDERS.choose(rng).unwrap();
    let c = rng.gen_range(-6..=6);
    match rng.gen_range(0..5) {
        0 => format!("{b} > {c}"),
        1 => format!("{b} < {c}"),
        2 => format!("{b} % 2 == 0"),
        3 => format!("{b} != {g}"),
        _ => format!("{b} + {g} >= {c}"),
    }
}

fn random_str_pred(rng: &mut impl Rng, b: &str) -> String {
    let others: Vec<&str> = BINDERS.iter().copied().filter(|g| *g != b).collect();
    let g = others.choose(rng).unwrap();
    match rng.gen_range(0..4) {
        0 => format!("length({b}) < {}", rng.gen_range(1..8)),
        1 => format!("contains({b}, \"1\")"),
        2 => format!("{b} in IntExp"),
        _ => format!("length({b}) > {g}"),
    }
}

/// A random type of nesting depth at most `depth`, with its base kind.
fn random_type(rng: &mut impl Rng, depth: u32) -> (String, bool) {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..5) {
            0 | 1 => ("Int".into(), true),
            2 => ("String".into(), false),
            3 => ("Host".into(), false),
            _ => ("IntExp".into(), false),
        };
    }
    let (base, is_int) = random_type(rng, depth - 1);
    let named_base = base.starts_with('{') && !base.starts_with("{ {");
    if named_base && rng.gen_bool(0.2) {
        // `{t | e}` over a base with a named binder.
        let inner = base[1..].split(':').next().unwrap().trim().to_string();
        let pred = if is_int { random_int_pred(rng, &inner) } else { random_str_pred(rng, &inner) };
        return (format!("{{ {base} | {pred}}}"), is_int);
    }
    let b = *BINDERS.choose(rng).unwrap();
    let pred = if is_int { random_int_pred(rng, b) } else { random_str_pred(rng, b) };
    (format!("{{{b}: {base} | {pred}}}"), is_int)
}

fn normalization() {
    let n = normalize(&Type::int());
    assert_eq!((n.var.as_str(), n.base.clone()), ("_", SimpleType::Int));
    assert!(n.pred.is_true());
    assert_eq!(normalize(&Type::Lang("URL".into())).to_string(), "{s: String | s in URL}");
    let nested = parse_type("{ {n: Int | n > 0} | n < 10}").unwrap();
    assert_eq!(normalize(&nested).to_string(), "{n: Int | n > 0 && n < 10}");
    let renamed = parse_type("{x: {y: Int | y > 0} | x < 10}").unwrap();
    assert_eq!(normalize(&renamed).to_string(), "{x: Int | x > 0 && x < 10}");
    let captured = parse_type("{x: {y: Int | y > x} | x < 10}").unwrap();
    assert_eq!(normalize(&captured).to_string(), "{x_1: Int | x_1 > x && x_1 < 10}");

    let unit = load("norm.flat", "").unwrap();
    let host = builtin_cfg("Host");
    let int_exp = builtin_cfg("IntExp");
    let mut rng = rng_for(6, 0);
    let mut pool: Vec<Value> = ["", "1", "a.b", "12", "1+2", "x-y", "w"].iter().map(|s| Value::from(*s)).collect();
    for i in 0..20 {
        pool.push(Value::Str(generate(&host, &mut rng_for(60, i), 12)));
        pool.push(Value::Str(generate(&int_exp, &mut rng_for(61, i), 12)));
    }
    let ints: Vec<Value> = (-8..=8).map(Value::from).collect();
    for case in 0..1000 {
        let (text, is_int) = random_type(&mut rng, 3);
        let t = parse_type(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
        let values = if is_int { &ints } else { &pool };
        for v in values.iter().chain([&Value::Bool(true)]) {
            assert_eq!(
                layered_holds(&unit, &t, v, &GLOBALS),
                normalized_holds(&unit, &t, v, &GLOBALS),
                "case {case}: {text} on {v}"
            );
        }
    }
}

/// Random programs whose contracts are all trivially true.
struct ProgramGen<R> {
    rng: R,
    fresh: usize,
    scopes: Vec<Vec<(String, &'static str)>>,
    method: usize,
    methods: usize,
    out: String,
}

impl<R: Rng> ProgramGen<R> {
    fn vars(&self, ty: &str) -> Vec<String> {
        self.scopes
            .iter()
            .flatten()
            .filter(|(_, t)| *t == ty)
            .map(|(v, _)| v.clone())
            .collect()
    }

    fn assignable(&self) -> Vec<(String, &'static str)> {
        self.scopes
            .iter()
            .flatten()
            .filter(|(v, _)| v.starts_with('v'))
            .cloned()
            .collect()
    }

    fn var_of(&mut self, ty: &str) -> Option<String> {
        let vs = self.vars(ty);
        vs.choose(&mut self.rng).cloned()
    }

    fn int(&mut self, d: u32) -> String {
        let leaf = d == 0 || self.rng.gen_bool(0.3);
        if leaf {
            if self.rng.gen_bool(0.6) {
                if let Some(v) = self.var_of("Int") {
                    return v;
                }
            }
            return self.rng.gen_range(-4..=6).to_string();
        }
        match self.rng.gen_range(0..7) {
            0 => format!("({} + {})", self.int(d - 1), self.int(d - 1)),
            1 => format!("({} - {})", self.int(d - 1), self.int(d - 1)),
            2 => format!("({} * {})", self.int(d - 1), self.int(d - 1)),
            3 => format!("div({}, {})", self.int(d - 1), self.int(d - 1)),
            4 => format!("length({})", self.string(d - 1)),
            5 => format!("indexof({}, \"a\", {})", self.string(d - 1), self.int(d - 1)),
            _ => format!("str_to_int({})", self.string(d - 1)),
        }
    }

    fn boolean(&mut self, d: u32) -> String {
        let leaf = d == 0 || self.rng.gen_bool(0.3);
        if leaf {
            if let Some(v) = self.var_of("Bool") {
                return v;
            }
            return if self.rng.gen_bool(0.5) { "true".into() } else { "false".into() };
        }
        match self.rng.gen_range(0..5) {
            0 => format!("{} < {}", self.int(d - 1), self.int(d - 1)),
            1 => format!("{} == {}", self.int(d - 1), self.int(d - 1)),
            2 => format!("!({})", self.boolean(d - 1)),
            3 => format!("({} && {})", self.boolean(d - 1), self.boolean(d - 1)),
            _ => format!("contains({}, \"b\")", self.string(d - 1)),
        }
    }

    fn string(&mut self, d: u32) -> String {
        let leaf = d == 0 || self.rng.gen_bool(0.3);
        if leaf {
            if self.rng.gen_bool(0.6) {
                if let Some(v) = self.var_of("String") {
                    return v;
                }
            }
            return ["\"\"", "\"a\"", "\"ab\"", "\"ba\"", "\"12\""].choose(&mut self.rng).unwrap().to_string();
        }
        match self.rng.gen_range(0..4) {
            0 => format!("concat({}, {})", self.string(d - 1), self.string(d - 1)),
            1 => format!("substr({}, {}, {})", self.string(d - 1), self.int(d - 1), self.int(d - 1)),
            2 => format!("at({}, {})", self.string(d - 1), self.int(d - 1)),
            _ => format!("int_to_str({})", self.int(d - 1)),
        }
    }

    fn expr(&mut self, ty: &str) -> String {
        match ty {
            "Int" => self.int(2),
            "Bool" => self.boolean(2),
            _ => self.string(2),
        }
    }

    fn line(&mut self, indent: usize, text: &str) {
        let _ = writeln!(self.out, "{}{text}", "  ".repeat(indent));
    }

    fn declare(&mut self, ty: &'static str) -> String {
        self.fresh += 1;
        let v = format!("v{}", self.fresh);
        self.scopes.last_mut().unwrap().push((v.clone(), ty));
        v
    }

    fn stmt(&mut self, indent: usize, depth: u32) {
        let ty = *["Int", "Bool", "String"].choose(&mut self.rng).unwrap();
        match self.rng.gen_range(0..9) {
            0 => {
                let e = self.expr(ty);
                let v = self.declare(ty);
                self.line(indent, &format!("var {v}: {ty} = {e};"));
            }
            1 => {
                let e = self.expr(ty);
                let v = self.declare(ty);
                self.line(indent, &format!("var {v} = {e};"));
            }
            2 => {
                let e = self.expr(ty);
                let v = self.declare(ty);
                self.line(indent, &format!("var {v}: {ty};"));
                self.line(indent, &format!("{v} = {e};"));
            }
            3 => {
                let targets = self.assignable();
                if let Some((v, t)) = targets.choose(&mut self.rng).cloned() {
                    let e = self.expr(t);
                    self.line(indent, &format!("{v} = {e};"));
                }
            }
            4 if depth > 0 => {
                let c = self.boolean(2);
                self.line(indent, &format!("if {c} {{"));
                self.block(indent + 1, depth - 1, false);
                if self.rng.gen_bool(0.6) {
                    self.line(indent, "} else {");
                    self.block(indent + 1, depth - 1, false);
                }
                self.line(indent, "}");
            }
            5 if depth > 0 => {
                self.fresh += 1;
                let c = format!("c{}", self.fresh);
                let bound = self.rng.gen_range(0..5);
                self.line(indent, &format!("var {c}: Int = 0;"));
                self.scopes.last_mut().unwrap().push((c.clone(), "Int"));
                let cond = self.boolean(1);
                self.line(indent, &format!("while {c} < {bound} && {cond} {{"));
                self.block(indent + 1, depth - 1, false);
                self.line(indent + 1, &format!("{c} = {c} + 1;"));
                self.line(indent, "}");
            }
            6 if self.method + 1 < self.methods => {
                let callee = self.rng.gen_range(self.method + 1..self.methods);
                let (a, b, s) = (self.int(1), self.int(1), self.string(1));
                let v = self.declare("Int");
                self.line(indent, &format!("var {v} = call m{callee}({a}, {b}, {s});"));
            }
            7 => {
                let c = self.boolean(1);
                self.line(indent, &format!("assert {c};"));
            }
            _ => {
                if depth < 2 && self.rng.gen_bool(0.3) {
                    let e = self.int(2);
                    self.line(indent, &format!("return {e};"));
                }
            }
        }
    }

    fn block(&mut self, indent: usize, depth: u32, last: bool) {
        self.scopes.push(Vec::new());
        for _ in 0..self.rng.gen_range(1..5) {
            self.stmt(indent, depth);
        }
        if last {
            let e = self.int(2);
            self.line(indent, &format!("return {e};"));
        }
        self.scopes.pop();
    }

    fn program(mut self) -> String {
        for m in 0..self.methods {
            self.method = m;
            self.fresh = 0;
            self.scopes = vec![vec![("a".into(), "Int"), ("b".into(), "Int"), ("s".into(), "String")]];
            self.line(0, &format!("method m{m}(a: Int, b: Int, s: String): Int"));
            if self.rng.gen_bool(0.3) {
                self.line(1, "requires (a, b, s) -> true");
            }
            if self.rng.gen_bool(0.3) {
                self.line(1, "ensures (a, b, s, ret) -> true");
            }
            self.line(0, "{");
            self.block(1, 2, true);
            self.line(0, "}");
            self.line(0, "");
        }
        self.out
    }
}

fn instrumentation_rules() {
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for name in ["rules", "getname", "getname_fixed_ensures", "safesql", "teamname"] {
        let got = print_program(&instrument_program(&fixture(&format!("{name}.flat"))).program);
        let want = std::fs::read_to_string(golden.join(format!("{name}.instrumented"))).unwrap();
        assert_eq!(got, want, "{name}");
    }
    let rules = std::fs::read_to_string(golden.join("rules.instrumented")).unwrap();
    for marker in [
        "var __z1 = i;",
        "var __r1 = m;",
        "# ArgType",
        "# Pre",
        "# Post",
        "# ReturnType",
        "# LocalType",
        "# UserAssert",
        "while i < k {",
        "if m > limit {",
    ] {
        assert!(rules.contains(marker), "missing {marker}");
    }
    // Checks that always hold are dropped.
    assert!(!rules.contains("assert __z2"));
    assert!(rules.contains("  var i: Int;\n  i = 0;\n  while"));
    assert!(rules.contains("  var __r1 = length(s);\n  return __r1;\n"));
    // Statements after a return are dropped.
    assert!(!rules.contains("n = 0;"));

    let strings = ["", "a", "ab", "ba", "12", "aab"];
    for p in 0..100u64 {
        let mut rng = rng_for(7, p);
        let methods = rng.gen_range(1..4);
        let src = ProgramGen {
            rng,
            fresh: 0,
            scopes: Vec::new(),
            method: 0,
            methods,
            out: String::new(),
        }
        .program();
        let unit = load("diff.flat", &src).unwrap_or_else(|e| panic!("{e}\n{src}"));
        let diags = check::simple_typecheck(&unit);
        assert!(diags.is_empty(), "{}\n{src}", diags[0]);
        let instrumented = instrument_program(&unit);
        let mut rng = rng_for(8, p);
        for _ in 0..10 {
            let args = [
                Value::from(rng.gen_range(-5i64..=5)),
                Value::from(rng.gen_range(-5i64..=5)),
                Value::from(*strings.choose(&mut rng).unwrap()),
            ];
            let direct = run_method(&unit, "m0", &args);
            let checked = run_method(&instrumented, "m0", &args);
            match (&direct, &checked) {
                (Ok(a), Ok(b)) => assert_eq!(a, b, "{src}"),
                (Err(a), Err(b)) => {
                    assert_eq!((a.kind, &a.location), (b.kind, &b.location), "{src}");
                    assert_ne!(a.kind, ErrorKind::Internal, "{a}\n{src}");
                }
                _ => panic!("{direct:?} vs {checked:?}\n{src}"),
            }
        }
    }
}

struct FlatNode<'t> {
    tree: &'t DerivationTree,
    parent: Option<usize>,
    /// 1-based position among the siblings sharing its label.
    rank: usize,
}

fn flatten<'t>(t: &'t DerivationTree, parent: Option<usize>, rank: usize, out: &mut Vec<FlatNode<'t>>) {
    let id = out.len();
    out.push(FlatNode { tree: t, parent, rank });
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &t.children {
        let r = match &c.label {
            Some(l) => {
                let e = seen.entry(l.as_str()).or_insert(0);
                *e += 1;
                *e
            }
            None => 0,
        };
        flatten(c, Some(id), r, out);
    }
}

/// Node `n` is selected by `sels` when its own label fits the last selector
/// and a suitable ancestor is selected by the rest.
fn selected(nodes: &[FlatNode<'_>], n: usize, sels: &[Selector]) -> bool {
    let Some((last, rest)) = sels.split_last() else { return n == 0 };
    if nodes[n].tree.label.as_deref() != Some(last.label()) {
        return false;
    }
    let parent = nodes[n].parent;
    match last {
        Selector::Child(_, k) => nodes[n].rank == *k && parent.is_some_and(|p| selected(nodes, p, rest)),
        Selector::ChildAll(_) => parent.is_some_and(|p| selected(nodes, p, rest)),
        Selector::DescendantAll(_) => {
            let mut a = parent;
            while let Some(p) = a {
                if selected(nodes, p, rest) {
                    return true;
                }
                a = nodes[p].parent;
            }
            false
        }
    }
}

fn oracle_select(tree: &DerivationTree, sels: &[Selector]) -> Vec<String> {
    let mut nodes = Vec::new();
    flatten(tree, None, 1, &mut nodes);
    (0..nodes.len())
        .filter(|&n| selected(&nodes, n, sels))
        .map(|n| nodes[n].tree.yield_text())
        .collect()
}

fn xpath_oracle() {
    let mut reg = LangRegistry::builtin();
    reg.define(
        "Nest",
        "start: A \";\" A;\nA: \"(\" item* \")\";\nitem: B | D;\nB: \"b\" \"{\" C* inner? \"}\";\ninner: B;\nC: [0-9];\nD: \"d\" C;\n",
    )
    .unwrap();
    let nest = reg.cfg("Nest").unwrap();
    let tree = parse_tree(nest, "(b{12b{3}}d4);(b{5})").unwrap();
    let sel = |p: &str| select_all(&tree, &parse_xpath(nest, p).unwrap());
    assert_eq!(sel(".A[1]..B.C"), ["1", "2", "3"]);
    assert_eq!(sel(".A[2]..B.C"), ["5"]);
    assert_eq!(sel(".A[1]..B"), ["b{12b{3}}", "b{3}"]);
    assert_eq!(sel("..C"), ["1", "2", "3", "4", "5"]);
    assert_eq!(sel(".A[3]..B.C"), Vec::<String>::new());

    let langs = ["URL", "Host", "RelPath", "IntExp", "TeamNameFormat", "JSON"];
    let mut rng = rng_for(8, 0);
    for i in 0..500u64 {
        let lang = langs[i as usize % langs.len()];
        let cfg = reg.cfg(lang).unwrap();
        let s = generate(cfg, &mut rng_for(80, i), default_max_depth(cfg));
        let tree = parse_tree(cfg, &s).unwrap();
        let labels = cfg.labels();
        for _ in 0..50 {
            let selectors: Vec<Selector> = (0..rng.gen_range(1..=3))
                .map(|_| {
                    let l = labels.choose(&mut rng).unwrap().to_string();
                    match rng.gen_range(0..3) {
                        0 => Selector::Child(l, rng.gen_range(1..=3)),
                        1 => Selector::ChildAll(l),
                        _ => Selector::DescendantAll(l),
                    }
                })
                .collect();
            let path = XPath {
                lang: lang.to_string(),
                selectors,
            };
            assert_eq!(select_all(&tree, &path), oracle_select(&tree, &path.selectors), "{lang} {s:?} {path}");
        }
    }
}

/// All substrings `s[p..q]` by enumeration.
fn substrings(s: &[char]) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    for p in 0..=s.len() {
        for q in p..=s.len() {
            out.push((p, q, s[p..q].iter().collect()));
        }
    }
    out
}

fn oracle_substr(s: &str, i: i64, n: i64) -> String {
    let cs: Vec<char> = s.chars().collect();
    let len = cs.len() as i64;
    if i < 0 || i >= len || n <= 0 {
        return String::new();
    }
    let want = n.min(len - i);
    substrings(&cs)
        .into_iter()
        .find(|(p, q, _)| *p as i64 == i && (q - p) as i64 == want)
        .unwrap()
        .2
}

fn oracle_indexof(s: &str, t: &str, i: i64) -> i64 {
    let cs: Vec<char> = s.chars().collect();
    if i < 0 || i > cs.len() as i64 {
        return -1;
    }
    substrings(&cs)
        .into_iter()
        .filter(|(p, _, sub)| *p as i64 >= i && sub == t)
        .map(|(p, _, _)| p as i64)
        .min()
        .unwrap_or(-1)
}

fn oracle_str_to_int(s: &str) -> Option<i64> {
    if s.is_empty() {
        return Some(-1);
    }
    let mut n: i64 = 0;
    for c in s.chars() {
        let d = "0123456789".find(c).filter(|_| c.is_ascii())?;
        n = n.checked_mul(10)?.checked_add(d as i64)?;
    }
    Some(n)
}

fn smt_strings() {
    let call = |name: &str, args: Vec<Value>| builtin(name, &args).unwrap();
    let s = |x: &str| Value::from(x);
    let n = |k: i64| Value::from(k);
    // Edge cases.
    assert_eq!(call("indexof", vec![s("http://W"), s("/"), n(8)]), n(-1));
    assert_eq!(call("indexof", vec![s("abc"), s("d"), n(0)]), n(-1));
    assert_eq!(call("indexof", vec![s("abc"), s("a"), n(-1)]), n(-1));
    assert_eq!(call("indexof", vec![s("abc"), s(""), n(3)]), n(3));
    assert_eq!(call("indexof", vec![s("abc"), s(""), n(4)]), n(-1));
    assert_eq!(call("substr", vec![s("http://W"), n(7), n(-6)]), s(""));
    assert_eq!(call("substr", vec![s("abc"), n(3), n(1)]), s(""));
    assert_eq!(call("substr", vec![s("abc"), n(-1), n(2)]), s(""));
    assert_eq!(call("substr", vec![s("abc"), n(1), n(100)]), s("bc"));
    assert_eq!(call("at", vec![s("abc"), n(3)]), s(""));
    assert_eq!(call("at", vec![s("abc"), n(-1)]), s(""));
    assert_eq!(call("str_to_int", vec![s("")]), n(-1));
    assert_eq!(call("str_to_int", vec![s("-1")]), n(-1));
    assert_eq!(call("str_to_int", vec![s("007")]), n(7));

    let alphabet = ['a', 'b', 'é', '1'];
    let mut rng = rng_for(9, 0);
    let word = |rng: &mut rand_chacha::ChaCha8Rng, max: usize| -> String {
        (0..rng.gen_range(0..=max)).map(|_| *alphabet.choose(rng).unwrap()).collect()
    };
    for _ in 0..5000 {
        let a = word(&mut rng, 6);
        let t = word(&mut rng, 2);
        let len = a.chars().count() as i64;
        let i = rng.gen_range(-2..=len + 2);
        let k = rng.gen_range(-2..=len + 2);
        assert_eq!(call("indexof", vec![s(&a), s(&t), n(i)]), n(oracle_indexof(&a, &t, i)), "indexof({a:?}, {t:?}, {i})");
        assert_eq!(call("substr", vec![s(&a), n(i), n(k)]), s(&oracle_substr(&a, i, k)), "substr({a:?}, {i}, {k})");
        assert_eq!(call("at", vec![s(&a), n(i)]), s(&oracle_substr(&a, i, 1)), "at({a:?}, {i})");
        let contained = oracle_indexof(&a, &t, 0) >= 0;
        assert_eq!(call("contains", vec![s(&a), s(&t)]), Value::Bool(contained));
        let cs: Vec<char> = a.chars().collect();
        let prefix = substrings(&cs).iter().any(|(p, _, sub)| *p == 0 && *sub == t);
        let suffix = substrings(&cs).iter().any(|(_, q, sub)| *q == cs.len() && *sub == t);
        assert_eq!(call("prefixof", vec![s(&t), s(&a)]), Value::Bool(prefix));
        assert_eq!(call("suffixof", vec![s(&t), s(&a)]), Value::Bool(suffix));
        assert_eq!(call("length", vec![s(&a)]), n(len));
        if let Some(v) = oracle_str_to_int(&a) {
            assert_eq!(call("str_to_int", vec![s(&a)]), n(v), "str_to_int({a:?})");
        }
    }
}

fn closure_and_reproducibility() {
    let reg = LangRegistry::builtin();
    for lang in reg.names() {
        let cfg = reg.cfg(lang).unwrap();
        let depth = default_max_depth(cfg);
        for i in 0..10_000 {
            let s = generate(cfg, &mut rng_for(10, i), depth);
            assert!(recognize(cfg, &s), "{lang}: {s:?}");
        }
    }

    let unit = instrument_program(&fixture("getname_buggy.flat"));
    let report = |parallel: bool| {
        let config = FuzzConfig {
            parallel,
            ..fuzz_config(99)
        };
        let r = fuzz::fuzz(&unit, "getname", &config, &BTreeMap::new()).unwrap();
        serde_json::to_string(&r.to_json(false)).unwrap()
    };
    let first = report(true);
    assert_eq!(first, report(true));
    assert_eq!(first, report(false));

    let dir = std::env::temp_dir().join(format!("flatc-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let run = |name: &str| {
        let out = dir.join(name);
        let o = flatc(&["fuzz", "getname_buggy.flat", "--method", "getname", "--seed", "4", "--json", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(3));
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("wall_time_ms");
        serde_json::to_string(&v).unwrap()
    };
    let (a, b) = (run("a.json"), run("b.json"));
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(a, b);
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn(),
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { name: "SQL injection rejected", budget: secs(1), run: injection_rejected },
        Criterion { name: "empty-host bug found", budget: secs(300), run: empty_host_found },
        Criterion { name: "fixed getname passes", budget: secs(300), run: fix_verified },
        Criterion { name: "SafeSQL containment", budget: secs(1), run: safesql_contained },
        Criterion { name: "TeamName semantics", budget: secs(30), run: team_names },
        Criterion { name: "normalization rules", budget: secs(30), run: normalization },
        Criterion { name: "instrumentation rules", budget: secs(120), run: instrumentation_rules },
        Criterion { name: "XPath oracle equivalence", budget: secs(60), run: xpath_oracle },
        Criterion { name: "SMT-LIB string semantics", budget: secs(5), run: smt_strings },
        Criterion { name: "generator closure and reproducibility", budget: secs(120), run: closure_and_reproducibility },
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = panic::catch_unwind(c.run);
        let took = started.elapsed();
        let verdict = match outcome {
            Ok(()) if took <= c.budget => "PASS".to_string(),
            Ok(()) => format!("FAIL (over the {}s budget)", c.budget.as_secs()),
            Err(_) => "FAIL".to_string(),
        };
        if verdict != "PASS" {
            failed += 1;
        }
        println!("criterion {:>2}  {:<40} {verdict}  ({:.2}s)", i + 1, c.name, took.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
