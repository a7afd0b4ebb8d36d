//! Random sentence generation and the fuzzing driver.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::ast::{Expr, ExprKind, SimpleType};
use crate::cfg::{Atom, CoreCfg, NtId};
use crate::front::{MethodMeta, Unit};
use crate::interp::{ErrorKind, Interp, RuntimeError, Value};
use crate::types::{normalize, Predicate};

pub const DEFAULT_NUM: usize = 1000;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 1000;
pub const INT_RANGE: (i64, i64) = (-100, 100);

/// `max(min_depth(start) + 8, 16)`
pub fn default_max_depth(cfg: &CoreCfg) -> u32 {
    (cfg.min_depth(cfg.start()) + 8).max(16)
}

/// SplitMix64 finalizer over `seed + (i + 1) * golden`.
pub fn mix(seed: u64, i: u64) -> u64 {
    let mut z = seed.wrapping_add(i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, i: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, i))
}

/// Yield of a random derivation of at most `max_depth` levels. Each
/// nonterminal picks uniformly among the alternatives that still fit.
pub fn generate(cfg: &CoreCfg, rng: &mut impl Rng, max_depth: u32) -> String {
    assert!(
        max_depth >= cfg.min_depth(cfg.start()),
        "depth budget {max_depth} is below the minimal derivation depth of {}",
        cfg.name()
    );
    let mut out = String::new();
    expand(cfg, cfg.start(), max_depth, rng, &mut out);
    out
}

fn expand(cfg: &CoreCfg, nt: NtId, budget: u32, rng: &mut impl Rng, out: &mut String) {
    let alts = &cfg.nonterminal(nt).alternatives;
    let feasible: Vec<usize> = (0..alts.len())
        .filter(|&a| cfg.alt_min_depth(nt, a) <= budget)
        .collect();
    let alt = feasible[rng.gen_range(0..feasible.len())];
    for atom in &alts[alt] {
        match atom {
            Atom::Literal(cs) => out.extend(cs.iter()),
            Atom::Class(c) => {
                let k = rng.gen_range(0..c.size());
                out.push(c.nth(k).expect("index below class size"));
            }
            Atom::Nonterminal(n) => expand(cfg, *n, budget - 1, rng, out),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FuzzError {
    #[error("no method `{0}`")]
    UnknownMethod(String),
    #[error("parameter `{param}` of `{method}` has type {ty}: no producer can be synthesized, supply one with --using")]
    NoProducer { method: String, param: String, ty: String },
    #[error("depth budget {depth} for `{lang}` is below its minimal derivation depth {min}")]
    DepthTooSmall { lang: String, depth: u32, min: u32 },
    #[error("parameter `{param}`: no value satisfied its predicate after {attempts} attempts (acceptance rate so far {rate:.4})")]
    AttemptsExhausted { param: String, attempts: u32, rate: f64 },
}

#[derive(Debug, Clone)]
pub struct GrammarProducer {
    pub lang: String,
    pub cfg: Arc<CoreCfg>,
    /// Residual filter, with the language membership already removed.
    pub pred: Option<Predicate>,
    pub max_depth: u32,
    pub max_attempts: u32,
}

#[derive(Debug, Clone)]
pub enum Producer {
    Constant(Value),
    GrammarBased(GrammarProducer),
    /// Uniform integers in `lo..=hi`, optionally filtered.
    Int {
        lo: i64,
        hi: i64,
        pred: Option<Predicate>,
        max_attempts: u32,
    },
    /// Fair coin, optionally filtered.
    Bool { pred: Option<Predicate>, max_attempts: u32 },
}

/// Outcome of one producer call: the value and the number of candidates
/// drawn, or the number drawn before giving up.
pub type Produced = Result<(Value, u32), u32>;

fn holds(interp: &mut Interp<'_>, pred: &Option<Predicate>, v: &Value) -> bool {
    let Some(p) = pred else { return true };
    let env = [(p.var.clone(), v.clone())];
    matches!(interp.eval_expr(&env, &p.pred), Ok(Value::Bool(true)))
}

fn filtered(
    interp: &mut Interp<'_>,
    pred: &Option<Predicate>,
    max_attempts: u32,
    mut draw: impl FnMut() -> Value,
) -> Produced {
    for k in 1..=max_attempts {
        let v = draw();
        if holds(interp, pred, &v) {
            return Ok((v, k));
        }
    }
    Err(max_attempts)
}

/// Generate until the residual predicate holds.
pub fn produce_filtered(p: &GrammarProducer, unit: &Unit, rng: &mut impl Rng) -> Produced {
    let mut interp = Interp::new(unit);
    filtered(&mut interp, &p.pred, p.max_attempts, || {
        Value::Str(generate(&p.cfg, rng, p.max_depth))
    })
}

impl Producer {
    pub fn produce(&self, unit: &Unit, rng: &mut impl Rng) -> Produced {
        match self {
            Producer::Constant(v) => Ok((v.clone(), 1)),
            Producer::GrammarBased(g) => produce_filtered(g, unit, rng),
            Producer::Int {
                lo,
                hi,
                pred,
                max_attempts,
            } => {
                let mut interp = Interp::new(unit);
                filtered(&mut interp, pred, *max_attempts, || Value::int(rng.gen_range(*lo..=*hi)))
            }
            Producer::Bool { pred, max_attempts } => {
                let mut interp = Interp::new(unit);
                filtered(&mut interp, pred, *max_attempts, || Value::Bool(rng.gen_bool(0.5)))
            }
        }
    }
}

fn conjuncts(e: &Expr, out: &mut Vec<Expr>) {
    match &e.kind {
        ExprKind::Apply(f, args) if matches!(&f.kind, ExprKind::Var(op) if op == "&&") && args.len() == 2 => {
            conjuncts(&args[0], out);
            conjuncts(&args[1], out);
        }
        _ => out.push(e.clone()),
    }
}

/// Split `var ∈ L ∧ φ` into `L` and the residual `φ`.
pub fn split_language(p: &Predicate) -> Option<(String, Option<Predicate>)> {
    let mut parts = Vec::new();
    conjuncts(&p.pred, &mut parts);
    let i = parts.iter().position(|c| {
        matches!(&c.kind, ExprKind::InLang(s, _) if matches!(&s.kind, ExprKind::Var(v) if *v == p.var))
    })?;
    let ExprKind::InLang(_, lang) = &parts.remove(i).kind else { unreachable!() };
    let rest = parts.into_iter().fold(Expr::bool(true), Expr::and);
    let residual = (!crate::types::is_trivially_true(&rest)).then(|| Predicate {
        var: p.var.clone(),
        pred: rest,
    });
    Some((lang.clone(), residual))
}

#[derive(Debug, Clone)]
pub struct FuzzConfig {
    pub num: usize,
    pub seed: u64,
    /// Depth budget for grammar producers; defaults per grammar.
    pub max_depth: Option<u32>,
    pub max_attempts: u32,
    pub parallel: bool,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            num: DEFAULT_NUM,
            seed: 0,
            max_depth: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            parallel: true,
        }
    }
}

/// A grammar producer for `lang` honoring the configured budgets.
pub fn grammar_producer(
    lang: &str,
    cfg: Arc<CoreCfg>,
    pred: Option<Predicate>,
    config: &FuzzConfig,
) -> Result<GrammarProducer, FuzzError> {
    let min = cfg.min_depth(cfg.start());
    let depth = config.max_depth.unwrap_or_else(|| default_max_depth(&cfg));
    if depth < min {
        return Err(FuzzError::DepthTooSmall {
            lang: lang.to_string(),
            depth,
            min,
        });
    }
    Ok(GrammarProducer {
        lang: lang.to_string(),
        cfg,
        pred,
        max_depth: depth,
        max_attempts: config.max_attempts,
    })
}

/// One producer per parameter of `m`: an override when given, otherwise
/// derived from the parameter type.
pub fn synthesize_producers(
    unit: &Unit,
    m: &MethodMeta,
    overrides: &BTreeMap<String, Producer>,
    config: &FuzzConfig,
) -> Result<Vec<Producer>, FuzzError> {
    let mut out = Vec::new();
    for (x, t) in &m.params {
        if let Some(p) = overrides.get(x) {
            out.push(p.clone());
            continue;
        }
        let n = normalize(t);
        let pred = n.predicate();
        let residual = (!pred.is_trivially_true()).then(|| pred.clone());
        let no_producer = || FuzzError::NoProducer {
            method: m.name.clone(),
            param: x.clone(),
            ty: t.to_string(),
        };
        let p = match n.base {
            SimpleType::String => {
                let (lang, rest) = split_language(&pred).ok_or_else(no_producer)?;
                let cfg = unit.langs.cfg(&lang).ok_or_else(no_producer)?.clone();
                Producer::GrammarBased(grammar_producer(&lang, cfg, rest, config)?)
            }
            SimpleType::Int => Producer::Int {
                lo: INT_RANGE.0,
                hi: INT_RANGE.1,
                pred: residual,
                max_attempts: config.max_attempts,
            },
            SimpleType::Bool => Producer::Bool {
                pred: residual,
                max_attempts: config.max_attempts,
            },
            SimpleType::Fun(..) => return Err(no_producer()),
        };
        out.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub index: usize,
    pub inputs: Vec<Value>,
    pub replay_seed: u64,
    pub error: RuntimeError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzReport {
    pub method: String,
    pub seed: u64,
    pub requested: usize,
    pub executed: usize,
    /// Tuples rejected by the precondition.
    pub discarded: usize,
    pub passes: usize,
    pub failures: Vec<Failure>,
    /// Failures of kind ArgType, which generated inputs should never cause.
    pub generator_bugs: usize,
    pub wall_time_ms: u128,
}

impl FuzzReport {
    /// The report as JSON; `wall_time_ms` is omitted unless `timed`.
    pub fn to_json(&self, timed: bool) -> serde_json::Value {
        let failures: Vec<serde_json::Value> = self
            .failures
            .iter()
            .map(|f| {
                serde_json::json!({
                    "index": f.index,
                    "inputs": f.inputs.iter().map(Value::to_json).collect::<Vec<_>>(),
                    "replay_seed": f.replay_seed,
                    "error": f.error.to_json(),
                })
            })
            .collect();
        let mut v = serde_json::json!({
            "method": self.method,
            "seed": self.seed,
            "requested": self.requested,
            "executed": self.executed,
            "discarded": self.discarded,
            "passes": self.passes,
            "failures": failures,
        });
        if timed {
            v["wall_time_ms"] = serde_json::Value::from(self.wall_time_ms as u64);
        }
        v
    }
}

enum Outcome {
    Exhausted { param: usize, tries: Vec<u32> },
    Discarded { tries: Vec<u32> },
    Pass { tries: Vec<u32> },
    Fail { tries: Vec<u32>, failure: Failure },
}

fn run_one(unit: &Unit, meta: &MethodMeta, producers: &[Producer], seed: u64, i: usize) -> Outcome {
    let replay_seed = mix(seed, i as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(replay_seed);
    let mut inputs = Vec::with_capacity(producers.len());
    let mut tries = Vec::with_capacity(producers.len());
    for (k, p) in producers.iter().enumerate() {
        match p.produce(unit, &mut rng) {
            Ok((v, n)) => {
                inputs.push(v);
                tries.push(n);
            }
            Err(n) => {
                tries.push(n);
                return Outcome::Exhausted { param: k, tries };
            }
        }
    }
    let mut interp = Interp::new(unit);
    if meta.has_pre() {
        let env: Vec<(String, Value)> = meta
            .params
            .iter()
            .map(|(x, _)| x.clone())
            .zip(inputs.iter().cloned())
            .collect();
        if !matches!(interp.eval_expr(&env, meta.pre_body()), Ok(Value::Bool(true))) {
            return Outcome::Discarded { tries };
        }
    }
    match interp.run_method(&meta.name, &inputs) {
        Ok(_) => Outcome::Pass { tries },
        Err(error) => Outcome::Fail {
            tries,
            failure: Failure {
                index: i,
                inputs,
                replay_seed,
                error,
            },
        },
    }
}

/// Run `method` of the instrumented `unit` on `config.num` generated input
/// tuples. Tuple `i` is drawn from its own generator seeded with
/// `mix(seed, i)`, so the report does not depend on scheduling.
pub fn fuzz(
    unit: &Unit,
    method: &str,
    config: &FuzzConfig,
    overrides: &BTreeMap<String, Producer>,
) -> Result<FuzzReport, FuzzError> {
    let started = Instant::now();
    let meta = unit
        .metas
        .get(method)
        .ok_or_else(|| FuzzError::UnknownMethod(method.to_string()))?;
    let producers = synthesize_producers(unit, meta, overrides, config)?;
    let task = |i: usize| run_one(unit, meta, &producers, config.seed, i);
    let outcomes: Vec<Outcome> = if config.parallel {
        (0..config.num).into_par_iter().map(task).collect()
    } else {
        (0..config.num).map(task).collect()
    };

    let mut report = FuzzReport {
        method: method.to_string(),
        seed: config.seed,
        requested: config.num,
        executed: 0,
        discarded: 0,
        passes: 0,
        failures: Vec::new(),
        generator_bugs: 0,
        wall_time_ms: 0,
    };
    let mut drawn = vec![0u64; producers.len()];
    let mut accepted = vec![0u64; producers.len()];
    for o in outcomes {
        let tries = match &o {
            Outcome::Exhausted { tries, .. }
            | Outcome::Discarded { tries }
            | Outcome::Pass { tries }
            | Outcome::Fail { tries, .. } => tries,
        };
        for (k, n) in tries.iter().enumerate() {
            drawn[k] += u64::from(*n);
        }
        let ok = tries.len() - usize::from(matches!(o, Outcome::Exhausted { .. }));
        for a in accepted.iter_mut().take(ok) {
            *a += 1;
        }
        match o {
            Outcome::Exhausted { param, .. } => {
                return Err(FuzzError::AttemptsExhausted {
                    param: meta.params[param].0.clone(),
                    attempts: config.max_attempts,
                    rate: accepted[param] as f64 / drawn[param] as f64,
                })
            }
            Outcome::Discarded { .. } => report.discarded += 1,
            Outcome::Pass { .. } => {
                report.executed += 1;
                report.passes += 1;
            }
            Outcome::Fail { failure, .. } => {
                report.executed += 1;
                if failure.error.kind == ErrorKind::ArgType {
                    report.generator_bugs += 1;
                }
                report.failures.push(failure);
            }
        }
    }
    report.wall_time_ms = started.elapsed().as_millis();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front::load;
    use crate::grammar::parse_grammar;
    use crate::instrument::instrument_program;
    use crate::lang::LangRegistry;
    use crate::parse::recognize;

    fn cfg_of(src: &str) -> CoreCfg {
        let g = parse_grammar("T", src, &BTreeMap::new()).unwrap();
        crate::cfg::desugar(&g, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn singleton_language() {
        let cfg = cfg_of("start: \"a\";");
        for s in 0..20 {
            assert_eq!(generate(&cfg, &mut rng_for(s, 0), 16), "a");
        }
    }

    #[test]
    fn team_name_format_bounds() {
        let reg = LangRegistry::builtin();
        let cfg = reg.cfg("TeamNameFormat").unwrap();
        let depth = default_max_depth(cfg);
        for i in 0..1000 {
            let s = generate(cfg, &mut rng_for(3, i), depth);
            let n = s.chars().count();
            assert!((1..=20).contains(&n), "{s:?}");
            assert!(s.chars().all(|c| c.is_ascii_alphanumeric() || "-_ ".contains(c)), "{s:?}");
        }
    }

    #[test]
    fn depth_budget_is_respected() {
        let cfg = cfg_of("start: \"(\" start \")\" | \"x\";");
        for i in 0..200 {
            let s = generate(&cfg, &mut rng_for(9, i), 5);
            assert!(s.len() <= 9, "{s}");
            assert!(recognize(&cfg, &s));
        }
    }

    #[test]
    fn filtering() {
        let unit = load("f.flat", "").unwrap();
        let cfg = unit.langs.cfg("TeamNameFormat").unwrap().clone();
        let never = Predicate {
            var: "s".into(),
            pred: Expr::bool(false),
        };
        let p = GrammarProducer {
            lang: "TeamNameFormat".into(),
            cfg: cfg.clone(),
            pred: Some(never),
            max_depth: 16,
            max_attempts: 10,
        };
        assert_eq!(produce_filtered(&p, &unit, &mut rng_for(1, 0)), Err(10));
        let always = GrammarProducer { pred: None, ..p };
        let first = generate(&cfg, &mut rng_for(1, 0), 16);
        assert_eq!(produce_filtered(&always, &unit, &mut rng_for(1, 0)), Ok((Value::Str(first), 1)));
    }

    #[test]
    fn producers_for_signatures() {
        let src = "method m(url: URL, flag: Bool, n: {k: Int | k > 0}): Int { return 1; }\nmethod s(x: String): Int { return 1; }";
        let unit = load("p.flat", src).unwrap();
        let ps = synthesize_producers(&unit, &unit.metas["m"], &BTreeMap::new(), &FuzzConfig::default()).unwrap();
        assert!(matches!(&ps[0], Producer::GrammarBased(g) if g.lang == "URL" && g.pred.is_none()));
        assert!(matches!(&ps[1], Producer::Bool { pred: None, .. }));
        assert!(matches!(&ps[2], Producer::Int { pred: Some(_), .. }));
        let err = synthesize_producers(&unit, &unit.metas["s"], &BTreeMap::new(), &FuzzConfig::default()).unwrap_err();
        assert!(matches!(err, FuzzError::NoProducer { .. }));
        let mut o = BTreeMap::new();
        o.insert("x".to_string(), Producer::Constant(Value::from("k")));
        assert!(synthesize_producers(&unit, &unit.metas["s"], &o, &FuzzConfig::default()).is_ok());
    }

    #[test]
    fn coin_is_fair() {
        let unit = load("c.flat", "").unwrap();
        let p = Producer::Bool {
            pred: None,
            max_attempts: 1,
        };
        let mut rng = rng_for(5, 0);
        let heads = (0..10_000)
            .filter(|_| p.produce(&unit, &mut rng).unwrap().0 == Value::Bool(true))
            .count();
        // Five standard deviations around 5000.
        assert!((4750..=5250).contains(&heads), "{heads}");
    }

    #[test]
    fn residual_predicate_split() {
        let t = crate::front::parse_type("{s: TeamNameFormat | !startswith(s, \"-\")}").unwrap();
        let (lang, rest) = split_language(&crate::types::check_predicate(&t)).unwrap();
        assert_eq!(lang, "TeamNameFormat");
        assert_eq!(rest.unwrap().pred.to_string(), "!startswith(s, \"-\")");
    }

    #[test]
    fn buggy_getname_fails_on_empty_paths() {
        let unit = instrument_program(&load("g.flat", include_str!("../../../fixtures/getname_buggy.flat")).unwrap());
        let config = FuzzConfig {
            num: 200,
            seed: 11,
            ..FuzzConfig::default()
        };
        let r = fuzz(&unit, "getname", &config, &BTreeMap::new()).unwrap();
        assert_eq!(r.executed + r.discarded, 200);
        assert!(r.failures.iter().any(|f| f.error.kind == ErrorKind::ReturnType
            && f.error.actual == Some(Value::from(""))));
        let serial = fuzz(&unit, "getname", &FuzzConfig { parallel: false, ..config }, &BTreeMap::new()).unwrap();
        assert_eq!(serial.to_json(false), r.to_json(false));
    }

    #[test]
    fn preconditions_discard() {
        let src = "method m(n: Int): Int requires (n) -> n > 0 { assert n > 0; return n; }";
        let unit = instrument_program(&load("d.flat", src).unwrap());
        let r = fuzz(&unit, "m", &FuzzConfig { num: 300, seed: 2, ..FuzzConfig::default() }, &BTreeMap::new()).unwrap();
        assert!(r.discarded > 0);
        assert_eq!(r.failures.len(), 0);
        assert_eq!(r.passes + r.discarded, 300);
    }
}
