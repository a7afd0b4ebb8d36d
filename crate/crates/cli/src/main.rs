use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use flat_core::cfg::CoreCfg;
use flat_core::front::print_program;
use flat_core::fuzz::{self, grammar_producer, FuzzConfig, Producer};
use flat_core::parse::parse_tree;
use flat_core::xpath::{parse_xpath, select_all};
use flat_core::{check, instrument_program, ErrorKind, Interp, LangRegistry, Unit, Value};

/// Exit status of a run that hit a type or contract error.
const EXIT_RUNTIME: u8 = 2;
/// Exit status of a fuzz campaign that found failures.
const EXIT_FAILURES: u8 = 3;
const SHOWN_FAILURES: usize = 10;

#[derive(Parser)]
#[command(name = "flatc", version, about = "Checker, interpreter and fuzzer for .flat programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, resolve and typecheck programs.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Print diagnostics as a JSON array on stdout.
        #[arg(long)]
        json: bool,
    },
    /// Print the instrumented program.
    Instrument {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run one method on JSON arguments.
    Run {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        method: String,
        /// JSON array with one element per parameter.
        #[arg(long, default_value = "[]")]
        args: String,
        /// Print errors as JSON on stdout.
        #[arg(long)]
        json: bool,
    },
    /// Test a method on random inputs drawn from its parameter types.
    Fuzz {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = fuzz::DEFAULT_NUM)]
        num: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        max_depth: Option<u32>,
        #[arg(long, default_value_t = fuzz::DEFAULT_MAX_ATTEMPTS, value_parser = clap::value_parser!(u32).range(1..))]
        max_attempts: u32,
        /// Draw a parameter from a standalone grammar file: `param=file`.
        #[arg(long, value_name = "PARAM=FILE")]
        using: Vec<String>,
        /// Fix a parameter to a JSON value: `param=json`.
        #[arg(long, value_name = "PARAM=JSON")]
        constant: Vec<String>,
        /// Write the JSON report to this file, or `-` for stdout.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Parse a string and optionally dump its derivation tree.
    Parse {
        #[command(flatten)]
        lang: LangArgs,
        /// The subject, or a file holding it.
        input: String,
        #[arg(long)]
        tree: bool,
    },
    /// Print the yields of all nodes a path selects, one per line.
    Select {
        #[command(flatten)]
        lang: LangArgs,
        #[arg(long)]
        xpath: String,
        input: String,
    },
    /// Print random sentences of a language.
    Gen {
        #[command(flatten)]
        lang: LangArgs,
        #[arg(long, default_value_t = 10)]
        num: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        max_depth: Option<u32>,
        /// Print a JSON array instead of one sentence per line.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct SeedArg {
    #[arg(long, env = "FLATC_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
#[group(required = true, multiple = true)]
struct LangArgs {
    /// A built-in language or one defined in `--program`.
    #[arg(long)]
    lang: Option<String>,
    /// A standalone grammar file; its language is named after the file stem.
    #[arg(long, conflicts_with = "lang")]
    grammar: Option<PathBuf>,
    /// Programs whose `lang` definitions become available.
    #[arg(long = "program", requires = "lang")]
    programs: Vec<PathBuf>,
}

type Outcome = Result<ExitCode, String>;

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

/// Load `files` as one program. Front-end errors and type diagnostics are
/// reported on stderr and turned into `Err`.
fn load(files: &[PathBuf]) -> Result<Unit, String> {
    let sources = files
        .iter()
        .map(|p| Ok((p.display().to_string(), read(p)?)))
        .collect::<Result<Vec<_>, String>>()?;
    let unit = flat_core::load_files(&sources).map_err(|e| e.to_string())?;
    let diags = check::simple_typecheck(&unit);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(ToString::to_string).collect();
        return Err(lines.join("\n"));
    }
    Ok(unit)
}

fn stem(path: &Path) -> Result<String, String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| format!("cannot name a language after {}", path.display()))
}

/// Add the grammar in `path` to `reg` and return its core grammar.
fn define_from_file(reg: &mut LangRegistry, path: &Path) -> Result<Arc<CoreCfg>, String> {
    let name = stem(path)?;
    reg.define(&name, &read(path)?)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(reg.cfg(&name).expect("just defined").clone())
}

fn resolve_lang(args: &LangArgs) -> Result<Arc<CoreCfg>, String> {
    let mut reg = if args.programs.is_empty() {
        LangRegistry::builtin()
    } else {
        let sources = args
            .programs
            .iter()
            .map(|p| Ok((p.display().to_string(), read(p)?)))
            .collect::<Result<Vec<_>, String>>()?;
        flat_core::load_files(&sources).map_err(|e| e.to_string())?.langs
    };
    if let Some(g) = &args.grammar {
        return define_from_file(&mut reg, g);
    }
    let name = args.lang.as_deref().expect("clap requires --lang or --grammar");
    reg.cfg(name)
        .cloned()
        .ok_or_else(|| format!("unknown language `{name}`"))
}

/// The subject string: the contents of `input` when it names a file (minus
/// one trailing newline), otherwise `input` itself.
fn subject(input: &str) -> Result<String, String> {
    let p = Path::new(input);
    if p.is_file() {
        let s = read(p)?;
        Ok(s.strip_suffix('\n').map(str::to_string).unwrap_or(s))
    } else {
        Ok(input.to_string())
    }
}

fn split_binding(s: &str) -> Result<(&str, &str), String> {
    s.split_once('=')
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| format!("expected PARAM=VALUE, got `{s}`"))
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

fn to_json_text(v: &serde_json::Value) -> String {
    serde_json::to_string(v).expect("JSON values serialize")
}

fn cmd_check(files: &[PathBuf], json: bool) -> Outcome {
    let sources = files
        .iter()
        .map(|p| Ok((p.display().to_string(), read(p)?)))
        .collect::<Result<Vec<_>, String>>()?;
    let unit = match flat_core::load_files(&sources) {
        Ok(u) => u,
        Err(e) => {
            if json {
                let v = serde_json::json!([{
                    "code": e.code(),
                    "file": &*e.file,
                    "line": e.pos.line,
                    "column": e.pos.col,
                    "message": e.to_string(),
                }]);
                println!("{}", to_json_text(&v));
            }
            return Err(e.to_string());
        }
    };
    for w in &unit.warnings {
        eprintln!("warning: {w}");
    }
    let diags = check::simple_typecheck(&unit);
    if json {
        let v: Vec<serde_json::Value> = diags
            .iter()
            .map(|d| {
                serde_json::json!({
                    "code": d.code,
                    "file": &*d.file,
                    "line": d.pos.line,
                    "column": d.pos.col,
                    "message": d.msg,
                })
            })
            .collect();
        println!("{}", to_json_text(&serde_json::Value::from(v)));
    }
    for d in &diags {
        eprintln!("{d}");
    }
    Ok(if diags.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_instrument(files: &[PathBuf]) -> Outcome {
    let unit = load(files)?;
    print!("{}", print_program(&instrument_program(&unit).program));
    Ok(ExitCode::SUCCESS)
}

fn parse_args(unit: &Unit, method: &str, args: &str) -> Result<Vec<Value>, String> {
    let meta = unit
        .metas
        .get(method)
        .ok_or_else(|| format!("no method `{method}`"))?;
    let json: serde_json::Value = serde_json::from_str(args).map_err(|e| format!("--args is not JSON: {e}"))?;
    let items = json.as_array().ok_or("--args must be a JSON array")?;
    if items.len() != meta.params.len() {
        return Err(format!(
            "method `{method}` takes {} arguments, got {}",
            meta.params.len(),
            items.len()
        ));
    }
    items
        .iter()
        .zip(&meta.params)
        .map(|(v, (x, t))| {
            let want = check::erase(t);
            Value::from_json(v, &want).ok_or_else(|| format!("argument `{x}` must be a JSON {want}, got {v}"))
        })
        .collect()
}

fn cmd_run(files: &[PathBuf], method: &str, args: &str, json: bool) -> Outcome {
    let unit = instrument_program(&load(files)?);
    let values = parse_args(&unit, method, args)?;
    let result = Interp::new(&unit).run_method(method, &values);
    match result {
        Ok(v) => {
            println!("{}", to_json_text(&v.to_json()));
            Ok(ExitCode::SUCCESS)
        }
        Err(e) if e.kind == ErrorKind::Usage => Err(e.message),
        Err(e) => {
            if json {
                println!("{}", to_json_text(&e.to_json()));
            }
            eprint!("{e}");
            Ok(ExitCode::from(EXIT_RUNTIME))
        }
    }
}

struct FuzzArgs<'a> {
    files: &'a [PathBuf],
    method: &'a str,
    config: FuzzConfig,
    using: &'a [String],
    constant: &'a [String],
    json: Option<&'a Path>,
}

fn overrides(unit: &mut Unit, a: &FuzzArgs<'_>) -> Result<BTreeMap<String, Producer>, String> {
    let meta = unit
        .metas
        .get(a.method)
        .ok_or_else(|| format!("no method `{}`", a.method))?
        .clone();
    let param_type = |x: &str| {
        meta.params
            .iter()
            .find(|(p, _)| p == x)
            .map(|(_, t)| check::erase(t))
            .ok_or_else(|| format!("method `{}` has no parameter `{x}`", a.method))
    };
    let mut out = BTreeMap::new();
    for u in a.using {
        let (x, file) = split_binding(u)?;
        param_type(x)?;
        let path = Path::new(file);
        let cfg = define_from_file(&mut unit.langs, path)?;
        let g = grammar_producer(&stem(path)?, cfg, None, &a.config).map_err(|e| e.to_string())?;
        out.insert(x.to_string(), Producer::GrammarBased(g));
    }
    for c in a.constant {
        let (x, text) = split_binding(c)?;
        let want = param_type(x)?;
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("--constant {x}: {e}"))?;
        let v = Value::from_json(&v, &want).ok_or_else(|| format!("--constant {x}: expected a JSON {want}"))?;
        out.insert(x.to_string(), Producer::Constant(v));
    }
    Ok(out)
}

fn cmd_fuzz(a: FuzzArgs<'_>) -> Outcome {
    let mut unit = instrument_program(&load(a.files)?);
    let overrides = overrides(&mut unit, &a)?;
    let report = fuzz::fuzz(&unit, a.method, &a.config, &overrides).map_err(|e| e.to_string())?;

    let files: Vec<String> = a.files.iter().map(|p| shell_quote(&p.display().to_string())).collect();
    for f in report.failures.iter().take(SHOWN_FAILURES) {
        eprintln!("failure #{} (replay seed {}):", f.index, f.replay_seed);
        eprint!("{}", f.error);
        let inputs = serde_json::Value::from(f.inputs.iter().map(Value::to_json).collect::<Vec<_>>());
        eprintln!(
            "  replay: flatc run {} --method {} --args {}",
            files.join(" "),
            a.method,
            shell_quote(&to_json_text(&inputs))
        );
    }
    if report.failures.len() > SHOWN_FAILURES {
        eprintln!("... and {} more failures", report.failures.len() - SHOWN_FAILURES);
    }
    if report.generator_bugs > 0 {
        eprintln!(
            "warning: {} generated inputs did not match their parameter types",
            report.generator_bugs
        );
    }
    let summary = format!(
        "{}: {} requested, {} executed, {} discarded, {} passed, {} failed",
        report.method,
        report.requested,
        report.executed,
        report.discarded,
        report.passes,
        report.failures.len()
    );
    match a.json {
        Some(p) if p == Path::new("-") => {
            println!("{}", to_json_text(&report.to_json(true)));
            eprintln!("{summary}");
        }
        Some(p) => {
            let text = serde_json::to_string_pretty(&report.to_json(true)).expect("JSON values serialize");
            fs::write(p, text + "\n").map_err(|e| format!("cannot write {}: {e}", p.display()))?;
            println!("{summary}");
        }
        None => println!("{summary}"),
    }
    Ok(if report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURES)
    })
}

fn cmd_parse(lang: &LangArgs, input: &str, tree: bool) -> Outcome {
    let cfg = resolve_lang(lang)?;
    let t = parse_tree(&cfg, &subject(input)?).map_err(|e| e.to_string())?;
    if tree {
        println!("{}", serde_json::to_string_pretty(&t.to_json()).expect("JSON values serialize"));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_select(lang: &LangArgs, xpath: &str, input: &str) -> Outcome {
    let cfg = resolve_lang(lang)?;
    let path = parse_xpath(&cfg, xpath).map_err(|e| e.to_string())?;
    let t = parse_tree(&cfg, &subject(input)?).map_err(|e| e.to_string())?;
    for m in select_all(&t, &path) {
        println!("{m}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(lang: &LangArgs, num: usize, seed: u64, max_depth: Option<u32>, json: bool) -> Outcome {
    let cfg = resolve_lang(lang)?;
    let min = cfg.min_depth(cfg.start());
    let depth = max_depth.unwrap_or_else(|| fuzz::default_max_depth(&cfg));
    if depth < min {
        return Err(format!("--max-depth {depth} is below the minimal derivation depth {min}"));
    }
    let samples: Vec<String> = (0..num as u64)
        .map(|i| fuzz::generate(&cfg, &mut fuzz::rng_for(seed, i), depth))
        .collect();
    if json {
        println!("{}", to_json_text(&serde_json::Value::from(samples)));
    } else {
        for s in samples {
            println!("{s}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Check { files, json } => cmd_check(files, *json),
        Command::Instrument { files } => cmd_instrument(files),
        Command::Run {
            files,
            method,
            args,
            json,
        } => cmd_run(files, method, args, *json),
        Command::Fuzz {
            files,
            method,
            num,
            seed,
            max_depth,
            max_attempts,
            using,
            constant,
            json,
        } => cmd_fuzz(FuzzArgs {
            files,
            method,
            config: FuzzConfig {
                num: *num,
                seed: seed.seed,
                max_depth: *max_depth,
                max_attempts: *max_attempts,
                parallel: true,
            },
            using,
            constant,
            json: json.as_deref(),
        }),
        Command::Parse { lang, input, tree } => cmd_parse(lang, input, *tree),
        Command::Select { lang, xpath, input } => cmd_select(lang, xpath, input),
        Command::Gen {
            lang,
            num,
            seed,
            max_depth,
            json,
        } => cmd_gen(lang, *num, seed.seed, *max_depth, *json),
    };
    match outcome {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
