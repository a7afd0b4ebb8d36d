use super::*;
use crate::front::load;
use crate::instrument::instrument_program;
use crate::xpath::parse_selectors;

const GETNAME: &str = include_str!("../../../../fixtures/getname.flat");
const GETNAME_FIXED: &str = include_str!("../../../../fixtures/getname_fixed.flat");
const SAFESQL: &str = include_str!("../../../../fixtures/safesql.flat");
const INJECTION: &str = "https://localhost'); DROP TABLE users --/";

fn instrumented(file: &str, src: &str) -> Unit {
    let unit = load(file, src).unwrap();
    assert!(crate::check::simple_typecheck(&unit).is_empty());
    instrument_program(&unit)
}

fn run(unit: &Unit, m: &str, args: &[Value]) -> Result<Value> {
    run_method(unit, m, args)
}

#[test]
fn injection_is_an_argument_type_error() {
    let unit = instrumented("getname.flat", GETNAME);
    let e = run(&unit, "getname", &[INJECTION.into()]).unwrap_err();
    assert_eq!(e.kind, ErrorKind::ArgType);
    assert_eq!(e.expected.as_deref(), Some("URL"));
    assert_eq!(e.actual, Some(Value::from(INJECTION)));
    let text = e.to_string();
    assert_eq!(
        text,
        "Type mismatch for argument 0 of method getname\n  expected type: URL\n  actual value:  \"https://localhost'); DROP TABLE users --/\"\n  at getname.flat:2:1\n"
    );
}

#[test]
fn empty_path_returns_empty_host() {
    let unit = instrumented("getname.flat", GETNAME);
    let e = run(&unit, "getname", &["http://W".into()]).unwrap_err();
    assert_eq!(e.kind, ErrorKind::ReturnType);
    assert_eq!(e.expected.as_deref(), Some("Host"));
    assert_eq!(e.actual, Some(Value::from("")));
    assert_eq!(e.location.as_ref().unwrap().line, 8);
}

#[test]
fn fixed_version_returns_host() {
    let unit = instrumented("getname_fixed.flat", GETNAME_FIXED);
    assert_eq!(run(&unit, "getname", &["http://W".into()]).unwrap(), Value::from("W"));
    assert_eq!(
        run(&unit, "getname", &["https://a.example.com/x/y".into()]).unwrap(),
        Value::from("a.example.com")
    );
}

#[test]
fn safe_sql_local_type() {
    let unit = instrumented("safesql.flat", SAFESQL);
    let e = run(&unit, "save_hostname", &["localhost'); DROP TABLE users --".into()]).unwrap_err();
    assert_eq!(e.kind, ErrorKind::LocalType);
    assert_eq!(e.expected.as_deref(), Some("SafeSQL"));
    assert_eq!(
        e.actual,
        Some(Value::from("INSERT INTO hosts VALUES ('localhost'); DROP TABLE users --')"))
    );
    let ok = run(&unit, "save_hostname", &["example.com".into()]).unwrap();
    assert_eq!(ok, Value::from("INSERT INTO hosts VALUES ('example.com')"));
}

#[test]
fn expression_examples() {
    let unit = load("e.flat", "").unwrap();
    let mem = crate::front::parse_expr("\"http://W\" in URL").unwrap();
    assert_eq!(eval_closed(&unit, &mem).unwrap(), Value::Bool(true));
    let sel = Expr::new(
        ExprKind::Select(
            Box::new(Expr::str("http://example.com/a")),
            XPathRef {
                lang: Some("URL".into()),
                selectors: parse_selectors("..host").unwrap(),
            },
        ),
        Pos::new(1, 1),
    );
    assert_eq!(eval_closed(&unit, &sel).unwrap(), Value::from("example.com"));
    let lazy = crate::front::parse_expr("if true then 1 else div(1, 0)").unwrap();
    assert_eq!(eval_closed(&unit, &lazy).unwrap(), Value::from(1));
    let strict = crate::front::parse_expr("div(1, 0)").unwrap();
    assert_eq!(eval_closed(&unit, &strict).unwrap_err().kind, ErrorKind::DivisionByZero);
    let short = crate::front::parse_expr("false && 1 / 0 == 0").unwrap();
    assert_eq!(eval_closed(&unit, &short).unwrap(), Value::Bool(false));
}

#[test]
fn select_errors() {
    let src = "method m(u: URL): String { return u[..segment]; }";
    let unit = load("s.flat", src).unwrap();
    let e = run(&unit, "m", &["http://a/b/c".into()]).unwrap_err();
    assert_eq!(e.kind, ErrorKind::SelectError);
    assert!(e.message.contains("2"), "{}", e.message);
    let e = run(&unit, "m", &["http://a".into()]).unwrap_err();
    assert_eq!(e.kind, ErrorKind::SelectError);
    let e = run(&unit, "m", &["nope".into()]).unwrap_err();
    assert_eq!(e.kind, ErrorKind::SelectError);
}

#[test]
fn budgets_and_missing_return() {
    let unit = load("b.flat", "method spin(): Int { while true { } return 0; }").unwrap();
    let mut it = Interp::new(&unit);
    it.loop_budget = 1000;
    assert_eq!(it.run_method("spin", &[]).unwrap_err().kind, ErrorKind::BudgetExceeded);

    let unit = load("b.flat", "method down(n: Int): Int { var r = call down(n + 1); return r; }").unwrap();
    assert_eq!(run(&unit, "down", &[0.into()]).unwrap_err().kind, ErrorKind::BudgetExceeded);

    let unit = load("b.flat", "method m(n: Int): Int { if n > 0 { return 1; } }").unwrap();
    assert_eq!(run(&unit, "m", &[1.into()]).unwrap(), Value::from(1));
    assert_eq!(run(&unit, "m", &[0.into()]).unwrap_err().kind, ErrorKind::MissingReturn);
}

#[test]
fn preconditions_at_call_sites_and_call_stack() {
    let src = r#"
method half(n: Int): Int
  requires (n) -> n % 2 == 0
{ return n / 2; }

method outer(k: Int): Int {
  var h = call half(k);
  return h;
}
"#;
    let unit = instrumented("p.flat", src);
    assert_eq!(run(&unit, "outer", &[8.into()]).unwrap(), Value::from(4));
    let e = run(&unit, "outer", &[3.into()]).unwrap_err();
    assert_eq!(e.kind, ErrorKind::Pre);
    assert_eq!(e.method.as_deref(), Some("half"));
    assert_eq!(e.location.as_ref().unwrap().line, 7);
    assert!(e.to_string().contains("arguments:     (3)"), "{e}");
    // The entry method checks its own precondition.
    assert_eq!(run(&unit, "half", &[3.into()]).unwrap_err().kind, ErrorKind::Pre);
}

#[test]
fn call_stack_records_call_sites() {
    let src = "method inner(): Int { return 1 / 0; }\nmethod outer(): Int {\n  var x = call inner();\n  return x;\n}";
    let unit = load("c.flat", src).unwrap();
    let e = run(&unit, "outer", &[]).unwrap_err();
    assert_eq!(e.kind, ErrorKind::DivisionByZero);
    assert_eq!(e.call_stack.len(), 1);
    assert_eq!(e.call_stack[0].0, "outer");
    assert_eq!(e.call_stack[0].1.line, 3);
}

#[test]
fn usage_errors() {
    let unit = load("u.flat", "method m(n: Int): Int { return n; }").unwrap();
    assert_eq!(run(&unit, "nope", &[]).unwrap_err().kind, ErrorKind::Usage);
    assert_eq!(run(&unit, "m", &[]).unwrap_err().kind, ErrorKind::Usage);
    assert_eq!(run(&unit, "m", &["x".into()]).unwrap_err().kind, ErrorKind::Usage);
}

#[test]
fn user_asserts_and_closures() {
    let src = r#"
def inc(n: Int): Int = n + 1;
method m(n: Int): Int {
  var k: Int = ((f: Int) -> f * 2)(inc(n));
  var g = (if n > 0 then inc else inc)(k);
  assert g < 10;
  return g;
}
"#;
    let unit = load("a.flat", src).unwrap();
    assert_eq!(run(&unit, "m", &[1.into()]).unwrap(), Value::from(5));
    let e = run(&unit, "m", &[9.into()]).unwrap_err();
    assert_eq!(e.kind, ErrorKind::UserAssert);
    let inst = instrument_program(&unit);
    assert_eq!(run(&inst, "m", &[9.into()]).unwrap_err().kind, ErrorKind::UserAssert);
}

#[test]
fn call_hook_counts_function_applications() {
    let src = r#"
def mark(n: Int): Int = n;
method callee(a: {x: Int | x > 0}): {y: Int | y > 0} { return mark(a); }
method m(n: Int): Int {
  var v: {x: Int | x > 0} = mark(n);
  var r = call callee(mark(v));
  return mark(r);
}
"#;
    for unit in [load("h.flat", src).unwrap(), instrumented("h.flat", src)] {
        let mut count = 0;
        {
            let mut it = Interp::new(&unit);
            it.on_call(|name, _| {
                if name == "mark" {
                    count += 1;
                }
            });
            assert_eq!(it.run_method("m", &[5.into()]).unwrap(), Value::from(5));
        }
        assert_eq!(count, 4);
    }
}

#[test]
fn deterministic() {
    let unit = instrumented("getname.flat", GETNAME);
    let a = run(&unit, "getname", &["ftp://x.y".into()]);
    let b = run(&unit, "getname", &["ftp://x.y".into()]);
    assert_eq!(a, b);
}
