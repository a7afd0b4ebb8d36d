//! Type normalization and runtime-check predicates.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::ast::{Expr, ExprKind, Param, SimpleType, Type, WILDCARD};

/// A refinement over a simple base type: `{var: base | pred}`.
#[derive(Debug, Clone)]
pub struct NormalizedType {
    pub var: String,
    pub base: SimpleType,
    pub pred: Expr,
}

impl PartialEq for NormalizedType {
    fn eq(&self, other: &Self) -> bool {
        self.to_type() == other.to_type()
    }
}

impl NormalizedType {
    /// Embed back into the surface type language.
    pub fn to_type(&self) -> Type {
        Type::refine(self.var.clone(), Type::Simple(self.base.clone()), self.pred.clone())
    }

    pub fn predicate(&self) -> Predicate {
        Predicate {
            var: self.var.clone(),
            pred: self.pred.clone(),
        }
    }
}

impl fmt::Display for NormalizedType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_type())
    }
}

/// `λvar. pred`
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub var: String,
    pub pred: Expr,
}

impl Predicate {
    pub fn always() -> Self {
        Predicate {
            var: WILDCARD.to_string(),
            pred: Expr::bool(true),
        }
    }

    pub fn is_trivially_true(&self) -> bool {
        is_trivially_true(&self.pred)
    }

    /// The body with `arg` substituted for the bound variable.
    pub fn instantiate(&self, arg: &Expr) -> Expr {
        if self.var == WILDCARD {
            self.pred.clone()
        } else {
            subst(&self.pred, &self.var, arg)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unknown language type `{0}`")]
    UnresolvedLang(String),
}

/// Normalize `t` into a single refinement over a simple type.
pub fn normalize(t: &Type) -> NormalizedType {
    match t {
        Type::Simple(s) => NormalizedType {
            var: WILDCARD.to_string(),
            base: s.clone(),
            pred: Expr::bool(true),
        },
        Type::Lang(l) => NormalizedType {
            var: "s".to_string(),
            base: SimpleType::String,
            pred: Expr::in_lang(Expr::var("s"), l.clone()),
        },
        Type::Refine { var, base, pred } => {
            let inner = normalize(base);
            let (y, e1) = (inner.var, inner.pred);
            let e = (**pred).clone();
            let target = if var == WILDCARD { y.clone() } else { var.clone() };
            if target == WILDCARD {
                return NormalizedType {
                    var: target,
                    base: inner.base,
                    pred: Expr::and(e1, e),
                };
            }
            let mut e1_free = free_vars(&e1);
            if y != WILDCARD {
                e1_free.remove(&y);
            }
            let mut e_free = free_vars(&e);
            if var != WILDCARD {
                e_free.remove(var);
            }
            // Binding `target` must not capture a free occurrence in either layer.
            let binder = if e1_free.contains(&target) || e_free.contains(&target) {
                fresh_name(&target, |n| e1_free.contains(n) || e_free.contains(n) || n == y || n == var)
            } else {
                target
            };
            let bv = Expr::var(binder.clone());
            let rename = |body: Expr, from: &str| {
                if from == WILDCARD || from == binder {
                    body
                } else {
                    subst(&body, from, &bv)
                }
            };
            NormalizedType {
                pred: Expr::and(rename(e1, &y), rename(e, var)),
                var: binder,
                base: inner.base,
            }
        }
    }
}

/// Normalize after checking that every language name is known.
pub fn normalize_checked(t: &Type, is_lang: impl Fn(&str) -> bool) -> Result<NormalizedType, TypeError> {
    check_langs(t, &is_lang)?;
    Ok(normalize(t))
}

fn check_langs(t: &Type, is_lang: &impl Fn(&str) -> bool) -> Result<(), TypeError> {
    match t {
        Type::Simple(_) => Ok(()),
        Type::Lang(l) if is_lang(l) => Ok(()),
        Type::Lang(l) => Err(TypeError::UnresolvedLang(l.clone())),
        Type::Refine { base, pred, .. } => {
            check_langs(base, is_lang)?;
            let mut langs = Vec::new();
            expr_langs(pred, &mut langs);
            match langs.into_iter().find(|l| !is_lang(l)) {
                Some(l) => Err(TypeError::UnresolvedLang(l)),
                None => Ok(()),
            }
        }
    }
}

fn expr_langs(e: &Expr, out: &mut Vec<String>) {
    match &e.kind {
        ExprKind::InLang(s, l) => {
            out.push(l.clone());
            expr_langs(s, out);
        }
        _ => for_each_child(e, |c| expr_langs(c, out)),
    }
}

/// The membership predicate a value of type `t` must satisfy.
pub fn check_predicate(t: &Type) -> Predicate {
    normalize(t).predicate()
}

/// Syntactic check: `true` or a conjunction of `true`s.
pub fn is_trivially_true(pred: &Expr) -> bool {
    match &pred.kind {
        ExprKind::Bool(true) => true,
        ExprKind::Apply(f, args) => {
            matches!(&f.kind, ExprKind::Var(op) if op == "&&")
                && args.len() == 2
                && args.iter().all(is_trivially_true)
        }
        _ => false,
    }
}

pub(crate) fn for_each_child(e: &Expr, mut f: impl FnMut(&Expr)) {
    match &e.kind {
        ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::Var(_) => {}
        ExprKind::Apply(g, args) => {
            f(g);
            args.iter().for_each(f);
        }
        ExprKind::Lambda(_, body) => f(body),
        ExprKind::If(c, t, el) => {
            f(c);
            f(t);
            f(el);
        }
        ExprKind::InLang(s, _) | ExprKind::Select(s, _) => f(s),
    }
}

/// Free variable names of `e`, operators and builtin names included.
pub fn free_vars(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect_free(e, &mut Vec::new(), &mut out);
    out
}

fn collect_free(e: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match &e.kind {
        ExprKind::Var(v) => {
            if !bound.contains(v) {
                out.insert(v.clone());
            }
        }
        ExprKind::Lambda(params, body) => {
            let n = bound.len();
            bound.extend(params.iter().map(|p| p.name.clone()));
            collect_free(body, bound, out);
            bound.truncate(n);
        }
        _ => for_each_child(e, |c| collect_free(c, bound, out)),
    }
}

/// Every identifier mentioned anywhere in `e`, bound or free.
pub fn all_names(e: &Expr, out: &mut BTreeSet<String>) {
    match &e.kind {
        ExprKind::Var(v) => {
            out.insert(v.clone());
        }
        ExprKind::Lambda(params, body) => {
            out.extend(params.iter().map(|p| p.name.clone()));
            all_names(body, out);
        }
        _ => for_each_child(e, |c| all_names(c, out)),
    }
}

/// `base`, or `base_1`, `base_2`, ... : the first candidate not `taken`.
pub fn fresh_name(base: &str, taken: impl Fn(&str) -> bool) -> String {
    if !taken(base) {
        return base.to_string();
    }
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|n| !taken(n))
        .expect("unbounded candidate supply")
}

/// Capture-avoiding substitution `e[replacement/x]`.
pub fn subst(e: &Expr, x: &str, replacement: &Expr) -> Expr {
    let rfree = free_vars(replacement);
    subst_inner(e, x, replacement, &rfree)
}

fn subst_inner(e: &Expr, x: &str, r: &Expr, rfree: &BTreeSet<String>) -> Expr {
    let pos = e.pos;
    let kind = match &e.kind {
        ExprKind::Var(v) if v == x => return r.clone().at(pos),
        ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::Var(_) => {
            return e.clone();
        }
        ExprKind::Apply(f, args) => ExprKind::Apply(
            Box::new(subst_inner(f, x, r, rfree)),
            args.iter().map(|a| subst_inner(a, x, r, rfree)).collect(),
        ),
        ExprKind::Lambda(params, body) => {
            if params.iter().any(|p| p.name == x) {
                return e.clone();
            }
            let mut params = params.clone();
            let mut body = (**body).clone();
            let body_free = free_vars(&body);
            if !body_free.contains(x) {
                return e.clone();
            }
            for i in 0..params.len() {
                if rfree.contains(&params[i].name) {
                    let old = params[i].name.clone();
                    let fresh = fresh_name(&old, |n| {
                        rfree.contains(n)
                            || body_free.contains(n)
                            || n == x
                            || params.iter().any(|p| p.name == n)
                    });
                    body = subst(&body, &old, &Expr::var(fresh.clone()));
                    params[i] = Param {
                        name: fresh,
                        ty: params[i].ty.clone(),
                    };
                }
            }
            ExprKind::Lambda(params, Box::new(subst_inner(&body, x, r, rfree)))
        }
        ExprKind::If(c, t, el) => ExprKind::If(
            Box::new(subst_inner(c, x, r, rfree)),
            Box::new(subst_inner(t, x, r, rfree)),
            Box::new(subst_inner(el, x, r, rfree)),
        ),
        ExprKind::InLang(s, l) => ExprKind::InLang(Box::new(subst_inner(s, x, r, rfree)), l.clone()),
        ExprKind::Select(s, p) => ExprKind::Select(Box::new(subst_inner(s, x, r, rfree)), p.clone()),
    };
    Expr::new(kind, pos)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(a: Expr, b: Expr) -> Expr {
        Expr::call(">", vec![a, b])
    }

    fn lt(a: Expr, b: Expr) -> Expr {
        Expr::call("<", vec![a, b])
    }

    #[test]
    fn simple_types_normalize_to_true() {
        let n = normalize(&Type::int());
        assert_eq!(n.var, WILDCARD);
        assert_eq!(n.base, SimpleType::Int);
        assert!(n.pred.is_true());
        assert!(check_predicate(&Type::string()).is_trivially_true());
    }

    #[test]
    fn language_types_normalize_to_membership() {
        let n = normalize(&Type::Lang("Email".into()));
        assert_eq!(n.var, "s");
        assert_eq!(n.base, SimpleType::String);
        assert_eq!(n.pred, Expr::in_lang(Expr::var("s"), "Email"));
    }

    #[test]
    fn nested_refinements_collapse() {
        let inner = Type::refine("n", Type::int(), gt(Expr::var("n"), Expr::int(0)));
        let t = Type::refine("n", inner, lt(Expr::var("n"), Expr::int(10)));
        let n = normalize(&t);
        assert_eq!(n.var, "n");
        assert_eq!(
            n.pred,
            Expr::call("&&", vec![gt(Expr::var("n"), Expr::int(0)), lt(Expr::var("n"), Expr::int(10))])
        );
    }

    #[test]
    fn outer_binder_renames_inner() {
        let inner = Type::refine("y", Type::int(), gt(Expr::var("y"), Expr::int(0)));
        let t = Type::refine("x", inner, lt(Expr::var("x"), Expr::int(10)));
        let n = normalize(&t);
        assert_eq!(n.var, "x");
        assert_eq!(
            n.pred,
            Expr::call("&&", vec![gt(Expr::var("x"), Expr::int(0)), lt(Expr::var("x"), Expr::int(10))])
        );
    }

    #[test]
    fn capture_is_avoided() {
        // {x: {y: Int | y > x} | x < 10}: the inner `x` is free and must
        // stay distinct from the outer binder.
        let inner = Type::refine("y", Type::int(), gt(Expr::var("y"), Expr::var("x")));
        let t = Type::refine("x", inner, lt(Expr::var("x"), Expr::int(10)));
        let n = normalize(&t);
        assert_eq!(n.var, "x_1");
        assert_eq!(
            n.pred,
            Expr::call(
                "&&",
                vec![gt(Expr::var("x_1"), Expr::var("x")), lt(Expr::var("x_1"), Expr::int(10))]
            )
        );
    }

    #[test]
    fn wildcard_outer_binder_keeps_inner() {
        let inner = Type::refine("n", Type::int(), gt(Expr::var("n"), Expr::int(0)));
        let t = Type::refine(WILDCARD, inner, Expr::bool(true));
        let n = normalize(&t);
        assert_eq!(n.var, "n");
        assert_eq!(n.pred, gt(Expr::var("n"), Expr::int(0)));
    }

    #[test]
    fn trivially_true() {
        assert!(is_trivially_true(&Expr::bool(true)));
        assert!(is_trivially_true(&Expr::call("&&", vec![Expr::bool(true), Expr::bool(true)])));
        assert!(!is_trivially_true(&Expr::in_lang(Expr::var("s"), "URL")));
        assert!(!is_trivially_true(&Expr::call("||", vec![Expr::bool(true), Expr::bool(true)])));
    }

    #[test]
    fn substitution_renames_lambda_params() {
        // ((y) -> x + y)[y/x] must not capture.
        let lam = Expr::lambda(
            vec![Param::untyped("y")],
            Expr::call("+", vec![Expr::var("x"), Expr::var("y")]),
        );
        let out = subst(&lam, "x", &Expr::var("y"));
        match &out.kind {
            ExprKind::Lambda(ps, body) => {
                assert_eq!(ps[0].name, "y_1");
                assert_eq!(**body, Expr::call("+", vec![Expr::var("y"), Expr::var("y_1")]));
            }
            _ => panic!("expected lambda"),
        }
    }

    #[test]
    fn unresolved_language() {
        assert_eq!(
            normalize_checked(&Type::Lang("Foo".into()), |_| false),
            Err(TypeError::UnresolvedLang("Foo".into()))
        );
        assert!(normalize_checked(&Type::Lang("Foo".into()), |l| l == "Foo").is_ok());
    }
}
