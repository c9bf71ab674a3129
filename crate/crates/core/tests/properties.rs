use std::collections::BTreeMap;

use proptest::prelude::*;

use shapely::check::{decide, Goal, Verdict};
use shapely::eval::{run_function, Closures, EvalOptions, Literal};
use shapely::infer::{default_vars, derive_polynomial, nca_nodes};
use shapely::poly::{Monomial, Polynomial, Rational};
use shapely::syntax::{check_scopes, desugar, print_program, validate_restriction};
use shapely::types::{type_equiv, ConstraintSet, SizedType};
use shapely::parse_program;

// ---------------------------------------------------------------------------
// polynomials

fn arb_poly() -> impl Strategy<Value = Polynomial> {
    let term = (-12i64..=12, 1i64..=4, 0u32..=2, 0u32..=2, 0u32..=1);
    prop::collection::vec(term, 0..6).prop_map(|ts| {
        Polynomial::from_terms(ts.into_iter().map(|(n, d, x, y, z)| {
            (
                Rational::new(n.into(), d.into()),
                Monomial::from_powers([("x", x), ("y", y), ("z", z)]),
            )
        }))
    })
}

fn point(x: i64, y: i64, z: i64) -> BTreeMap<String, Rational> {
    [("x", x), ("y", y), ("z", z)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), Rational::from_integer(v.into())))
        .collect()
}

proptest! {
    #[test]
    fn ring_laws(a in arb_poly(), b in arb_poly(), c in arb_poly()) {
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
        prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        prop_assert!((&a - &a).is_zero());
        prop_assert_eq!(&a * &Polynomial::one(), a.clone());
    }

    #[test]
    fn evaluation_is_a_homomorphism(a in arb_poly(), b in arb_poly(), x in -5i64..5, y in -5i64..5, z in -5i64..5) {
        let pt = point(x, y, z);
        let (va, vb) = (a.eval(&pt).unwrap(), b.eval(&pt).unwrap());
        prop_assert_eq!((&a * &b).eval(&pt).unwrap(), &va * &vb);
        prop_assert_eq!((&a + &b).eval(&pt).unwrap(), va + vb);
    }

    #[test]
    fn display_parses_back(a in arb_poly()) {
        let back: Polynomial = a.to_string().parse().unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn interpolation_recovers_polynomials(a in arb_poly()) {
        let vars: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let d = a.total_degree();
        let config = nca_nodes(&vars, d, &[], d as u64).unwrap();
        let values: Vec<Rational> = config
            .nodes
            .iter()
            .map(|n| a.eval_nat(&vars.iter().cloned().zip(n.iter().copied()).collect::<Vec<_>>()).unwrap())
            .collect();
        prop_assert_eq!(derive_polynomial(d, &vars, &config.nodes, &values).unwrap(), a);
    }

    #[test]
    fn nodes_are_distinct_and_counted(k in 1usize..=3, d in 0u32..=4) {
        let c = nca_nodes(&default_vars(k), d, &[], d as u64).unwrap();
        let mut seen = c.nodes.clone();
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), c.nodes.len());
        prop_assert_eq!(c.nodes.len() as u64, shapely::infer::required_measurements(d, k));
    }
}

// ---------------------------------------------------------------------------
// entailment and type equivalence

fn arb_size() -> impl Strategy<Value = Polynomial> {
    (0i64..3, 0i64..3, 0i64..3, 0i64..2).prop_map(|(c, n, m, nm)| {
        let (pn, pm) = (Polynomial::var("n"), Polynomial::var("m"));
        &(&(&Polynomial::int(c) + &pn.scale(&Rational::from_integer(n.into())))
            + &pm.scale(&Rational::from_integer(m.into())))
            + &(&pn * &pm).scale(&Rational::from_integer(nm.into()))
    })
}

fn arb_type() -> impl Strategy<Value = SizedType> {
    let leaf = prop_oneof![Just(SizedType::Int), Just(SizedType::Var("a".into()))];
    leaf.prop_recursive(2, 4, 1, |inner| {
        (inner, arb_size()).prop_map(|(e, p)| SizedType::list(e, p))
    })
}

fn arb_d() -> impl Strategy<Value = ConstraintSet> {
    prop::collection::vec((prop_oneof![Just("n"), Just("m")], 0i64..3), 0..3).prop_map(|eqs| ConstraintSet {
        equations: eqs
            .into_iter()
            .map(|(v, c)| &Polynomial::var(v) - &Polynomial::int(c))
            .collect(),
    })
}

proptest! {
    #[test]
    fn type_equivalence_is_an_equivalence(d in arb_d(), a in arb_type(), b in arb_type(), c in arb_type()) {
        prop_assert!(type_equiv(&d, &a, &a).unwrap());
        let ab = type_equiv(&d, &a, &b).unwrap();
        prop_assert_eq!(ab, type_equiv(&d, &b, &a).unwrap());
        if ab && type_equiv(&d, &b, &c).unwrap() {
            prop_assert!(type_equiv(&d, &a, &c).unwrap());
        }
    }

    #[test]
    fn adding_premises_preserves_entailment(d in arb_d(), extra in arb_d(), p in arb_size(), q in arb_size()) {
        let goal = Goal::PolyEq(p, q);
        let weak = decide(&d, &goal).unwrap();
        let mut stronger = d.clone();
        stronger.equations.extend(extra.equations);
        let strong = decide(&stronger, &goal).unwrap();
        if weak.ok() {
            prop_assert!(strong.ok());
        }
        if weak == Verdict::Vacuous {
            prop_assert_eq!(strong, Verdict::Vacuous);
        }
    }
}

// ---------------------------------------------------------------------------
// generated programs

#[derive(Debug, Clone)]
enum L {
    Scope(usize),
    Nil,
    Cons(Box<I>, Box<L>),
    Pair(Box<I>, Box<I>),
    Append(Box<L>, Box<L>),
    Copy(Box<L>),
    If(Box<I>, Box<L>, Box<L>),
    Let(Box<L>, Box<L>),
    Match(usize, Box<L>, Box<L>),
}

#[derive(Debug, Clone)]
enum I {
    X,
    Const(i64),
    Add(Box<I>, Box<I>),
    Sub(Box<I>, Box<I>),
    Length(Box<L>),
}

fn arb_i(l: BoxedStrategy<L>) -> BoxedStrategy<I> {
    let leaf = prop_oneof![Just(I::X), (-3i64..4).prop_map(I::Const)];
    leaf.prop_recursive(2, 6, 2, move |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| I::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| I::Sub(Box::new(a), Box::new(b))),
            l.clone().prop_map(|l| I::Length(Box::new(l))),
        ]
    })
    .boxed()
}

fn arb_l() -> BoxedStrategy<L> {
    let leaf = prop_oneof![(0usize..8).prop_map(L::Scope), Just(L::Nil)].boxed();
    leaf.prop_recursive(4, 24, 3, |inner| {
        let ints = arb_i(inner.clone());
        prop_oneof![
            (ints.clone(), inner.clone()).prop_map(|(a, b)| L::Cons(Box::new(a), Box::new(b))),
            (ints.clone(), ints.clone()).prop_map(|(a, b)| L::Pair(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| L::Append(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| L::Copy(Box::new(a))),
            (ints, inner.clone(), inner.clone()).prop_map(|(c, a, b)| L::If(Box::new(c), Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| L::Let(Box::new(a), Box::new(b))),
            (0usize..8, inner.clone(), inner).prop_map(|(s, a, b)| L::Match(s, Box::new(a), Box::new(b))),
        ]
    })
    .boxed()
}

/// Renders generated trees with fresh binder names, recording whether some
/// match inspects a let-bound variable.
struct Render {
    fresh: usize,
    matches_let_bound: bool,
}

impl Render {
    fn l(&mut self, e: &L, scope: &[(String, bool)]) -> String {
        match e {
            L::Scope(i) => scope[i % scope.len()].0.clone(),
            L::Nil => "nil".into(),
            L::Cons(a, b) => format!("cons({}, {})", self.i(a, scope), self.l(b, scope)),
            L::Pair(a, b) => format!("[{}, {}]", self.i(a, scope), self.i(b, scope)),
            L::Append(a, b) => format!("append({}, {})", self.l(a, scope), self.l(b, scope)),
            L::Copy(a) => format!("copy({})", self.l(a, scope)),
            L::If(c, a, b) => format!("(if {} then {} else {})", self.i(c, scope), self.l(a, scope), self.l(b, scope)),
            L::Let(a, b) => {
                self.fresh += 1;
                let v = format!("v{}", self.fresh);
                let bound = self.l(a, scope);
                let mut inner = scope.to_vec();
                inner.push((v.clone(), true));
                format!("(let {v} = {bound} in {})", self.l(b, &inner))
            }
            L::Match(s, a, b) => {
                let (scrut, let_bound) = scope[s % scope.len()].clone();
                self.matches_let_bound |= let_bound;
                self.fresh += 1;
                let (h, t) = (format!("h{}", self.fresh), format!("t{}", self.fresh));
                let nil = self.l(a, scope);
                let mut inner = scope.to_vec();
                inner.push((t.clone(), false));
                format!("(match {scrut} with | nil -> {nil} | cons({h}, {t}) -> {})", self.l(b, &inner))
            }
        }
    }

    fn i(&mut self, e: &I, scope: &[(String, bool)]) -> String {
        match e {
            I::X => "x".into(),
            I::Const(n) if *n < 0 => format!("(0 - {})", -n),
            I::Const(n) => n.to_string(),
            I::Add(a, b) => format!("({} + {})", self.i(a, scope), self.i(b, scope)),
            I::Sub(a, b) => format!("({} - {})", self.i(a, scope), self.i(b, scope)),
            I::Length(l) => format!("length({})", self.l(l, scope)),
        }
    }
}

const PRELUDE: &str = "
letfun append(l1, l2) = match l1 with | nil -> l2 | cons(h, t) -> cons(h, append(t, l2)) in
letfun copy(l) = match l with | nil -> nil | cons(h, t) -> cons(h, copy(t)) in
letfun length(l) = match l with | nil -> 0 | cons(h, t) -> 1 + length(t) in
";

fn render(e: &L) -> (String, bool) {
    let mut r = Render {
        fresh: 0,
        matches_let_bound: false,
    };
    let scope = [("p1".to_string(), false), ("p2".to_string(), false)];
    let body = r.l(e, &scope);
    (format!("{PRELUDE}letfun f(p1, p2, x) = {body} in\n"), r.matches_let_bound)
}

fn arb_list() -> impl Strategy<Value = Literal> {
    prop::collection::vec(-5i64..5, 0..4).prop_map(|v| Literal::List(v.into_iter().map(Literal::Int).collect()))
}

fn run(p: &shapely::Program, args: &[Literal]) -> Result<String, String> {
    let closures = Closures::from_program(p);
    let opts = EvalOptions {
        budget: 1_000_000,
        ..EvalOptions::default()
    };
    run_function(&closures, "f", args, opts)
        .map(|(v, h)| Literal::read(&h, v).map(|l| l.to_string()).unwrap_or_default())
        .map_err(|e| format!("{:?}", e.kind))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn generated_programs_are_well_scoped(e in arb_l()) {
        let (src, _) = render(&e);
        let p = parse_program(&src).unwrap();
        prop_assert!(check_scopes(&p).is_empty(), "{}", src);
    }

    #[test]
    fn printing_round_trips(e in arb_l()) {
        let (src, _) = render(&e);
        let p = parse_program(&src).unwrap();
        let again = parse_program(&print_program(&p)).unwrap();
        prop_assert_eq!(again.strip_positions(), p.strip_positions());
    }

    #[test]
    fn desugaring_is_core_and_idempotent(e in arb_l()) {
        let (src, _) = render(&e);
        let core = desugar(&parse_program(&src).unwrap());
        prop_assert!(core.functions.iter().all(|f| f.body.is_core()), "{}", print_program(&core));
        prop_assert_eq!(desugar(&core).strip_positions(), core.strip_positions());
    }

    #[test]
    fn desugaring_preserves_evaluation(e in arb_l(), a in arb_list(), b in arb_list(), x in -3i64..4) {
        let (src, _) = render(&e);
        let p = parse_program(&src).unwrap();
        let args = [a, b, Literal::Int(x)];
        prop_assert_eq!(run(&p, &args), run(&desugar(&p), &args), "{}", src);
    }

    #[test]
    fn restriction_flags_exactly_matches_on_let_bound_lists(e in arb_l()) {
        let (src, let_bound) = render(&e);
        let core = desugar(&parse_program(&src).unwrap());
        prop_assert_eq!(!validate_restriction(&core).is_empty(), let_bound, "{}", src);
    }
}
