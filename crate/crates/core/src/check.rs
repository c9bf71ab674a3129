//! Syntax-directed checking of size annotations. Walking a core-form body
//! produces entailment obligations `D ⊢ goal`; they are collected first and
//! decided afterwards.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::poly::Polynomial;
use crate::syntax::{
    check_scopes, desugar, validate_restriction, Expr, ExprKind, FunDef, Pos, Program,
    RestrictionViolation, ScopeError,
};
use crate::types::{
    equiv_under, erase, infer_underlying, ConstraintSet, FirstOrderType, OutsideFragment, SizedType,
    Solution, TypeError, UFunType, UType,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Goal {
    PolyEq(Polynomial, Polynomial),
    PolyZero(Polynomial),
    /// `left = right`, unless one of `unless_zero` is provably zero (then
    /// the positions compared do not exist).
    TypeEq {
        left: SizedType,
        right: SizedType,
        unless_zero: Vec<Polynomial>,
    },
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Goal::PolyEq(a, b) => write!(f, "{a} = {b}"),
            Goal::PolyZero(p) => write!(f, "{p} = 0"),
            Goal::TypeEq {
                left,
                right,
                unless_zero,
            } => {
                write!(f, "{left} = {right}")?;
                if !unless_zero.is_empty() {
                    let gs: Vec<String> = unless_zero.iter().map(|g| format!("{g} = 0")).collect();
                    write!(f, " unless {}", gs.join(" or "))?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Obligation {
    pub d: ConstraintSet,
    pub goal: Goal,
    pub rule: &'static str,
    pub function: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Holds,
    Fails,
    /// The premises are unsatisfiable over the naturals.
    Vacuous,
}

impl Verdict {
    pub fn ok(self) -> bool {
        self != Verdict::Fails
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "HOLDS",
            Verdict::Fails => "FAILS",
            Verdict::Vacuous => "VACUOUS",
        })
    }
}

fn fmt_premises(d: &ConstraintSet) -> String {
    d.equations
        .iter()
        .map(|e| match ConstraintSet::fragment_form(e) {
            Some(Some((v, c))) => format!("{v} = {}", crate::poly::fmt_rational(&c)),
            _ => format!("{e} = 0"),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

impl fmt::Display for Obligation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = fmt_premises(&self.d);
        if d.is_empty() {
            write!(f, "⊢ {}", self.goal)
        } else {
            write!(f, "{d} ⊢ {}", self.goal)
        }
    }
}

/// Decides `D ⊢ goal` for `D` in the fragment of equations `n - c = 0`.
pub fn decide_entailment(ob: &Obligation) -> Result<Verdict, OutsideFragment> {
    decide(&ob.d, &ob.goal)
}

pub fn decide(d: &ConstraintSet, goal: &Goal) -> Result<Verdict, OutsideFragment> {
    let sol = d.solve()?;
    if sol == Solution::Unsatisfiable {
        return Ok(Verdict::Vacuous);
    }
    let holds = match goal {
        Goal::PolyEq(a, b) => sol.entails_zero(&(a - b)),
        Goal::PolyZero(p) => sol.entails_zero(p),
        Goal::TypeEq {
            left,
            right,
            unless_zero,
        } => unless_zero.iter().any(|g| sol.entails_zero(g)) || equiv_under(&sol, left, right),
    };
    Ok(if holds { Verdict::Holds } else { Verdict::Fails })
}

// ---------------------------------------------------------------------------
// Θ
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ThetaResult {
    pub sizes: BTreeMap<String, Polynomial>,
    pub types: BTreeMap<String, SizedType>,
    /// Equations `p = p'` for actual sizes meeting the same formal variable.
    pub constraints: Vec<(Polynomial, Polynomial)>,
    /// Pairs of actual types meeting the same formal type variable, with
    /// the sizes of the lists enclosing either occurrence.
    pub type_agreements: Vec<(SizedType, SizedType, Vec<Polynomial>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("shape mismatch: formal {formal} against actual {actual}")]
pub struct ShapeMismatch {
    pub formal: String,
    pub actual: String,
}

struct ThetaState {
    res: ThetaResult,
    bindings: BTreeMap<String, Vec<(SizedType, Vec<Polynomial>)>>,
    unknown: usize,
}

impl ThetaState {
    fn go(&mut self, formal: &SizedType, actual: &SizedType, guards: &[Polynomial]) -> Result<(), ShapeMismatch> {
        match (formal, actual) {
            (SizedType::Int, SizedType::Int | SizedType::Hole) => Ok(()),
            (SizedType::Var(a), t) => {
                self.bindings
                    .entry(a.clone())
                    .or_default()
                    .push((t.clone(), guards.to_vec()));
                Ok(())
            }
            (SizedType::List(ef, pf), SizedType::List(ea, pa)) => {
                self.size(pf, pa.clone());
                let mut g = guards.to_vec();
                g.push(pa.clone());
                self.go(ef, ea, &g)
            }
            (SizedType::List(ef, pf), SizedType::Hole) => {
                // nothing is known below an unconstrained element
                self.unknown += 1;
                let fresh = Polynomial::var(&format!("?{}", self.unknown));
                self.size(pf, fresh.clone());
                let mut g = guards.to_vec();
                g.push(fresh);
                self.go(ef, &SizedType::Hole, &g)
            }
            _ => Err(ShapeMismatch {
                formal: formal.to_string(),
                actual: actual.to_string(),
            }),
        }
    }

    fn size(&mut self, formal: &Polynomial, actual: Polynomial) {
        let name = match formal.as_var_minus_const() {
            Some((v, c)) if num_traits::Zero::is_zero(&c) => v,
            _ => return,
        };
        match self.res.sizes.get(&name) {
            Some(prev) => self.res.constraints.push((prev.clone(), actual)),
            None => {
                self.res.sizes.insert(name, actual);
            }
        }
    }
}

/// Matches formal parameter types against actual argument types.
pub fn theta(formals: &[SizedType], actuals: &[SizedType]) -> Result<ThetaResult, ShapeMismatch> {
    if formals.len() != actuals.len() {
        return Err(ShapeMismatch {
            formal: format!("{} parameters", formals.len()),
            actual: format!("{} arguments", actuals.len()),
        });
    }
    let mut st = ThetaState {
        res: ThetaResult::default(),
        bindings: BTreeMap::new(),
        unknown: 0,
    };
    for (f, a) in formals.iter().zip(actuals) {
        st.go(f, a, &[])?;
    }
    for (a, binds) in st.bindings {
        let rep = binds
            .iter()
            .position(|(t, _)| *t != SizedType::Hole)
            .unwrap_or(0);
        let (rt, rg) = binds[rep].clone();
        for (i, (t, g)) in binds.into_iter().enumerate() {
            if i != rep {
                let mut guards = rg.clone();
                guards.extend(g);
                st.res.type_agreements.push((rt.clone(), t, guards));
            }
        }
        st.res.types.insert(a, rt);
    }
    Ok(st.res)
}

/// Applies a Θ substitution to a callee's result type. Type variables that
/// no argument determines become holes; unmapped size variables stay.
pub fn apply_theta(t: &SizedType, th: &ThetaResult) -> SizedType {
    match t {
        SizedType::Var(a) => th.types.get(a).cloned().unwrap_or(SizedType::Hole),
        SizedType::List(e, p) => SizedType::list(apply_theta(e, th), p.substitute(&th.sizes)),
        t => t.clone(),
    }
}

// ---------------------------------------------------------------------------
// The checker
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("{pos}: `{function}` calls `{callee}`, which has no signature")]
    UnknownFunction { function: String, callee: String, pos: Pos },
    #[error("`{0}` has no type annotation")]
    MissingAnnotation(String),
    #[error("RestrictionViolation: {0}")]
    Restriction(RestrictionViolation),
    #[error("{0}")]
    Scope(ScopeError),
    #[error("{0}")]
    Underlying(TypeError),
    #[error("`{function}` is annotated {annotated} but its underlying type is {inferred}")]
    AnnotationShape { function: String, annotated: String, inferred: String },
    #[error("{pos}: in `{function}`: {detail}")]
    Shape { function: String, detail: String, pos: Pos },
    #[error("{pos}: `{function}` uses an unbound variable `{name}`")]
    Unbound { function: String, name: String, pos: Pos },
    #[error("{pos}: `{function}` is not in core form here")]
    NotCore { function: String, pos: Pos },
    #[error("{pos}: in `{function}`: {source}")]
    Undecidable { function: String, source: OutsideFragment, pos: Pos },
    #[error("invalid signature for `{function}`: {detail}")]
    Signature { function: String, detail: String },
}

pub type Signature = BTreeMap<String, FirstOrderType>;
pub type Context = BTreeMap<String, SizedType>;

struct Checker<'a> {
    function: &'a str,
    sigma: Signature,
    obligations: Vec<Obligation>,
    /// Constraints added by matches that are not of the form `n - c = 0`.
    fragment_violations: Vec<Polynomial>,
    nested: Vec<FunctionReport>,
}

impl<'a> Checker<'a> {
    fn emit(&mut self, d: &ConstraintSet, goal: Goal, rule: &'static str, pos: Pos) {
        self.obligations.push(Obligation {
            d: d.clone(),
            goal,
            rule,
            function: self.function.to_string(),
            pos,
        });
    }

    fn shape<T>(&self, detail: String, pos: Pos) -> Result<T, CheckError> {
        Err(CheckError::Shape {
            function: self.function.to_string(),
            detail,
            pos,
        })
    }

    fn lookup(&self, g: &Context, e: &Expr) -> Result<SizedType, CheckError> {
        match &e.kind {
            ExprKind::Var(x) => g.get(x).cloned().ok_or_else(|| CheckError::Unbound {
                function: self.function.to_string(),
                name: x.clone(),
                pos: e.pos,
            }),
            _ => Err(CheckError::NotCore {
                function: self.function.to_string(),
                pos: e.pos,
            }),
        }
    }

    fn list_parts(&self, t: SizedType, what: &str, pos: Pos) -> Result<(SizedType, Polynomial), CheckError> {
        match t {
            SizedType::List(e, p) => Ok((*e, p)),
            SizedType::Hole => Ok((SizedType::Hole, Polynomial::zero())),
            other => self.shape(format!("{what} has type {other}, expected a list"), pos),
        }
    }

    fn expect_int(&self, t: &SizedType, pos: Pos) -> Result<(), CheckError> {
        match t {
            SizedType::Int | SizedType::Hole => Ok(()),
            other => self.shape(format!("expected Int, found {other}"), pos),
        }
    }

    /// Types a basic expression (or variable) bound by `let`.
    fn synth(&mut self, d: &ConstraintSet, g: &Context, e: &Expr) -> Result<SizedType, CheckError> {
        let pos = e.pos;
        match &e.kind {
            ExprKind::Var(_) => self.lookup(g, e),
            ExprKind::Int(_) => Ok(SizedType::Int),
            ExprKind::BinOp(_, a, b) => {
                let ta = self.lookup(g, a)?;
                self.expect_int(&ta, a.pos)?;
                let tb = self.lookup(g, b)?;
                self.expect_int(&tb, b.pos)?;
                Ok(SizedType::Int)
            }
            ExprKind::Nil => Ok(SizedType::list(SizedType::Hole, Polynomial::zero())),
            ExprKind::Cons(h, t) => {
                let th = self.lookup(g, h)?;
                let tt = self.lookup(g, t)?;
                let (te, p) = self.list_parts(tt, "the tail of cons", pos)?;
                self.emit(
                    d,
                    Goal::TypeEq {
                        left: th.clone(),
                        right: te,
                        unless_zero: vec![p.clone()],
                    },
                    "Cons",
                    pos,
                );
                Ok(SizedType::list(th, &p + &Polynomial::int(1)))
            }
            ExprKind::App(f, args) => {
                let sig = match self.sigma.get(f) {
                    Some(s) => s.clone(),
                    None => {
                        return Err(CheckError::UnknownFunction {
                            function: self.function.to_string(),
                            callee: f.clone(),
                            pos,
                        })
                    }
                };
                let actuals = args
                    .iter()
                    .map(|a| self.lookup(g, a))
                    .collect::<Result<Vec<_>, _>>()?;
                let th = match theta(&sig.params, &actuals) {
                    Ok(th) => th,
                    Err(e) => return self.shape(format!("calling `{f}`: {e}"), pos),
                };
                for (p, q) in &th.constraints {
                    self.emit(d, Goal::PolyEq(p.clone(), q.clone()), "FunApp", pos);
                }
                for (a, b, guards) in &th.type_agreements {
                    self.emit(
                        d,
                        Goal::TypeEq {
                            left: a.clone(),
                            right: b.clone(),
                            unless_zero: guards.clone(),
                        },
                        "FunApp",
                        pos,
                    );
                }
                Ok(apply_theta(&sig.result, &th))
            }
            _ => Err(CheckError::NotCore {
                function: self.function.to_string(),
                pos,
            }),
        }
    }

    fn check(&mut self, d: &ConstraintSet, g: &mut Context, e: &Expr, expected: &SizedType) -> Result<(), CheckError> {
        let pos = e.pos;
        match &e.kind {
            ExprKind::Nil => {
                let (_, p) = self.list_parts(expected.clone(), "the result of nil", pos)?;
                self.emit(d, Goal::PolyZero(p), "Nil", pos);
                Ok(())
            }
            ExprKind::Cons(h, t) => {
                let (te, p) = self.list_parts(expected.clone(), "the result of cons", pos)?;
                let th = self.lookup(g, h)?;
                let tt = self.lookup(g, t)?;
                let (tte, pt) = self.list_parts(tt, "the tail of cons", pos)?;
                self.emit(d, Goal::PolyEq(p, &pt + &Polynomial::int(1)), "Cons", pos);
                self.emit(
                    d,
                    Goal::TypeEq {
                        left: te.clone(),
                        right: th,
                        unless_zero: vec![],
                    },
                    "Cons",
                    pos,
                );
                self.emit(
                    d,
                    Goal::TypeEq {
                        left: te,
                        right: tte,
                        unless_zero: vec![pt],
                    },
                    "Cons",
                    pos,
                );
                Ok(())
            }
            ExprKind::Var(_) | ExprKind::Int(_) | ExprKind::BinOp(..) | ExprKind::App(..) => {
                let t = self.synth(d, g, e)?;
                let rule = match &e.kind {
                    ExprKind::Var(_) => "Var",
                    ExprKind::App(..) => "FunApp",
                    ExprKind::Int(_) => "IConst",
                    _ => "IBinop",
                };
                self.emit(
                    d,
                    Goal::TypeEq {
                        left: expected.clone(),
                        right: t,
                        unless_zero: vec![],
                    },
                    rule,
                    pos,
                );
                Ok(())
            }
            ExprKind::Let(x, bound, body) => {
                let t = self.synth(d, g, bound)?;
                let old = g.insert(x.clone(), t);
                let r = self.check(d, g, body, expected);
                match old {
                    Some(o) => g.insert(x.clone(), o),
                    None => g.remove(x),
                };
                r
            }
            ExprKind::If(c, a, b) => {
                let tc = self.lookup(g, c)?;
                self.expect_int(&tc, c.pos)?;
                self.check(d, g, a, expected)?;
                self.check(d, g, b, expected)
            }
            ExprKind::Match {
                scrutinee,
                head,
                tail,
                nil_branch,
                cons_branch,
            } => {
                let ts = self.lookup(g, scrutinee)?;
                let (te, p) = self.list_parts(ts, "the scrutinee", pos)?;
                if ConstraintSet::fragment_form(&p).is_none() {
                    self.fragment_violations.push(p.clone());
                }
                self.check(&d.with(p.clone()), g, nil_branch, expected)?;
                let oh = g.insert(head.clone(), te.clone());
                let ot = g.insert(tail.clone(), SizedType::list(te, &p - &Polynomial::int(1)));
                let r = self.check(d, g, cons_branch, expected);
                for (k, o) in [(tail, ot), (head, oh)] {
                    match o {
                        Some(o) => g.insert(k.clone(), o),
                        None => g.remove(k),
                    };
                }
                r
            }
            ExprKind::LetFun(def, body) => {
                let sig = def
                    .annotation
                    .clone()
                    .ok_or_else(|| CheckError::MissingAnnotation(def.name.clone()))?;
                self.sigma.insert(def.name.clone(), sig);
                let report = check_function(def, &self.sigma);
                self.nested.push(report);
                self.check(d, g, body, expected)
            }
            ExprKind::LetExtern(ext, body) => {
                self.sigma.insert(ext.name.clone(), ext.ftype.clone());
                self.check(d, g, body, expected)
            }
            ExprKind::List(_) => Err(CheckError::NotCore {
                function: self.function.to_string(),
                pos,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecidedObligation {
    pub obligation: Obligation,
    pub verdict: Result<Verdict, OutsideFragment>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionReport {
    pub function: String,
    pub ftype: Option<FirstOrderType>,
    pub obligations: Vec<DecidedObligation>,
    pub errors: Vec<CheckError>,
    pub fragment_violations: Vec<Polynomial>,
    pub warnings: Vec<String>,
    pub nested: Vec<FunctionReport>,
}

impl FunctionReport {
    pub fn accepted(&self) -> bool {
        self.errors.is_empty()
            && self
                .obligations
                .iter()
                .all(|o| matches!(o.verdict, Ok(v) if v.ok()))
            && self.nested.iter().all(FunctionReport::accepted)
    }

    pub fn failing(&self) -> impl Iterator<Item = &DecidedObligation> {
        self.obligations
            .iter()
            .filter(|o| !matches!(o.verdict, Ok(v) if v.ok()))
    }
}

/// Checks one core-form function body against `sigma[f.name]`.
pub fn check_function(f: &FunDef, sigma: &Signature) -> FunctionReport {
    let mut report = FunctionReport {
        function: f.name.clone(),
        ftype: sigma.get(&f.name).cloned(),
        obligations: Vec::new(),
        errors: Vec::new(),
        fragment_violations: Vec::new(),
        warnings: Vec::new(),
        nested: Vec::new(),
    };
    let ft = match sigma.get(&f.name) {
        Some(t) => t.clone(),
        None => {
            report.errors.push(CheckError::MissingAnnotation(f.name.clone()));
            return report;
        }
    };
    if let Err(e) = ft.validate() {
        report.errors.push(CheckError::Signature {
            function: f.name.clone(),
            detail: e.to_string(),
        });
        return report;
    }
    report.warnings = ft.totality_warnings();
    let mut checker = Checker {
        function: &f.name,
        sigma: sigma.clone(),
        obligations: Vec::new(),
        fragment_violations: Vec::new(),
        nested: Vec::new(),
    };
    let mut g: Context = f.params.iter().cloned().zip(ft.params.iter().cloned()).collect();
    if let Err(e) = checker.check(&ConstraintSet::new(), &mut g, &f.body, &ft.result) {
        report.errors.push(e);
    }
    report.obligations = checker
        .obligations
        .into_iter()
        .map(|ob| {
            let verdict = decide_entailment(&ob);
            DecidedObligation { obligation: ob, verdict }
        })
        .collect();
    report.fragment_violations = checker.fragment_violations;
    report.nested = checker.nested;
    report
}

/// Is `annotated` an instance of the principal underlying type `inferred`?
pub fn instance_of(annotated: &UFunType, inferred: &UFunType) -> bool {
    fn go(a: &UType, i: &UType, m: &mut BTreeMap<u32, UType>) -> bool {
        match (a, i) {
            (_, UType::Var(v)) => match m.get(v) {
                Some(t) => t == a,
                None => {
                    m.insert(*v, a.clone());
                    true
                }
            },
            (UType::Int, UType::Int) => true,
            (UType::List(x), UType::List(y)) => go(x, y, m),
            _ => false,
        }
    }
    let mut m = BTreeMap::new();
    annotated.params.len() == inferred.params.len()
        && annotated
            .params
            .iter()
            .zip(&inferred.params)
            .all(|(a, i)| go(a, i, &mut m))
        && go(&annotated.result, &inferred.result, &mut m)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProgramReport {
    pub errors: Vec<CheckError>,
    pub functions: Vec<FunctionReport>,
}

impl ProgramReport {
    /// Errors that stop checking before any obligation is produced.
    pub fn has_static_errors(&self) -> bool {
        !self.errors.is_empty()
    }

    pub fn accepted(&self) -> bool {
        self.errors.is_empty() && self.functions.iter().all(FunctionReport::accepted)
    }

    pub fn all_functions(&self) -> Vec<&FunctionReport> {
        fn go<'a>(r: &'a FunctionReport, out: &mut Vec<&'a FunctionReport>) {
            out.push(r);
            for n in &r.nested {
                go(n, out);
            }
        }
        let mut out = Vec::new();
        for f in &self.functions {
            go(f, &mut out);
        }
        out
    }

    pub fn fragment_violations(&self) -> usize {
        self.all_functions().iter().map(|f| f.fragment_violations.len()).sum()
    }
}

/// The signature formed by extern declarations and annotated functions.
pub fn signature_of(p: &Program) -> Signature {
    let mut sigma: Signature = p.externs.iter().map(|e| (e.name.clone(), e.ftype.clone())).collect();
    for f in &p.functions {
        if let Some(t) = &f.annotation {
            sigma.insert(f.name.clone(), t.clone());
        }
    }
    sigma
}

/// Scope checks, desugaring, the match restriction, underlying inference
/// and then checking of every function against its annotation.
pub fn check_program(p: &Program) -> ProgramReport {
    let mut report = ProgramReport::default();
    let scope = check_scopes(p);
    if !scope.is_empty() {
        report.errors = scope.into_iter().map(CheckError::Scope).collect();
        return report;
    }
    let core = desugar(p);
    let violations = validate_restriction(&core);
    if !violations.is_empty() {
        report.errors = violations.into_iter().map(CheckError::Restriction).collect();
        return report;
    }
    let underlying = match infer_underlying(&core) {
        Ok(u) => u,
        Err(e) => {
            report.errors.push(CheckError::Underlying(e));
            return report;
        }
    };
    for ext in &core.externs {
        if let Err(e) = ext.ftype.validate() {
            report.errors.push(CheckError::Signature {
                function: ext.name.clone(),
                detail: e.to_string(),
            });
        }
    }
    for f in &core.functions {
        match &f.annotation {
            None => report.errors.push(CheckError::MissingAnnotation(f.name.clone())),
            Some(t) => {
                let inferred = &underlying[&f.name];
                if !instance_of(&erase(t), inferred) {
                    report.errors.push(CheckError::AnnotationShape {
                        function: f.name.clone(),
                        annotated: t.to_string(),
                        inferred: inferred.to_string(),
                    });
                }
            }
        }
    }
    if !report.errors.is_empty() {
        return report;
    }
    let sigma = signature_of(&core);
    report.functions = core.functions.iter().map(|f| check_function(f, &sigma)).collect();
    report
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

fn verdict_text(v: &Result<Verdict, OutsideFragment>) -> String {
    match v {
        Ok(v) => v.to_string(),
        Err(e) => format!("UNDECIDABLE ({e})"),
    }
}

/// One line per obligation: `pos function [Rule] D ⊢ goal : VERDICT`.
pub fn render_text(report: &ProgramReport) -> String {
    let mut out = String::new();
    for e in &report.errors {
        out.push_str(&format!("error: {e}\n"));
    }
    for f in report.all_functions() {
        let status = if f.accepted() { "accepted" } else { "rejected" };
        match &f.ftype {
            Some(t) => out.push_str(&format!("{} : {t} -- {status}\n", f.function)),
            None => out.push_str(&format!("{} -- {status}\n", f.function)),
        }
        for w in &f.warnings {
            out.push_str(&format!("  warning: totality: {w}\n"));
        }
        for e in &f.errors {
            out.push_str(&format!("  error: {e}\n"));
        }
        for o in &f.obligations {
            out.push_str(&format!(
                "  {} [{}] {} : {}\n",
                o.obligation.pos,
                o.obligation.rule,
                o.obligation,
                verdict_text(&o.verdict)
            ));
        }
    }
    out
}

/// A flat record for line-delimited structured output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObligationRecord {
    pub function: String,
    pub line: u32,
    pub column: u32,
    pub rule: String,
    pub premises: Vec<String>,
    pub goal: String,
    pub verdict: String,
}

pub fn records(report: &ProgramReport) -> Vec<ObligationRecord> {
    report
        .all_functions()
        .into_iter()
        .flat_map(|f| f.obligations.iter())
        .map(|o| ObligationRecord {
            function: o.obligation.function.clone(),
            line: o.obligation.pos.line,
            column: o.obligation.pos.col,
            rule: o.obligation.rule.to_string(),
            premises: o.obligation.d.equations.iter().map(|e| format!("{e} = 0")).collect(),
            goal: o.obligation.goal.to_string(),
            verdict: verdict_text(&o.verdict),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_ftype, parse_polynomial, parse_program, parse_sized_type};

    fn poly(s: &str) -> Polynomial {
        parse_polynomial(s).unwrap()
    }

    pub(crate) const HEADLINE: &str = "
        append : L(a,n) * L(a,m) -> L(a, n+m)
        letfun append(l1, l2) =
          match l1 with
          | nil -> l2
          | cons(hd, tl) -> cons(hd, append(tl, l2))
        in
        pairs : a * L(a,n) -> L(L(a,2), n)
        letfun pairs(x, l) =
          match l with
          | nil -> nil
          | cons(hd, tl) -> cons(cons(x, cons(hd, nil)), pairs(x, tl))
        in
        cprod : L(a,n) * L(a,m) -> L(L(a,2), n*m)
        letfun cprod(l1, l2) =
          match l1 with
          | nil -> nil
          | cons(hd, tl) -> append(pairs(hd, l2), cprod(tl, l2))
        in
    ";

    #[test]
    fn headline_types_accepted() {
        let r = check_program(&parse_program(HEADLINE).unwrap());
        assert!(r.accepted(), "{}", render_text(&r));
        assert_eq!(r.fragment_violations(), 0);
    }

    #[test]
    fn cprod_obligations_match_the_worked_example() {
        let r = check_program(&parse_program(HEADLINE).unwrap());
        let cprod = r.functions.iter().find(|f| f.function == "cprod").unwrap();
        let goals: Vec<String> = cprod.obligations.iter().map(|o| o.obligation.to_string()).collect();
        assert!(goals.contains(&"n = 0 ⊢ m*n = 0".to_string()), "{goals:?}");
        assert!(
            cprod.obligations.iter().any(|o| o.obligation.goal
                == Goal::TypeEq {
                    left: parse_sized_type("L(L(a,2), n*m)").unwrap(),
                    right: parse_sized_type("L(L(a,2), m + (n-1)*m)").unwrap(),
                    unless_zero: vec![]
                }),
            "{goals:?}"
        );
    }

    #[test]
    fn wrong_annotation_rejected() {
        let src = HEADLINE.replace("L(L(a,2), n*m)", "L(L(a,2), n+m)");
        let r = check_program(&parse_program(&src).unwrap());
        assert!(!r.accepted());
        let cprod = r.functions.iter().find(|f| f.function == "cprod").unwrap();
        assert!(cprod.failing().count() > 0);
    }

    #[test]
    fn theta_examples() {
        let th = theta(
            &[parse_sized_type("L(Int,m)").unwrap(), parse_sized_type("L(Int,m)").unwrap()],
            &[
                parse_sized_type("L(Int, n+k+2)").unwrap(),
                parse_sized_type("L(Int, n+3)").unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(th.constraints, vec![(poly("n+k+2"), poly("n+3"))]);
        let append = parse_ftype("L(a,n) * L(a,m) -> L(a, n+m)").unwrap();
        let th = theta(
            &append.params,
            &[parse_sized_type("L(a,n-1)").unwrap(), parse_sized_type("L(a,m)").unwrap()],
        )
        .unwrap();
        assert!(th.constraints.is_empty());
        assert_eq!(th.sizes["n"], poly("n-1"));
        assert_eq!(apply_theta(&append.result, &th), parse_sized_type("L(a, n-1+m)").unwrap());
        let id = theta(&append.params, &append.params).unwrap();
        assert_eq!(id.sizes["n"], poly("n"));
        assert!(id.constraints.is_empty());
    }

    #[test]
    fn entailment_examples() {
        let d = |eqs: &[&str]| ConstraintSet {
            equations: eqs.iter().map(|e| poly(e)).collect(),
        };
        assert_eq!(decide(&d(&["n"]), &Goal::PolyZero(poly("n*m"))).unwrap(), Verdict::Holds);
        assert_eq!(
            decide(&d(&[]), &Goal::PolyEq(poly("n*m"), poly("m + (n-1)*m"))).unwrap(),
            Verdict::Holds
        );
        assert_eq!(decide(&d(&["n", "n-1"]), &Goal::PolyZero(poly("1"))).unwrap(), Verdict::Vacuous);
        assert_eq!(decide(&d(&[]), &Goal::PolyZero(poly("n"))).unwrap(), Verdict::Fails);
        assert!(decide(&d(&["n*m"]), &Goal::PolyZero(poly("n"))).is_err());
    }

    #[test]
    fn obligations_are_deterministic() {
        let p = parse_program(HEADLINE).unwrap();
        assert_eq!(check_program(&p), check_program(&p));
    }

    #[test]
    fn restriction_violation_blocks_checking() {
        let src = "
            f0 : L(a,n) -> L(a,n)
            letfun f0(l) = l in
            f : L(a,n) -> L(a,n)
            letfun f(l1) = let l = f0(l1) in match l with | nil -> l1 | cons(h, t) -> l1 in";
        let r = check_program(&parse_program(src).unwrap());
        assert!(matches!(r.errors[..], [CheckError::Restriction(_)]));
    }

    #[test]
    fn annotation_of_wrong_shape() {
        let src = "f : L(a,n) -> a\nletfun f(l) = l in";
        let r = check_program(&parse_program(src).unwrap());
        assert!(matches!(r.errors[..], [CheckError::AnnotationShape { .. }]));
    }
}
