//! Sized types, constraint sets, type equivalence under constraints and
//! underlying (size-erased) type inference.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::poly::{Polynomial, Rational};
use crate::syntax::{ExprKind, Expr, FunDef, Pos, Program};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SizedType {
    Int,
    Var(String),
    List(Box<SizedType>, Polynomial),
    /// Unconstrained element type: the element of `nil`, or a result type
    /// variable of a callee that no argument determines. Equivalent to
    /// every type.
    Hole,
}

impl SizedType {
    pub fn list(elem: SizedType, size: Polynomial) -> Self {
        SizedType::List(Box::new(elem), size)
    }

    /// Number of nested list constructors on the outermost spine.
    pub fn nesting(&self) -> usize {
        match self {
            SizedType::List(e, _) => 1 + e.nesting(),
            _ => 0,
        }
    }

    /// Sizes from the outermost list inwards.
    pub fn sizes(&self) -> Vec<&Polynomial> {
        let mut out = Vec::new();
        let mut t = self;
        while let SizedType::List(e, p) = t {
            out.push(p);
            t = e;
        }
        out
    }

    /// The innermost non-list type.
    pub fn leaf(&self) -> &SizedType {
        match self {
            SizedType::List(e, _) => e.leaf(),
            t => t,
        }
    }

    /// Free size variables, computed on the normal form in which everything
    /// below a syntactically zero size is erased.
    pub fn fvs(&self) -> BTreeSet<String> {
        match self {
            SizedType::List(e, p) if p.is_zero() => BTreeSet::new(),
            SizedType::List(e, p) => {
                let mut s = p.vars();
                s.extend(e.fvs());
                s
            }
            _ => BTreeSet::new(),
        }
    }

    pub fn type_vars(&self) -> BTreeSet<String> {
        match self {
            SizedType::Var(a) => BTreeSet::from([a.clone()]),
            SizedType::List(e, _) => e.type_vars(),
            _ => BTreeSet::new(),
        }
    }

    pub fn map_sizes(&self, f: &dyn Fn(&Polynomial) -> Polynomial) -> SizedType {
        match self {
            SizedType::List(e, p) => SizedType::list(e.map_sizes(f), f(p)),
            t => t.clone(),
        }
    }

    pub fn substitute_sizes(&self, subst: &BTreeMap<String, Polynomial>) -> SizedType {
        self.map_sizes(&|p| p.substitute(subst))
    }

    pub fn substitute_types(&self, subst: &BTreeMap<String, SizedType>) -> SizedType {
        match self {
            SizedType::Var(a) => subst.get(a).cloned().unwrap_or_else(|| self.clone()),
            SizedType::List(e, p) => SizedType::list(e.substitute_types(subst), p.clone()),
            t => t.clone(),
        }
    }

    pub fn underlying(&self) -> UType {
        let mut names = BTreeMap::new();
        self.underlying_with(&mut names)
    }

    fn underlying_with(&self, names: &mut BTreeMap<String, u32>) -> UType {
        match self {
            SizedType::Int => UType::Int,
            SizedType::Var(a) => {
                let next = names.len() as u32;
                UType::Var(*names.entry(a.clone()).or_insert(next))
            }
            SizedType::List(e, _) => UType::List(Box::new(e.underlying_with(names))),
            SizedType::Hole => {
                let next = names.len() as u32;
                UType::Var(*names.entry(format!("_{next}")).or_insert(next))
            }
        }
    }

    /// True when no size or type variables remain and all sizes are naturals.
    pub fn is_ground(&self) -> bool {
        match self {
            SizedType::Int => true,
            SizedType::List(e, p) => {
                p.as_constant()
                    .is_some_and(|c| c.is_integer() && !c.is_negative())
                    && e.is_ground()
            }
            _ => false,
        }
    }
}

impl fmt::Display for SizedType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizedType::Int => write!(f, "Int"),
            SizedType::Var(a) => write!(f, "{a}"),
            SizedType::List(e, p) => write!(f, "L({e}, {p})"),
            SizedType::Hole => write!(f, "_"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FirstOrderType {
    pub params: Vec<SizedType>,
    pub result: SizedType,
}

impl fmt::Display for FirstOrderType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                write!(f, " * ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, " -> {}", self.result)
    }
}

impl FirstOrderType {
    pub fn param_fvs(&self) -> BTreeSet<String> {
        self.params.iter().flat_map(|p| p.fvs()).collect()
    }

    /// Size variables of the parameters in template order (left to right,
    /// outermost first).
    pub fn param_size_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        for p in &self.params {
            for s in p.sizes() {
                out.extend(s.vars());
            }
        }
        out
    }

    /// Checks that parameter sizes are bare size variables and that the
    /// result mentions only parameter size variables. A variable may repeat
    /// across parameters; calls then demand equal actual sizes.
    pub fn validate(&self) -> Result<(), TypeError> {
        let mut seen = BTreeSet::new();
        for p in &self.params {
            for s in p.sizes() {
                match s.as_var_minus_const().filter(|(_, c)| c.is_zero()) {
                    Some((v, _)) => {
                        seen.insert(v);
                    }
                    None => {
                        return Err(TypeError::InvalidSignature(format!(
                            "parameter size `{s}` must be a size variable"
                        )))
                    }
                }
            }
        }
        let extra: Vec<String> = self.result.fvs().difference(&seen).cloned().collect();
        if !extra.is_empty() {
            return Err(TypeError::InvalidSignature(format!(
                "result mentions size variables {} absent from the parameters",
                extra.join(", ")
            )));
        }
        Ok(())
    }

    /// Instantiations of size variables by themselves or zero under which
    /// the result depends on a variable erased from every parameter.
    pub fn totality_warnings(&self) -> Vec<String> {
        let vars: Vec<String> = self.param_size_vars();
        if vars.len() > 12 {
            return Vec::new();
        }
        let mut out = Vec::new();
        for mask in 1u32..(1 << vars.len()) {
            let zeros: BTreeMap<String, Polynomial> = vars
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, v)| (v.clone(), Polynomial::zero()))
                .collect();
            let params: BTreeSet<String> = self
                .params
                .iter()
                .flat_map(|p| p.substitute_sizes(&zeros).fvs())
                .collect();
            let result = self.result.substitute_sizes(&zeros).fvs();
            let missing: Vec<String> = result.difference(&params).cloned().collect();
            if !missing.is_empty() {
                let zs: Vec<&String> = zeros.keys().collect();
                out.push(format!(
                    "with {} = 0 the result still depends on {}",
                    zs.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
                    missing.join(", ")
                ));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Constraint sets
// ---------------------------------------------------------------------------

/// A conjunction of polynomial equations, each read as `p = 0`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    pub equations: Vec<Polynomial>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("constraint `{0} = 0` is outside the decidable fragment")]
pub struct OutsideFragment(pub Polynomial);

/// The forced values of a satisfiable fragment constraint set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Solution {
    /// No natural assignment satisfies the constraints.
    Unsatisfiable,
    Forced(BTreeMap<String, Rational>),
}

impl Solution {
    /// Decides `D ⊢ p = 0` given the solution of `D`.
    pub fn entails_zero(&self, p: &Polynomial) -> bool {
        match self {
            Solution::Unsatisfiable => true,
            Solution::Forced(m) => {
                let subst = m
                    .iter()
                    .map(|(k, v)| (k.clone(), Polynomial::constant(v.clone())))
                    .collect();
                p.substitute(&subst).is_zero()
            }
        }
    }
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(&self, eq: Polynomial) -> Self {
        let mut d = self.clone();
        d.equations.push(eq);
        d
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    /// Reads an equation as `n = c` if it lies in the fragment.
    pub fn fragment_form(eq: &Polynomial) -> Option<Option<(String, Rational)>> {
        if let Some(c) = eq.as_constant() {
            return if c.is_zero() { Some(None) } else { None };
        }
        let vars = eq.vars();
        if vars.len() != 1 || eq.total_degree() != 1 {
            return None;
        }
        let v = vars.into_iter().next().unwrap();
        let a = eq.coefficient(&crate::poly::Monomial::var(&v));
        let b = eq.coefficient(&crate::poly::Monomial::one());
        Some(Some((v, -b / a)))
    }

    /// Solves a constraint set whose equations are all of the form
    /// `n - c = 0`. A constant nonzero equation, a variable forced to two
    /// values, or a negative or fractional value makes the set unsatisfiable
    /// over the naturals.
    pub fn solve(&self) -> Result<Solution, OutsideFragment> {
        let mut forced: BTreeMap<String, Rational> = BTreeMap::new();
        let mut unsat = false;
        for eq in &self.equations {
            if let Some(c) = eq.as_constant() {
                if !c.is_zero() {
                    unsat = true;
                }
                continue;
            }
            match Self::fragment_form(eq) {
                None => return Err(OutsideFragment(eq.clone())),
                Some(None) => {}
                Some(Some((v, c))) => {
                    if !c.is_integer() || c.is_negative() {
                        unsat = true;
                    }
                    if let Some(old) = forced.get(&v) {
                        if *old != c {
                            unsat = true;
                        }
                    }
                    forced.insert(v, c);
                }
            }
        }
        Ok(if unsat {
            Solution::Unsatisfiable
        } else {
            Solution::Forced(forced)
        })
    }
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.equations.iter().map(|e| format!("{e} = 0")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// `D ⊢ a = b`: same shape, sizes provably equal, and element types equal
/// unless the enclosing size is provably zero.
pub fn type_equiv(d: &ConstraintSet, a: &SizedType, b: &SizedType) -> Result<bool, OutsideFragment> {
    let sol = d.solve()?;
    Ok(equiv_under(&sol, a, b))
}

pub fn equiv_under(sol: &Solution, a: &SizedType, b: &SizedType) -> bool {
    match (a, b) {
        (SizedType::Hole, _) | (_, SizedType::Hole) => true,
        (SizedType::Int, SizedType::Int) => true,
        (SizedType::Var(x), SizedType::Var(y)) => x == y,
        (SizedType::List(ea, pa), SizedType::List(eb, pb)) => {
            sol.entails_zero(&(pa - pb)) && (sol.entails_zero(pa) || equiv_under(sol, ea, eb))
        }
        _ => matches!(sol, Solution::Unsatisfiable),
    }
}

// ---------------------------------------------------------------------------
// Underlying types and Hindley-Milner inference
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UType {
    Int,
    Var(u32),
    List(Box<UType>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UFunType {
    pub params: Vec<UType>,
    pub result: UType,
}

fn tyvar_name(i: usize) -> String {
    if i < 26 {
        ((b'a' + i as u8) as char).to_string()
    } else {
        format!("t{i}")
    }
}

/// Canonical names `a, b, ...` in order of first appearance.
fn name_vars(ts: &[&UType]) -> BTreeMap<u32, String> {
    fn go(t: &UType, m: &mut BTreeMap<u32, String>) {
        match t {
            UType::Var(v) => {
                let n = m.len();
                m.entry(*v).or_insert_with(|| tyvar_name(n));
            }
            UType::List(e) => go(e, m),
            UType::Int => {}
        }
    }
    let mut m = BTreeMap::new();
    for t in ts {
        go(t, &mut m);
    }
    m
}

fn fmt_utype(t: &UType, names: &BTreeMap<u32, String>) -> String {
    match t {
        UType::Int => "Int".into(),
        UType::Var(v) => names.get(v).cloned().unwrap_or_else(|| format!("t{v}")),
        UType::List(e) => format!("L({})", fmt_utype(e, names)),
    }
}

impl fmt::Display for UType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", fmt_utype(self, &name_vars(&[self])))
    }
}

impl fmt::Display for UFunType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let all: Vec<&UType> = self.params.iter().chain([&self.result]).collect();
        let names = name_vars(&all);
        let ps: Vec<String> = self.params.iter().map(|p| fmt_utype(p, &names)).collect();
        write!(f, "{} -> {}", ps.join(" * "), fmt_utype(&self.result, &names))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("{pos}: cannot unify {left} with {right}")]
    UnificationFailure { pos: Pos, left: String, right: String },
    #[error("{pos}: occurs check: {var} occurs in {ty}")]
    OccursCheck { pos: Pos, var: String, ty: String },
    #[error("{pos}: unknown name `{0}`", .name)]
    Unbound { pos: Pos, name: String },
    #[error("invalid signature: {0}")]
    InvalidSignature(String),
}

struct Infer {
    subst: Vec<Option<UType>>,
}

impl Infer {
    fn fresh(&mut self) -> UType {
        self.subst.push(None);
        UType::Var(self.subst.len() as u32 - 1)
    }

    fn resolve(&self, t: &UType) -> UType {
        match t {
            UType::Var(v) => match &self.subst[*v as usize] {
                Some(t) => self.resolve(t),
                None => t.clone(),
            },
            UType::List(e) => UType::List(Box::new(self.resolve(e))),
            UType::Int => UType::Int,
        }
    }

    fn occurs(&self, v: u32, t: &UType) -> bool {
        match self.resolve(t) {
            UType::Var(w) => v == w,
            UType::List(e) => self.occurs(v, &e),
            UType::Int => false,
        }
    }

    fn unify(&mut self, a: &UType, b: &UType, pos: Pos) -> Result<(), TypeError> {
        let (a, b) = (self.resolve(a), self.resolve(b));
        match (&a, &b) {
            (UType::Int, UType::Int) => Ok(()),
            (UType::Var(x), UType::Var(y)) if x == y => Ok(()),
            (UType::Var(x), t) | (t, UType::Var(x)) => {
                if self.occurs(*x, t) {
                    let names = name_vars(&[&a, &b]);
                    return Err(TypeError::OccursCheck {
                        pos,
                        var: fmt_utype(&UType::Var(*x), &names),
                        ty: fmt_utype(t, &names),
                    });
                }
                self.subst[*x as usize] = Some(t.clone());
                Ok(())
            }
            (UType::List(x), UType::List(y)) => self.unify(x, y, pos),
            _ => {
                let names = name_vars(&[&a, &b]);
                Err(TypeError::UnificationFailure {
                    pos,
                    left: fmt_utype(&a, &names),
                    right: fmt_utype(&b, &names),
                })
            }
        }
    }

    fn instantiate(&mut self, s: &UFunType) -> UFunType {
        let mut map = BTreeMap::new();
        fn go(t: &UType, map: &mut BTreeMap<u32, UType>, inf: &mut Infer) -> UType {
            match t {
                UType::Var(v) => {
                    if let Some(x) = map.get(v) {
                        return x.clone();
                    }
                    let x = inf.fresh();
                    map.insert(*v, x.clone());
                    x
                }
                UType::List(e) => UType::List(Box::new(go(e, map, inf))),
                UType::Int => UType::Int,
            }
        }
        UFunType {
            params: s.params.iter().map(|p| go(p, &mut map, self)).collect(),
            result: go(&s.result, &mut map, self),
        }
    }

    fn expr(
        &mut self,
        e: &Expr,
        vars: &mut Vec<(String, UType)>,
        funs: &mut Funs,
    ) -> Result<UType, TypeError> {
        let pos = e.pos;
        Ok(match &e.kind {
            ExprKind::Int(_) => UType::Int,
            ExprKind::Var(x) => match vars.iter().rev().find(|(n, _)| n == x) {
                Some((_, t)) => t.clone(),
                None => return Err(TypeError::Unbound { pos, name: x.clone() }),
            },
            ExprKind::BinOp(_, a, b) => {
                let ta = self.expr(a, vars, funs)?;
                self.unify(&ta, &UType::Int, a.pos)?;
                let tb = self.expr(b, vars, funs)?;
                self.unify(&tb, &UType::Int, b.pos)?;
                UType::Int
            }
            ExprKind::Nil => UType::List(Box::new(self.fresh())),
            ExprKind::Cons(a, b) => {
                let ta = self.expr(a, vars, funs)?;
                let tb = self.expr(b, vars, funs)?;
                let lt = UType::List(Box::new(ta));
                self.unify(&tb, &lt, pos)?;
                lt
            }
            ExprKind::List(items) => {
                let elem = self.fresh();
                for it in items {
                    let t = self.expr(it, vars, funs)?;
                    self.unify(&t, &elem, it.pos)?;
                }
                UType::List(Box::new(elem))
            }
            ExprKind::App(f, args) => {
                let ft = match funs.iter().rev().find(|(n, _)| n == f) {
                    Some((_, FunEntry::Mono(t))) => t.clone(),
                    Some((_, FunEntry::Poly(s))) => {
                        let s = s.clone();
                        self.instantiate(&s)
                    }
                    None => return Err(TypeError::Unbound { pos, name: f.clone() }),
                };
                if ft.params.len() != args.len() {
                    return Err(TypeError::UnificationFailure {
                        pos,
                        left: format!("{} arguments", ft.params.len()),
                        right: format!("{} arguments", args.len()),
                    });
                }
                for (p, a) in ft.params.iter().zip(args) {
                    let ta = self.expr(a, vars, funs)?;
                    self.unify(p, &ta, a.pos)?;
                }
                ft.result
            }
            ExprKind::Let(x, bound, body) => {
                let t = self.expr(bound, vars, funs)?;
                vars.push((x.clone(), t));
                let r = self.expr(body, vars, funs);
                vars.pop();
                r?
            }
            ExprKind::If(c, a, b) => {
                let tc = self.expr(c, vars, funs)?;
                self.unify(&tc, &UType::Int, c.pos)?;
                let ta = self.expr(a, vars, funs)?;
                let tb = self.expr(b, vars, funs)?;
                self.unify(&ta, &tb, pos)?;
                ta
            }
            ExprKind::Match {
                scrutinee,
                head,
                tail,
                nil_branch,
                cons_branch,
            } => {
                let ts = self.expr(scrutinee, vars, funs)?;
                let elem = self.fresh();
                let lt = UType::List(Box::new(elem.clone()));
                self.unify(&ts, &lt, scrutinee.pos)?;
                let tn = self.expr(nil_branch, vars, funs)?;
                vars.push((head.clone(), elem));
                vars.push((tail.clone(), lt));
                let tc = self.expr(cons_branch, vars, funs);
                vars.pop();
                vars.pop();
                let tc = tc?;
                self.unify(&tn, &tc, pos)?;
                tn
            }
            ExprKind::LetFun(def, body) => {
                let s = self.fundef(def, funs)?;
                funs.push((def.name.clone(), FunEntry::Poly(s)));
                let r = self.expr(body, vars, funs);
                funs.pop();
                r?
            }
            ExprKind::LetExtern(ext, body) => {
                funs.push((ext.name.clone(), FunEntry::Poly(erase(&ext.ftype))));
                let r = self.expr(body, vars, funs);
                funs.pop();
                r?
            }
        })
    }

    /// Infers a closed function definition; recursion is monomorphic.
    fn fundef(&mut self, def: &FunDef, funs: &mut Funs) -> Result<UFunType, TypeError> {
        let params: Vec<UType> = def.params.iter().map(|_| self.fresh()).collect();
        let result = self.fresh();
        let mono = UFunType {
            params: params.clone(),
            result: result.clone(),
        };
        funs.push((def.name.clone(), FunEntry::Mono(mono)));
        let mut vars: Vec<(String, UType)> = def.params.iter().cloned().zip(params.clone()).collect();
        let r = self.expr(&def.body, &mut vars, funs);
        funs.pop();
        let body = r?;
        self.unify(&body, &result, def.body.pos)?;
        Ok(canonical(&UFunType {
            params: params.iter().map(|p| self.resolve(p)).collect(),
            result: self.resolve(&result),
        }))
    }
}

enum FunEntry {
    Mono(UFunType),
    Poly(UFunType),
}

type Funs = Vec<(String, FunEntry)>;

/// Renumbers type variables 0, 1, ... in order of first appearance.
fn canonical(t: &UFunType) -> UFunType {
    fn go(t: &UType, m: &mut BTreeMap<u32, u32>) -> UType {
        match t {
            UType::Var(v) => {
                let n = m.len() as u32;
                UType::Var(*m.entry(*v).or_insert(n))
            }
            UType::List(e) => UType::List(Box::new(go(e, m))),
            UType::Int => UType::Int,
        }
    }
    let mut m = BTreeMap::new();
    UFunType {
        params: t.params.iter().map(|p| go(p, &mut m)).collect(),
        result: go(&t.result, &mut m),
    }
}

/// Erases sizes from a first-order type.
pub fn erase(t: &FirstOrderType) -> UFunType {
    let mut names = BTreeMap::new();
    let params = t.params.iter().map(|p| p.underlying_with(&mut names)).collect();
    let result = t.result.underlying_with(&mut names);
    canonical(&UFunType { params, result })
}

/// Most general size-erased types of every function in the program,
/// including nested definitions. Functions are polymorphic after their
/// definition and monomorphic inside it.
pub fn infer_underlying(p: &Program) -> Result<BTreeMap<String, UFunType>, TypeError> {
    let mut inf = Infer { subst: Vec::new() };
    let mut funs: Funs = Vec::new();
    let mut out = BTreeMap::new();
    for ext in &p.externs {
        funs.push((ext.name.clone(), FunEntry::Poly(erase(&ext.ftype))));
    }
    for def in &p.functions {
        let t = inf.fundef(def, &mut funs)?;
        collect_nested(&def.body, &mut inf, &mut funs, &mut out)?;
        out.insert(def.name.clone(), t.clone());
        funs.push((def.name.clone(), FunEntry::Poly(t)));
    }
    Ok(out)
}

fn collect_nested(
    e: &Expr,
    inf: &mut Infer,
    funs: &mut Funs,
    out: &mut BTreeMap<String, UFunType>,
) -> Result<(), TypeError> {
    let mut nested = Vec::new();
    e.visit(&mut |x| {
        if let ExprKind::LetFun(def, _) = &x.kind {
            nested.push((**def).clone());
        }
    });
    for def in nested {
        let t = inf.fundef(&def, funs)?;
        out.entry(def.name.clone()).or_insert(t);
    }
    Ok(())
}

/// A sized template for an underlying type: inputs carry fresh size
/// variables `n1..nk`, outputs carry placeholders `p1..ps`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub ftype: FirstOrderType,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

pub fn annotate_with_variables(u: &UFunType) -> Template {
    let all: Vec<&UType> = u.params.iter().chain([&u.result]).collect();
    let names = name_vars(&all);
    fn go(t: &UType, names: &BTreeMap<u32, String>, prefix: &str, acc: &mut Vec<String>) -> SizedType {
        match t {
            UType::Int => SizedType::Int,
            UType::Var(v) => SizedType::Var(names[v].clone()),
            UType::List(e) => {
                let name = format!("{prefix}{}", acc.len() + 1);
                acc.push(name.clone());
                let inner = go(e, names, prefix, acc);
                SizedType::list(inner, Polynomial::var(&name))
            }
        }
    }
    let mut inputs = Vec::new();
    let params = u.params.iter().map(|p| go(p, &names, "n", &mut inputs)).collect();
    let mut outputs = Vec::new();
    let result = go(&u.result, &names, "p", &mut outputs);
    Template {
        ftype: FirstOrderType { params, result },
        inputs,
        outputs,
    }
}

/// Checks that a sized type's underlying shape matches `u` up to variable naming.
pub fn same_shape(a: &SizedType, b: &SizedType) -> bool {
    match (a, b) {
        (SizedType::Hole, _) | (_, SizedType::Hole) => true,
        (SizedType::Int, SizedType::Int) => true,
        (SizedType::Var(_), SizedType::Var(_)) => true,
        (SizedType::List(x, _), SizedType::List(y, _)) => same_shape(x, y),
        _ => false,
    }
}

fn zero_ground(t: &SizedType) -> SizedType {
    match t {
        SizedType::List(e, _) => SizedType::list(zero_ground(e), Polynomial::zero()),
        _ => SizedType::Int,
    }
}

/// Ground instance of a sized type at a size valuation, with type
/// variables read as `Int`.
pub fn ground(t: &SizedType, valuation: &BTreeMap<String, Rational>) -> Option<SizedType> {
    match t {
        SizedType::Int | SizedType::Var(_) | SizedType::Hole => Some(SizedType::Int),
        SizedType::List(e, p) => {
            let v = p.eval(valuation).ok()?;
            if !v.is_integer() || v.is_negative() {
                return None;
            }
            let inner = if v.is_zero() {
                // everything below an empty list is irrelevant
                ground(e, valuation).unwrap_or_else(|| zero_ground(e))
            } else {
                ground(e, valuation)?
            };
            Some(SizedType::list(inner, Polynomial::constant(v)))
        }
    }
}
