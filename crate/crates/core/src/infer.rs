//! Test-based inference of output size polynomials: node placement,
//! test-input generation, measurement, exact interpolation and the
//! increasing-degree loop, plus synthesis of inhabitants for externs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::check::{check_function, Signature};
use crate::eval::{
    measure_sizes, run_function, Closures, EvalErrorKind, EvalOptions, LevelSize, Literal, MeasureError,
};
use crate::poly::{Monomial, Polynomial, Rational};
use crate::syntax::{
    check_scopes, desugar, parse_program_internal, validate_restriction, ExternDecl, FunDef, Program,
};
use crate::types::{
    annotate_with_variables, erase, infer_underlying, FirstOrderType, SizedType, Template, UFunType,
};

/// `C(d + k, k)`: the number of monomials of total degree at most `d` in
/// `k` variables.
pub fn required_measurements(d: u32, k: usize) -> u64 {
    let (d, k) = (d as u128, k as u128);
    let mut c: u128 = 1;
    for i in 1..=k {
        c = c * (d + i) / i;
    }
    c as u64
}

/// Exponent vectors of all monomials of total degree at most `d`, in
/// graded lexicographic order (lowest degree first).
pub fn monomial_exponents(k: usize, d: u32) -> Vec<Vec<u32>> {
    fn go(k: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == k {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=total).rev() {
            prefix.push(e);
            go(k, total - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=d {
        if k == 0 {
            if total == 0 {
                out.push(Vec::new());
            }
            continue;
        }
        go(k, total, &mut Vec::new(), &mut out);
    }
    out
}

// ---------------------------------------------------------------------------
// Nodes
// ---------------------------------------------------------------------------

/// How a configuration was built: distinct values on a line, or
/// hyperplanes (fixing the first remaining coordinate) hosting
/// lower-dimensional configurations of degrees `d, d-1, ..., 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NcaStructure {
    Empty,
    Line(Vec<u64>),
    Planes(Vec<Plane>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    pub value: u64,
    pub degree: u32,
    pub inner: NcaStructure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeConfiguration {
    pub k: usize,
    pub d: u32,
    pub nodes: Vec<Vec<u64>>,
    pub structure: NcaStructure,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferError {
    #[error("no node configuration avoiding the exclusions within [0..{0}]")]
    NodeSearchExhausted(u64),
    #[error("interpolation system is singular")]
    SingularSystem,
    #[error("non-shapely output at node {node:?}: lists at level {level} have lengths {lengths:?}")]
    NonShapelyObservation {
        node: Vec<u64>,
        level: usize,
        lengths: BTreeSet<u64>,
    },
    #[error("step budget exhausted when testing at node {node:?}")]
    BudgetExhausted { node: Vec<u64> },
    #[error("runtime error at node {node:?}: {message}")]
    Runtime { node: Vec<u64>, message: String },
    #[error("incomplete measurement at node {node:?}, level {level}")]
    IncompleteMeasurement { node: Vec<u64>, level: usize },
    #[error("no accepted type up to degree {}", .0.max_degree)]
    DegreeCapExceeded(Box<InferenceReport>),
    #[error("cannot infer `{function}`: {detail}")]
    Static { function: String, detail: String },
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),
}

fn excluded(point: &[(String, u64)], exclusions: &[Polynomial]) -> bool {
    exclusions
        .iter()
        .any(|p| p.eval_nat(point).map(|v| v.is_zero()).unwrap_or(true))
}

fn search(
    vars: &[String],
    prefix: &mut Vec<(String, u64)>,
    d: u32,
    exclusions: &[Polynomial],
    bound: u64,
) -> Option<(NcaStructure, Vec<Vec<u64>>)> {
    let i = prefix.len();
    let to_nodes = |pts: Vec<Vec<(String, u64)>>| -> Vec<Vec<u64>> {
        pts.into_iter().map(|p| p.into_iter().map(|(_, v)| v).collect()).collect()
    };
    if i == vars.len() {
        return if d == 0 && !excluded(prefix, exclusions) {
            Some((NcaStructure::Empty, to_nodes(vec![prefix.clone()])))
        } else {
            None
        };
    }
    if i + 1 == vars.len() {
        let mut values = Vec::new();
        let mut pts = Vec::new();
        for v in 0..=bound {
            prefix.push((vars[i].clone(), v));
            if !excluded(prefix, exclusions) {
                values.push(v);
                pts.push(prefix.clone());
            }
            prefix.pop();
            if values.len() == d as usize + 1 {
                return Some((NcaStructure::Line(values), to_nodes(pts)));
            }
        }
        return None;
    }
    let mut used = BTreeSet::new();
    let mut planes = Vec::new();
    let mut nodes = Vec::new();
    for degree in (0..=d).rev() {
        let mut found = None;
        for v in 0..=bound {
            if used.contains(&v) {
                continue;
            }
            prefix.push((vars[i].clone(), v));
            let r = search(vars, prefix, degree, exclusions, bound);
            prefix.pop();
            if let Some(r) = r {
                found = Some((v, r));
                break;
            }
        }
        let (v, (inner, pts)) = found?;
        used.insert(v);
        planes.push(Plane {
            value: v,
            degree,
            inner,
        });
        nodes.extend(pts);
    }
    Some((NcaStructure::Planes(planes), nodes))
}

/// An NCA configuration of `C(d+k, k)` natural nodes in `[0..bound]^k`
/// avoiding the zeros of every exclusion polynomial. Coordinates follow
/// `vars`. Hyperplanes fix the first coordinate and are assigned greedily,
/// highest degree first; feasible sets are nested, so greedy is complete.
pub fn nca_nodes(
    vars: &[String],
    d: u32,
    exclusions: &[Polynomial],
    bound: u64,
) -> Result<NodeConfiguration, InferError> {
    let (structure, nodes) =
        search(vars, &mut Vec::new(), d, exclusions, bound).ok_or(InferError::NodeSearchExhausted(bound))?;
    Ok(NodeConfiguration {
        k: vars.len(),
        d,
        nodes,
        structure,
    })
}

/// Node search starting at the sufficiency bound `Σ deg(exclusions) + d`
/// and doubling up to `growth` times.
pub fn nca_nodes_growing(
    vars: &[String],
    d: u32,
    exclusions: &[Polynomial],
    growth: u32,
) -> Result<NodeConfiguration, InferError> {
    let mut bound: u64 = exclusions.iter().map(|p| p.total_degree() as u64).sum::<u64>() + d as u64;
    let mut last = Err(InferError::NodeSearchExhausted(bound));
    for _ in 0..=growth {
        last = nca_nodes(vars, d, exclusions, bound);
        if last.is_ok() {
            return last;
        }
        bound = (bound * 2).max(1);
    }
    last
}

pub fn default_vars(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("n{i}")).collect()
}

// ---------------------------------------------------------------------------
// Interpolation
// ---------------------------------------------------------------------------

/// The unique polynomial of total degree at most `d` in `vars` taking
/// `values` at `nodes`, by exact Gaussian elimination.
pub fn derive_polynomial(
    d: u32,
    vars: &[String],
    nodes: &[Vec<u64>],
    values: &[Rational],
) -> Result<Polynomial, InferError> {
    let exps = monomial_exponents(vars.len(), d);
    let n = exps.len();
    if nodes.len() != n || values.len() != n {
        return Err(InferError::SingularSystem);
    }
    let mut m: Vec<Vec<Rational>> = nodes
        .iter()
        .zip(values)
        .map(|(node, val)| {
            let mut row: Vec<Rational> = exps
                .iter()
                .map(|e| {
                    let mut x = BigInt::one();
                    for (c, p) in node.iter().zip(e) {
                        x *= BigInt::from(*c).pow(*p);
                    }
                    Rational::from_integer(x)
                })
                .collect();
            row.push(val.clone());
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero()).ok_or(InferError::SingularSystem)?;
        m.swap(col, pivot);
        let inv = Rational::one() / m[col][col].clone();
        for x in m[col].iter_mut() {
            *x *= &inv;
        }
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != col && !row[col].is_zero() {
                let f = row[col].clone();
                for (x, p) in row.iter_mut().zip(&pivot_row) {
                    *x -= &f * p;
                }
            }
        }
    }
    Ok(Polynomial::from_terms(exps.iter().zip(&m).map(|(e, row)| {
        let mono = Monomial::from_powers(vars.iter().map(|v| v.as_str()).zip(e.iter().copied()));
        (row[n].clone(), mono)
    })))
}

// ---------------------------------------------------------------------------
// Test inputs and measurement
// ---------------------------------------------------------------------------

fn gen_value(t: &SizedType, sizes: &BTreeMap<String, u64>, next: &mut i64) -> Literal {
    match t {
        SizedType::Int => Literal::Int(1),
        SizedType::List(e, p) => {
            let n = p.as_var_minus_const().and_then(|(v, _)| sizes.get(&v).copied()).unwrap_or(0);
            Literal::List((0..n).map(|_| gen_leafy(e, sizes, next)).collect())
        }
        _ => {
            let v = *next;
            *next += 1;
            Literal::Int(v)
        }
    }
}

fn gen_leafy(t: &SizedType, sizes: &BTreeMap<String, u64>, next: &mut i64) -> Literal {
    match t {
        SizedType::Int => {
            let v = *next;
            *next += 1;
            Literal::Int(v)
        }
        _ => gen_value(t, sizes, next),
    }
}

/// Arguments of the demanded sizes. Element leaves are consecutive integers
/// from `seed`, shared across parameters left to right; top-level `Int`
/// parameters get 1.
pub fn generate_inputs(params: &[SizedType], sizes: &BTreeMap<String, u64>, seed: i64) -> Vec<Literal> {
    let mut next = seed;
    params.iter().map(|p| gen_value(p, sizes, &mut next)).collect()
}

pub fn generate_input(param: &SizedType, sizes: &BTreeMap<String, u64>, seed: i64) -> Literal {
    generate_inputs(std::slice::from_ref(param), sizes, seed).remove(0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementRow {
    pub node: Vec<u64>,
    pub inputs: Vec<Literal>,
    pub output: Literal,
    pub sizes: Vec<LevelSize>,
}

/// A function under test: its closures, name, template and limits.
pub struct Subject<'a> {
    pub closures: &'a Closures,
    pub name: String,
    pub template: Template,
    pub opts: EvalOptions,
    pub seed: i64,
}

impl Subject<'_> {
    pub fn measure(&self, node: &[u64]) -> Result<MeasurementRow, InferError> {
        let sizes: BTreeMap<String, u64> = self
            .template
            .inputs
            .iter()
            .cloned()
            .zip(node.iter().copied())
            .collect();
        let inputs = generate_inputs(&self.template.ftype.params, &sizes, self.seed);
        let (v, heap) = run_function(self.closures, &self.name, &inputs, self.opts).map_err(|e| match e.kind {
            EvalErrorKind::BudgetExhausted(_) | EvalErrorKind::DepthExceeded => {
                InferError::BudgetExhausted { node: node.to_vec() }
            }
            _ => InferError::Runtime {
                node: node.to_vec(),
                message: e.to_string(),
            },
        })?;
        let nesting = self.template.ftype.result.nesting();
        let sizes = measure_sizes(v, &heap, nesting).map_err(|e| match e {
            MeasureError::NonShapelyObservation { level, lengths } => InferError::NonShapelyObservation {
                node: node.to_vec(),
                level,
                lengths,
            },
            MeasureError::NotAList { .. } => InferError::Runtime {
                node: node.to_vec(),
                message: e.to_string(),
            },
        })?;
        let output = Literal::read(&heap, v).unwrap_or(Literal::List(vec![]));
        Ok(MeasurementRow {
            node: node.to_vec(),
            inputs,
            output,
            sizes,
        })
    }

    pub fn measurement_table(&self, nodes: &[Vec<u64>]) -> Result<Vec<MeasurementRow>, InferError> {
        nodes.iter().map(|n| self.measure(n)).collect()
    }
}

/// The table layout used in reports: one row per node, `?` for incomplete.
pub fn render_table(vars: &[String], rows: &[MeasurementRow], levels: usize) -> String {
    let mut out = String::new();
    let mut head: Vec<String> = vars.to_vec();
    head.push("inputs".into());
    head.push("output".into());
    head.extend((1..=levels).map(|j| format!("p{j}")));
    out.push_str(&head.join("\t"));
    out.push('\n');
    for r in rows {
        let mut cells: Vec<String> = r.node.iter().map(|x| x.to_string()).collect();
        cells.push(r.inputs.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" "));
        cells.push(r.output.to_string());
        cells.extend(r.sizes.iter().map(|s| s.to_string()));
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// The degree loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceptance {
    /// A candidate is accepted when the checker accepts the body.
    Checker,
    /// A degree-`d` candidate must also predict the sizes measured at the
    /// degree-`d+1` nodes; used for bodies the checker cannot handle.
    HeldOutTests,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceConfig {
    pub start_degree: u32,
    pub max_degree: u32,
    pub budget: u64,
    pub seed: i64,
    pub growth_limit: u32,
    pub acceptance: Acceptance,
    /// Also avoid nodes where some input list is empty.
    pub exclude_empty_inputs: bool,
    pub debug_assertions: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            start_degree: 0,
            max_degree: 6,
            budget: 10_000_000,
            seed: 42,
            growth_limit: 4,
            acceptance: Acceptance::Checker,
            exclude_empty_inputs: false,
            debug_assertions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelReport {
    pub level: usize,
    pub degree: u32,
    pub nodes: Vec<Vec<u64>>,
    pub rows: Vec<MeasurementRow>,
    pub polynomial: Polynomial,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttemptOutcome {
    Accepted,
    Rejected(Vec<String>),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attempt {
    pub degree: u32,
    pub candidate: Option<FirstOrderType>,
    pub levels: Vec<LevelReport>,
    pub outcome: AttemptOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceReport {
    pub function: String,
    pub template: FirstOrderType,
    pub attempts: Vec<Attempt>,
    pub result: Option<FirstOrderType>,
    pub evaluations: u64,
    pub max_degree: u32,
}

impl InferenceReport {
    /// Best guess at why inference did not terminate with a type.
    pub fn diagnosis(&self) -> String {
        let failed: Vec<&String> = self
            .attempts
            .iter()
            .filter_map(|a| match &a.outcome {
                AttemptOutcome::Failed(m) => Some(m),
                _ => None,
            })
            .collect();
        if !failed.is_empty() {
            format!("tests could not be completed: {}", failed[failed.len() - 1])
        } else if self.attempts.iter().all(|a| matches!(a.outcome, AttemptOutcome::Rejected(_))) {
            "every candidate was rejected; the size may not be polynomial of bounded degree, \
             or the checker cannot prove a true annotation"
                .to_string()
        } else {
            "no attempts were made".to_string()
        }
    }
}

fn substitute_outputs(template: &Template, polys: &[Polynomial]) -> FirstOrderType {
    let subst: BTreeMap<String, Polynomial> =
        template.outputs.iter().cloned().zip(polys.iter().cloned()).collect();
    FirstOrderType {
        params: template.ftype.params.clone(),
        result: template.ftype.result.substitute_sizes(&subst),
    }
}

fn empty_input_exclusion(template: &Template) -> Option<Polynomial> {
    let outer: Vec<String> = template
        .ftype
        .params
        .iter()
        .filter_map(|p| p.sizes().first().and_then(|s| s.as_var_minus_const()).map(|(v, _)| v))
        .collect();
    if outer.is_empty() {
        None
    } else {
        Some(outer.iter().fold(Polynomial::one(), |acc, v| &acc * &Polynomial::var(v)))
    }
}

/// Derives `p1..ps` for degree `d` level by level. Nodes at level `j`
/// avoid the zeros of `p1..p(j-1)`; below a zero polynomial everything is
/// zero.
pub fn get_size_aware_type(
    d: u32,
    subject: &Subject,
    cfg: &InferenceConfig,
    evaluations: &mut u64,
) -> Result<(FirstOrderType, Vec<LevelReport>), InferError> {
    let vars = &subject.template.inputs;
    let mut polys: Vec<Polynomial> = Vec::new();
    let mut levels = Vec::new();
    let base: Vec<Polynomial> = if cfg.exclude_empty_inputs {
        empty_input_exclusion(&subject.template).into_iter().collect()
    } else {
        Vec::new()
    };
    for j in 1..=subject.template.outputs.len() {
        if polys.last().is_some_and(|p| p.is_zero()) {
            polys.push(Polynomial::zero());
            continue;
        }
        let mut exclusions = base.clone();
        exclusions.extend(polys.iter().cloned());
        let config = nca_nodes_growing(vars, d, &exclusions, cfg.growth_limit)?;
        let rows = subject.measurement_table(&config.nodes)?;
        *evaluations += rows.len() as u64;
        let mut values = Vec::with_capacity(rows.len());
        for r in &rows {
            match r.sizes[j - 1] {
                LevelSize::Known(n) => values.push(Rational::from_integer(n.into())),
                LevelSize::Incomplete => {
                    return Err(InferError::IncompleteMeasurement {
                        node: r.node.clone(),
                        level: j,
                    })
                }
            }
        }
        let p = if values.iter().all(|v| v.is_zero()) {
            Polynomial::zero()
        } else {
            derive_polynomial(d, vars, &config.nodes, &values)?
        };
        levels.push(LevelReport {
            level: j,
            degree: d,
            nodes: config.nodes,
            rows,
            polynomial: p.clone(),
        });
        polys.push(p);
    }
    Ok((substitute_outputs(&subject.template, &polys), levels))
}

/// Do the measurements at the degree-`d+1` nodes agree with `candidate`?
fn held_out_agrees(
    d: u32,
    subject: &Subject,
    candidate: &FirstOrderType,
    cfg: &InferenceConfig,
    evaluations: &mut u64,
) -> Result<Vec<String>, InferError> {
    let vars = &subject.template.inputs;
    let mut exclusions: Vec<Polynomial> = if cfg.exclude_empty_inputs {
        empty_input_exclusion(&subject.template).into_iter().collect()
    } else {
        Vec::new()
    };
    exclusions.extend(
        candidate
            .result
            .sizes()
            .into_iter()
            .filter(|p| !p.is_zero())
            .cloned(),
    );
    if let Some(last) = exclusions.last() {
        // the innermost size is tested, not excluded
        if candidate.result.sizes().last().is_some_and(|p| p == &last) {
            exclusions.pop();
        }
    }
    let config = nca_nodes_growing(vars, d + 1, &exclusions, cfg.growth_limit)?;
    let rows = subject.measurement_table(&config.nodes)?;
    *evaluations += rows.len() as u64;
    let mut mismatches = Vec::new();
    for r in &rows {
        let point: Vec<(String, u64)> = vars.iter().cloned().zip(r.node.iter().copied()).collect();
        for (j, (p, s)) in candidate.result.sizes().iter().zip(&r.sizes).enumerate() {
            if let LevelSize::Known(n) = s {
                let want = p.eval_nat(&point).ok();
                if want != Some(Rational::from_integer((*n).into())) {
                    mismatches.push(format!("at {:?} level {} measured {n}, predicted {p}", r.node, j + 1));
                }
            }
        }
    }
    Ok(mismatches)
}

/// Tries degrees `start..=max` until a candidate is accepted.
pub fn try_increasing_degrees(
    subject: &Subject,
    def: Option<&FunDef>,
    sigma: &Signature,
    cfg: &InferenceConfig,
) -> Result<InferenceReport, InferError> {
    let mut report = InferenceReport {
        function: subject.name.clone(),
        template: subject.template.ftype.clone(),
        attempts: Vec::new(),
        result: None,
        evaluations: 0,
        max_degree: cfg.max_degree,
    };
    for d in cfg.start_degree..=cfg.max_degree {
        let mut evals = 0;
        let built = get_size_aware_type(d, subject, cfg, &mut evals);
        report.evaluations += evals;
        let (candidate, levels) = match built {
            Ok(x) => x,
            Err(e @ (InferError::NonShapelyObservation { .. } | InferError::BudgetExhausted { .. })) => {
                return Err(e)
            }
            Err(e @ InferError::Runtime { .. }) => return Err(e),
            Err(e) => {
                report.attempts.push(Attempt {
                    degree: d,
                    candidate: None,
                    levels: Vec::new(),
                    outcome: AttemptOutcome::Failed(e.to_string()),
                });
                continue;
            }
        };
        let outcome = match cfg.acceptance {
            Acceptance::Checker => {
                let def = def.ok_or_else(|| InferError::Static {
                    function: subject.name.clone(),
                    detail: "no body to check".into(),
                })?;
                let mut sigma = sigma.clone();
                sigma.insert(subject.name.clone(), candidate.clone());
                let r = check_function(def, &sigma);
                if r.accepted() {
                    AttemptOutcome::Accepted
                } else {
                    let mut why: Vec<String> = r.errors.iter().map(|e| e.to_string()).collect();
                    why.extend(r.failing().map(|o| format!("{} [{}] {}", o.obligation.pos, o.obligation.rule, o.obligation)));
                    AttemptOutcome::Rejected(why)
                }
            }
            Acceptance::HeldOutTests => {
                let mut evals = 0;
                let r = held_out_agrees(d, subject, &candidate, cfg, &mut evals);
                report.evaluations += evals;
                match r {
                    Ok(m) if m.is_empty() => AttemptOutcome::Accepted,
                    Ok(m) => AttemptOutcome::Rejected(m),
                    Err(e) => AttemptOutcome::Failed(e.to_string()),
                }
            }
        };
        let accepted = outcome == AttemptOutcome::Accepted;
        report.attempts.push(Attempt {
            degree: d,
            candidate: Some(candidate.clone()),
            levels,
            outcome,
        });
        if accepted {
            report.result = Some(candidate);
            return Ok(report);
        }
    }
    Err(InferError::DegreeCapExceeded(Box::new(report)))
}

// ---------------------------------------------------------------------------
// Inhabitants for externs
// ---------------------------------------------------------------------------

const HELPERS: &str = "
letfun $length(l) = match l with | nil -> 0 | cons(h, t) -> 1 + $length(t) in
letfun $mul(x, y) = if y then x + $mul(x, y - 1) else 0 in
letfun $first(l) = match l with | nil -> nil | cons(h, t) -> h in
";

/// Is `p` integer-valued on `[0..deg]^k`? For polynomials of that degree
/// this implies integer values on all naturals.
fn integer_valued(p: &Polynomial) -> bool {
    let vars: Vec<String> = p.vars().into_iter().collect();
    let deg = p.total_degree() as u64;
    let mut point = vec![0u64; vars.len()];
    loop {
        let pt: Vec<(String, u64)> = vars.iter().cloned().zip(point.iter().copied()).collect();
        if !p.eval_nat(&pt).map(|v| v.is_integer()).unwrap_or(false) {
            return false;
        }
        let mut i = 0;
        loop {
            if i == point.len() {
                return true;
            }
            point[i] += 1;
            if point[i] <= deg {
                break;
            }
            point[i] = 0;
            i += 1;
        }
    }
}

/// Source text computing `p` from bound size variables `$s_<name>`.
fn poly_code(p: &Polynomial) -> Result<String, InferError> {
    let den = p.denominator_lcm();
    let scaled = p.scale(&Rational::from_integer(den.clone()));
    let mut parts: Vec<(bool, String)> = Vec::new();
    for (mono, coeff) in scaled.sorted_terms() {
        let c = coeff.to_integer();
        let negative = c.is_negative();
        let c = c.abs().to_i64().ok_or_else(|| InferError::UnsupportedShape(format!("coefficient of {p} too large")))?;
        let mut factors: Vec<String> = Vec::new();
        for (v, e) in mono.powers() {
            for _ in 0..e {
                factors.push(format!("$s_{v}"));
            }
        }
        let term = factors
            .iter()
            .rev()
            .fold(c.to_string(), |acc, f| format!("$mul({acc}, {f})"));
        parts.push((negative, term));
    }
    if parts.is_empty() {
        return Ok("0".into());
    }
    let mut code = String::new();
    for (i, (neg, t)) in parts.into_iter().enumerate() {
        if i == 0 {
            code = if neg { format!("0 - {t}") } else { t };
        } else {
            code = format!("({code}) {} {t}", if neg { "-" } else { "+" });
        }
    }
    let den = den.to_i64().ok_or_else(|| InferError::UnsupportedShape(format!("denominator of {p} too large")))?;
    Ok(if den == 1 { code } else { format!("({code}) div {den}") })
}

/// A function body realising an extern's declared size behaviour, together
/// with helper definitions. Sizes of the inputs are measured, the result
/// polynomials evaluated, and lists of those lengths generated. Elements
/// come from the first leaf of a parameter of the same type variable (the
/// result is empty when that parameter has no leaf) or are the integer 1.
pub fn synthesize_inhabitant(ext: &ExternDecl) -> Result<Vec<FunDef>, InferError> {
    let ft = &ext.ftype;
    ft.validate()
        .map_err(|e| InferError::UnsupportedShape(format!("`{}`: {e}", ext.name)))?;
    let name = &ext.name;
    let mut src = String::from(HELPERS);
    let sizes: Vec<&Polynomial> = ft.result.sizes();
    for p in &sizes {
        if !integer_valued(p) {
            return Err(InferError::UnsupportedShape(format!(
                "`{name}`: size {p} is not integer-valued"
            )));
        }
    }
    let s = sizes.len();
    let gens: Vec<String> = (1..=s).map(|j| format!("$gen_{name}_{j}")).collect();
    let xs: Vec<String> = (1..=s).map(|j| format!("x{j}")).collect();
    for j in (0..s).rev() {
        let args = xs[j..].join(", ");
        let elem = if j + 1 == s {
            "e".to_string()
        } else {
            format!("{}(e, {})", gens[j + 1], xs[j + 1..].join(", "))
        };
        let mut rec = vec![format!("{} - 1", xs[j])];
        rec.extend(xs[j + 1..].iter().cloned());
        src.push_str(&format!(
            "letfun {g}(e, {args}) = if {x} then cons({elem}, {g}(e, {rec})) else nil in\n",
            g = gens[j],
            x = xs[j],
            rec = rec.join(", ")
        ));
    }
    // sizes of the inputs, outermost first; inner ones read the first element
    let mut bindings = String::new();
    for (param, t) in ext.params.iter().zip(&ft.params) {
        for (depth, size) in t.sizes().iter().enumerate() {
            if let Some((v, _)) = size.as_var_minus_const() {
                let mut e = param.clone();
                for _ in 0..depth {
                    e = format!("$first({e})");
                }
                if !bindings.contains(&format!("let $s_{v} =")) {
                    bindings.push_str(&format!("let $s_{v} = $length({e}) in "));
                }
            }
        }
    }
    let body = if s == 0 {
        match ft.result {
            SizedType::Int => "1".to_string(),
            _ => {
                return Err(InferError::UnsupportedShape(format!(
                    "`{name}`: result {} is not a list or Int",
                    ft.result
                )))
            }
        }
    } else {
        let mut rs = String::new();
        let mut args = Vec::new();
        for (j, p) in sizes.iter().enumerate() {
            rs.push_str(&format!("let $r{} = {} in ", j + 1, poly_code(p)?));
            args.push(format!("$r{}", j + 1));
        }
        let call = |elem: &str| format!("{bindings}{rs}{}({elem}, {})", gens[0], args.join(", "));
        match ft.result.leaf() {
            SizedType::Int => call("1"),
            SizedType::Var(a) => {
                let source = ext.params.iter().zip(&ft.params).find(|(_, t)| t.leaf() == &SizedType::Var(a.clone()));
                match source {
                    None => "nil".to_string(),
                    Some((param, t)) => {
                        let depth = t.nesting();
                        let mut code = call(&if depth == 0 { param.clone() } else { format!("$h{depth}") });
                        for level in (1..=depth).rev() {
                            let scrut = if level == 1 { param.clone() } else { format!("$h{}", level - 1) };
                            code = format!(
                                "match {scrut} with | nil -> nil | cons($h{level}, $t{level}) -> ({code})"
                            );
                        }
                        code
                    }
                }
            }
            other => {
                return Err(InferError::UnsupportedShape(format!(
                    "`{name}`: result leaf {other} is not supported"
                )))
            }
        }
    };
    src.push_str(&format!("letfun {name}({}) = {body} in\n", ext.params.join(", ")));
    let prog = parse_program_internal(&src).map_err(|e| InferError::UnsupportedShape(format!("internal: {e}")))?;
    Ok(desugar(&prog).functions)
}

/// Closures for a program, with a synthesized inhabitant for every extern.
pub fn closures_with_inhabitants(p: &Program) -> Result<Closures, InferError> {
    let mut c = Closures::from_program(p);
    for ext in &p.externs {
        for f in synthesize_inhabitant(ext)? {
            c.functions.entry(f.name.clone()).or_insert(f);
        }
    }
    Ok(c)
}

/// Infers the size type of an extern's inhabitant from tests alone.
pub fn reinfer_inhabitant(ext: &ExternDecl, cfg: &InferenceConfig) -> Result<InferenceReport, InferError> {
    let mut closures = Closures::default();
    for f in synthesize_inhabitant(ext)? {
        closures.functions.insert(f.name.clone(), f);
    }
    let template = annotate_with_variables(&erase(&ext.ftype));
    let subject = Subject {
        closures: &closures,
        name: ext.name.clone(),
        template,
        opts: EvalOptions {
            budget: cfg.budget,
            debug_assertions: cfg.debug_assertions,
            ..EvalOptions::default()
        },
        seed: cfg.seed,
    };
    let cfg = InferenceConfig {
        acceptance: Acceptance::HeldOutTests,
        exclude_empty_inputs: true,
        ..cfg.clone()
    };
    try_increasing_degrees(&subject, None, &Signature::new(), &cfg)
}

// ---------------------------------------------------------------------------
// Whole programs
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct ProgramInference {
    pub results: Vec<(String, Result<InferenceReport, InferError>)>,
}

impl ProgramInference {
    pub fn all_succeeded(&self) -> bool {
        self.results.iter().all(|(_, r)| r.is_ok())
    }

    pub fn inferred(&self, name: &str) -> Option<&FirstOrderType> {
        self.results
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, r)| r.as_ref().ok())
            .and_then(|r| r.result.as_ref())
    }
}

/// Renames the template's size variables to those of an annotation with
/// the same shape, so inferred types read like the annotation.
fn template_for(u: &UFunType) -> Template {
    annotate_with_variables(u)
}

/// Infers every top-level function in order. Externs contribute their
/// declared types and are run through synthesized inhabitants; each
/// inferred type joins the signature for later functions.
pub fn infer_program(p: &Program, cfg: &InferenceConfig) -> Result<ProgramInference, InferError> {
    let stat = |detail: String| InferError::Static {
        function: "<program>".into(),
        detail,
    };
    let scope = check_scopes(p);
    if let Some(e) = scope.first() {
        return Err(stat(e.to_string()));
    }
    let core = desugar(p);
    if let Some(v) = validate_restriction(&core).first() {
        return Err(stat(v.to_string()));
    }
    let underlying = infer_underlying(&core).map_err(|e| stat(e.to_string()))?;
    let closures = closures_with_inhabitants(&core)?;
    let mut sigma: Signature = core.externs.iter().map(|e| (e.name.clone(), e.ftype.clone())).collect();
    let opts = EvalOptions {
        budget: cfg.budget,
        ..EvalOptions::default()
    };
    let mut results = Vec::new();
    for def in &core.functions {
        let template = template_for(&underlying[&def.name]);
        let subject = Subject {
            closures: &closures,
            name: def.name.clone(),
            template,
            opts,
            seed: cfg.seed,
        };
        let r = try_increasing_degrees(&subject, Some(def), &sigma, cfg);
        if let Ok(rep) = &r {
            if let Some(t) = &rep.result {
                sigma.insert(def.name.clone(), t.clone());
            }
        }
        results.push((def.name.clone(), r));
    }
    Ok(ProgramInference { results })
}

impl fmt::Display for NodeConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ns: Vec<String> = self
            .nodes
            .iter()
            .map(|n| format!("({})", n.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        write!(f, "{}", ns.join(" "))
    }
}
