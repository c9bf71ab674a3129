//! Big-step evaluation over an explicit heap and frame store, plus the
//! footprint function, the model relation and output-size measurement.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{Signed, ToPrimitive};
use thiserror::Error;

use crate::syntax::{BinOp, Expr, ExprKind, FunDef, Pos, Program};
use crate::types::SizedType;

pub type Loc = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Null,
    Loc(Loc),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub hd: Value,
    pub tl: Value,
}

/// Cells are never freed, so the domain is always `0..len`, except where
/// tests punch holes with [`Heap::remove`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Heap {
    cells: Vec<Option<Cell>>,
}

impl Heap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, hd: Value, tl: Value) -> Loc {
        self.cells.push(Some(Cell { hd, tl }));
        self.cells.len() - 1
    }

    pub fn get(&self, l: Loc) -> Option<&Cell> {
        self.cells.get(l).and_then(|c| c.as_ref())
    }

    pub fn set(&mut self, l: Loc, cell: Cell) {
        if l >= self.cells.len() {
            self.cells.resize(l + 1, None);
        }
        self.cells[l] = Some(cell);
    }

    pub fn remove(&mut self, l: Loc) {
        if let Some(c) = self.cells.get_mut(l) {
            *c = None;
        }
    }

    pub fn contains(&self, l: Loc) -> bool {
        self.get(l).is_some()
    }

    pub fn domain(&self) -> BTreeSet<Loc> {
        (0..self.cells.len()).filter(|l| self.contains(*l)).collect()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub type Store = BTreeMap<String, Value>;

pub type ExternFn = Box<dyn Fn(&[Value], &mut Heap) -> Result<Value, String> + Send + Sync>;

/// Function bodies by name, and host callbacks for externs.
#[derive(Default)]
pub struct Closures {
    pub functions: BTreeMap<String, FunDef>,
    pub externs: BTreeMap<String, ExternFn>,
}

impl Closures {
    pub fn from_program(p: &Program) -> Self {
        Closures {
            functions: p.functions.iter().map(|f| (f.name.clone(), f.clone())).collect(),
            externs: BTreeMap::new(),
        }
    }

    pub fn with_extern(mut self, name: &str, f: ExternFn) -> Self {
        self.externs.insert(name.to_string(), f);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalErrorKind {
    #[error("evaluation is stuck: {0}")]
    Stuck(String),
    #[error("division by zero")]
    DivByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("step budget of {0} exhausted")]
    BudgetExhausted(u64),
    #[error("recursion depth limit exceeded")]
    DepthExceeded,
    #[error("extern `{0}` has no implementation")]
    MissingExtern(String),
    #[error("extern `{name}` failed: {message}")]
    ExternFailed { name: String, message: String },
    #[error("assertion failed: {0}")]
    Assertion(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: {kind}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub budget: u64,
    /// Checks benign sharing at every `let` and heap monotonicity at every call.
    pub debug_assertions: bool,
    pub max_depth: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            budget: 10_000_000,
            debug_assertions: false,
            max_depth: 1_000_000,
        }
    }
}

struct Machine<'a> {
    closures: &'a Closures,
    local: Vec<&'a FunDef>,
    heap: &'a mut Heap,
    opts: EvalOptions,
    steps: u64,
    depth: usize,
}

impl<'a> Machine<'a> {
    fn fail<T>(&self, kind: EvalErrorKind, pos: Pos) -> Result<T, EvalError> {
        Err(EvalError { kind, pos })
    }

    fn int(&self, v: Value, pos: Pos) -> Result<i64, EvalError> {
        match v {
            Value::Int(n) => Ok(n),
            other => self.fail(EvalErrorKind::Stuck(format!("expected an integer, got {other:?}")), pos),
        }
    }

    fn eval(&mut self, e: &'a Expr, s: &mut Store) -> Result<Value, EvalError> {
        self.steps += 1;
        if self.steps > self.opts.budget {
            return self.fail(EvalErrorKind::BudgetExhausted(self.opts.budget), e.pos);
        }
        let pos = e.pos;
        match &e.kind {
            ExprKind::Int(n) => Ok(Value::Int(*n)),
            ExprKind::Var(x) => match s.get(x) {
                Some(v) => Ok(*v),
                None => self.fail(EvalErrorKind::Stuck(format!("unbound variable `{x}`")), pos),
            },
            ExprKind::BinOp(op, a, b) => {
                let x = self.eval(a, s)?;
                let x = self.int(x, a.pos)?;
                let y = self.eval(b, s)?;
                let y = self.int(y, b.pos)?;
                let r = match op {
                    BinOp::Add => x.checked_add(y),
                    BinOp::Sub => x.checked_sub(y),
                    BinOp::Div | BinOp::Mod if y == 0 => {
                        return self.fail(EvalErrorKind::DivByZero, pos)
                    }
                    BinOp::Div => x.checked_div(y),
                    BinOp::Mod => x.checked_rem(y),
                };
                match r {
                    Some(v) => Ok(Value::Int(v)),
                    None => self.fail(EvalErrorKind::Overflow, pos),
                }
            }
            ExprKind::Nil => Ok(Value::Null),
            ExprKind::Cons(a, b) => {
                let hd = self.eval(a, s)?;
                let tl = self.eval(b, s)?;
                Ok(Value::Loc(self.heap.alloc(hd, tl)))
            }
            ExprKind::List(items) => {
                let mut vals = Vec::with_capacity(items.len());
                for it in items {
                    vals.push(self.eval(it, s)?);
                }
                let mut v = Value::Null;
                for hd in vals.into_iter().rev() {
                    v = Value::Loc(self.heap.alloc(hd, v));
                }
                Ok(v)
            }
            ExprKind::App(f, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a, s)?);
                }
                self.call(f, &vals, pos)
            }
            ExprKind::Let(x, bound, body) => {
                let guard = if self.opts.debug_assertions {
                    let fv = body.free_vars();
                    let roots: Vec<Value> = s
                        .iter()
                        .filter(|(k, _)| fv.contains(*k))
                        .map(|(_, v)| *v)
                        .collect();
                    let locs: BTreeSet<Loc> = roots.iter().flat_map(|v| footprint(self.heap, *v)).collect();
                    Some(locs.into_iter().map(|l| (l, *self.heap.get(l).unwrap())).collect::<Vec<_>>())
                } else {
                    None
                };
                let v = self.eval(bound, s)?;
                if let Some(snapshot) = guard {
                    for (l, c) in snapshot {
                        if self.heap.get(l) != Some(&c) {
                            return self.fail(
                                EvalErrorKind::Assertion(format!(
                                    "binding `{x}` changed cell {l} reachable from the body"
                                )),
                                pos,
                            );
                        }
                    }
                }
                let old = s.insert(x.clone(), v);
                let r = self.eval(body, s);
                restore(s, x, old);
                r
            }
            ExprKind::If(c, a, b) => {
                let v = self.eval(c, s)?;
                if self.int(v, c.pos)? != 0 {
                    self.eval(a, s)
                } else {
                    self.eval(b, s)
                }
            }
            ExprKind::Match {
                scrutinee,
                head,
                tail,
                nil_branch,
                cons_branch,
            } => match self.eval(scrutinee, s)? {
                Value::Null => self.eval(nil_branch, s),
                Value::Loc(l) => {
                    let cell = match self.heap.get(l) {
                        Some(c) => *c,
                        None => {
                            return self.fail(EvalErrorKind::Stuck(format!("dangling location {l}")), pos)
                        }
                    };
                    let oh = s.insert(head.clone(), cell.hd);
                    let ot = s.insert(tail.clone(), cell.tl);
                    let r = self.eval(cons_branch, s);
                    restore(s, tail, ot);
                    restore(s, head, oh);
                    r
                }
                Value::Int(_) => self.fail(EvalErrorKind::Stuck("match on an integer".into()), pos),
            },
            ExprKind::LetFun(def, body) => {
                self.local.push(def);
                let r = self.eval(body, s);
                self.local.pop();
                r
            }
            ExprKind::LetExtern(_, body) => self.eval(body, s),
        }
    }

    fn call(&mut self, f: &str, args: &[Value], pos: Pos) -> Result<Value, EvalError> {
        let def: Option<&'a FunDef> = self
            .local
            .iter()
            .rev()
            .find(|d| d.name == f)
            .copied()
            .or_else(|| self.closures.functions.get(f));
        if let Some(def) = def {
            if def.params.len() != args.len() {
                return self.fail(EvalErrorKind::Stuck(format!("arity mismatch calling `{f}`")), pos);
            }
            self.depth += 1;
            if self.depth > self.opts.max_depth {
                return self.fail(EvalErrorKind::DepthExceeded, pos);
            }
            let before = self.heap.cells.len();
            let mut frame: Store = def.params.iter().cloned().zip(args.iter().copied()).collect();
            let r = self.eval(&def.body, &mut frame);
            self.depth -= 1;
            if self.opts.debug_assertions && self.heap.cells.len() < before {
                return self.fail(EvalErrorKind::Assertion("heap shrank during a call".into()), pos);
            }
            return r;
        }
        match self.closures.externs.get(f) {
            Some(cb) => cb(args, self.heap).map_err(|message| EvalError {
                kind: EvalErrorKind::ExternFailed {
                    name: f.to_string(),
                    message,
                },
                pos,
            }),
            None => self.fail(EvalErrorKind::MissingExtern(f.to_string()), pos),
        }
    }
}

fn restore(s: &mut Store, x: &str, old: Option<Value>) {
    match old {
        Some(v) => {
            s.insert(x.to_string(), v);
        }
        None => {
            s.remove(x);
        }
    }
}

/// Evaluates `e` under store `s`, extending `h` in place. Returns the value
/// and the number of rule applications used.
pub fn evaluate(
    e: &Expr,
    s: &Store,
    h: &mut Heap,
    closures: &Closures,
    opts: EvalOptions,
) -> Result<(Value, u64), EvalError> {
    let mut m = Machine {
        closures,
        local: Vec::new(),
        heap: h,
        opts,
        steps: 0,
        depth: 0,
    };
    let mut store = s.clone();
    let v = m.eval(e, &mut store)?;
    Ok((v, m.steps))
}

/// Calls a named function on values already placed in `h`.
pub fn call_function(
    f: &str,
    args: &[Value],
    h: &mut Heap,
    closures: &Closures,
    opts: EvalOptions,
) -> Result<(Value, u64), EvalError> {
    let mut m = Machine {
        closures,
        local: Vec::new(),
        heap: h,
        opts,
        steps: 0,
        depth: 0,
    };
    let v = m.call(f, args, Pos::default())?;
    Ok((v, m.steps))
}

const STACK_BYTES: usize = 1 << 30;

/// Runs `f` on a thread with a large stack; the evaluator recurses once
/// per nested expression and call.
pub fn with_large_stack<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    std::thread::scope(|scope| {
        std::thread::Builder::new()
            .stack_size(STACK_BYTES)
            .spawn_scoped(scope, f)
            .expect("failed to spawn evaluator thread")
            .join()
            .unwrap_or_else(|e| std::panic::resume_unwind(e))
    })
}

/// Builds literal arguments in a fresh heap and calls `f` on them.
pub fn run_function(
    closures: &Closures,
    f: &str,
    args: &[Literal],
    opts: EvalOptions,
) -> Result<(Value, Heap), EvalError> {
    with_large_stack(|| {
        let mut heap = Heap::new();
        let vals: Vec<Value> = args.iter().map(|a| a.build(&mut heap)).collect();
        let (v, _) = call_function(f, &vals, &mut heap, closures, opts)?;
        Ok((v, heap))
    })
}

/// Locations reachable from `v`. A dangling location contributes nothing.
pub fn footprint(h: &Heap, v: Value) -> BTreeSet<Loc> {
    let mut out = BTreeSet::new();
    let mut todo = vec![v];
    while let Some(v) = todo.pop() {
        if let Value::Loc(l) = v {
            if let Some(c) = h.get(l) {
                if out.insert(l) {
                    todo.push(c.hd);
                    todo.push(c.tl);
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Literals and the model relation
// ---------------------------------------------------------------------------

/// A set-theoretic value: an integer or a finite sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Int(i64),
    List(Vec<Literal>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad value literal at offset {offset}: {message}")]
pub struct LiteralError {
    pub offset: usize,
    pub message: String,
}

impl Literal {
    pub fn parse(text: &str) -> Result<Literal, LiteralError> {
        let bytes = text.as_bytes();
        let mut i = 0;
        let lit = parse_lit(bytes, &mut i)?;
        skip_ws(bytes, &mut i);
        if i != bytes.len() {
            return Err(LiteralError {
                offset: i,
                message: "trailing input".into(),
            });
        }
        Ok(lit)
    }

    /// Allocates the literal in `h`; later elements are allocated first.
    pub fn build(&self, h: &mut Heap) -> Value {
        match self {
            Literal::Int(n) => Value::Int(*n),
            Literal::List(items) => {
                let mut v = Value::Null;
                for it in items.iter().rev() {
                    let hd = it.build(h);
                    v = Value::Loc(h.alloc(hd, v));
                }
                v
            }
        }
    }

    /// Reads a heap value back; `NULL` reads as the empty list.
    pub fn read(h: &Heap, v: Value) -> Option<Literal> {
        let mut seen = BTreeSet::new();
        read_lit(h, v, &mut seen)
    }
}

fn read_lit(h: &Heap, v: Value, seen: &mut BTreeSet<Loc>) -> Option<Literal> {
    match v {
        Value::Int(n) => Some(Literal::Int(n)),
        Value::Null => Some(Literal::List(Vec::new())),
        Value::Loc(mut l) => {
            let mut items = Vec::new();
            loop {
                if !seen.insert(l) {
                    return None;
                }
                let c = h.get(l)?;
                items.push(read_lit(h, c.hd, seen)?);
                match c.tl {
                    Value::Null => break,
                    Value::Loc(next) => l = next,
                    Value::Int(_) => return None,
                }
            }
            Some(Literal::List(items))
        }
    }
}

fn skip_ws(b: &[u8], i: &mut usize) {
    while *i < b.len() && b[*i].is_ascii_whitespace() {
        *i += 1;
    }
}

fn parse_lit(b: &[u8], i: &mut usize) -> Result<Literal, LiteralError> {
    skip_ws(b, i);
    let err = |offset: usize, m: &str| LiteralError {
        offset,
        message: m.to_string(),
    };
    match b.get(*i) {
        Some(b'[') => {
            *i += 1;
            let mut items = Vec::new();
            skip_ws(b, i);
            if b.get(*i) == Some(&b']') {
                *i += 1;
                return Ok(Literal::List(items));
            }
            loop {
                items.push(parse_lit(b, i)?);
                skip_ws(b, i);
                match b.get(*i) {
                    Some(b',') => *i += 1,
                    Some(b']') => {
                        *i += 1;
                        return Ok(Literal::List(items));
                    }
                    _ => return Err(err(*i, "expected `,` or `]`")),
                }
            }
        }
        Some(c) if c.is_ascii_digit() || *c == b'-' => {
            let start = *i;
            *i += 1;
            while *i < b.len() && b[*i].is_ascii_digit() {
                *i += 1;
            }
            std::str::from_utf8(&b[start..*i])
                .ok()
                .and_then(|s| s.parse().ok())
                .map(Literal::Int)
                .ok_or_else(|| err(start, "invalid integer"))
        }
        _ => Err(err(*i, "expected an integer or `[`")),
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(n) => write!(f, "{n}"),
            Literal::List(items) => {
                write!(f, "[")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{it}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// The unique `w` with `v ⊨h_gt w`, if any. `gt` must be ground. Each cons
/// cell is consumed along its path, so cyclic structures have no model.
pub fn models(v: Value, h: &Heap, gt: &SizedType) -> Option<Literal> {
    let mut removed = BTreeSet::new();
    models_in(v, h, gt, &mut removed)
}

fn models_in(v: Value, h: &Heap, gt: &SizedType, removed: &mut BTreeSet<Loc>) -> Option<Literal> {
    match gt {
        SizedType::Int => match v {
            Value::Int(n) => Some(Literal::Int(n)),
            _ => None,
        },
        SizedType::List(elem, size) => {
            let n = size.as_constant()?;
            if !n.is_integer() || n.is_negative() {
                return None;
            }
            let n = n.to_integer().to_u64()?;
            let mut items = Vec::new();
            let mut cur = v;
            let mut path = Vec::new();
            let mut ok = true;
            for _ in 0..n {
                let l = match cur {
                    Value::Loc(l) if h.contains(l) && !removed.contains(&l) => l,
                    _ => {
                        ok = false;
                        break;
                    }
                };
                removed.insert(l);
                path.push(l);
                let c = h.get(l).unwrap();
                match models_in(c.hd, h, elem, removed) {
                    Some(w) => items.push(w),
                    None => {
                        ok = false;
                        break;
                    }
                }
                cur = c.tl;
            }
            for l in path {
                removed.remove(&l);
            }
            (ok && cur == Value::Null).then_some(Literal::List(items))
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Size measurement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LevelSize {
    Known(u64),
    /// No list exists at this depth because an enclosing list is empty.
    Incomplete,
}

impl fmt::Display for LevelSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelSize::Known(n) => write!(f, "{n}"),
            LevelSize::Incomplete => write!(f, "?"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error("non-shapely output: lists at level {level} have lengths {lengths:?}")]
    NonShapelyObservation { level: usize, lengths: BTreeSet<u64> },
    #[error("value at level {level} is not a list")]
    NotAList { level: usize },
}

/// Per-level lengths of a nested list, outermost first.
pub fn measure_sizes(v: Value, h: &Heap, nesting: usize) -> Result<Vec<LevelSize>, MeasureError> {
    let mut out = Vec::with_capacity(nesting);
    let mut frontier = vec![v];
    for level in 1..=nesting {
        if frontier.is_empty() {
            out.push(LevelSize::Incomplete);
            continue;
        }
        let mut lengths = BTreeSet::new();
        let mut next = Vec::new();
        for &list in &frontier {
            let mut cur = list;
            let mut len = 0u64;
            loop {
                match cur {
                    Value::Null => break,
                    Value::Loc(l) => match h.get(l) {
                        Some(c) => {
                            len += 1;
                            if level < nesting {
                                next.push(c.hd);
                            }
                            cur = c.tl;
                        }
                        None => return Err(MeasureError::NotAList { level }),
                    },
                    Value::Int(_) => return Err(MeasureError::NotAList { level }),
                }
            }
            lengths.insert(len);
        }
        if lengths.len() > 1 {
            return Err(MeasureError::NonShapelyObservation { level, lengths });
        }
        out.push(LevelSize::Known(*lengths.iter().next().unwrap()));
        frontier = next;
    }
    Ok(out)
}

/// Sizes of a ground type from the outermost list inwards, stopping below
/// the first zero.
pub fn expected_sizes(gt: &SizedType) -> Vec<LevelSize> {
    let mut out = Vec::new();
    let mut t = gt;
    let mut empty = false;
    while let SizedType::List(e, p) = t {
        if empty {
            out.push(LevelSize::Incomplete);
        } else {
            let n = p.as_constant().and_then(|c| c.to_integer().to_u64()).unwrap_or(0);
            empty = n == 0 || p.is_zero();
            out.push(LevelSize::Known(n));
        }
        t = e;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{desugar, parse_program, parse_sized_type};

    const PROGRAMS: &str = "
        letfun append(l1, l2) = match l1 with | nil -> l2 | cons(hd, tl) -> cons(hd, append(tl, l2)) in
        letfun pairs(x, l) = match l with | nil -> nil | cons(hd, tl) -> cons([x, hd], pairs(x, tl)) in
        letfun cprod(l1, l2) = match l1 with | nil -> nil
          | cons(hd, tl) -> append(pairs(hd, l2), cprod(tl, l2)) in
        letfun progression(l) = match l with | nil -> nil
          | cons(hd, tl) -> append(progression(tl), l) in
        letfun half(x) = x div 0 in
    ";

    fn run(src_fn: &str, args: &[&str], sugared: bool) -> String {
        let p = parse_program(PROGRAMS).unwrap();
        let p = if sugared { p } else { desugar(&p) };
        let c = Closures::from_program(&p);
        let lits: Vec<Literal> = args.iter().map(|a| Literal::parse(a).unwrap()).collect();
        let (v, h) = run_function(&c, src_fn, &lits, EvalOptions::default()).unwrap();
        Literal::read(&h, v).unwrap().to_string()
    }

    #[test]
    fn cartesian_product() {
        for sugared in [true, false] {
            assert_eq!(
                run("cprod", &["[1,2,3]", "[4,5]"], sugared),
                "[[1,4],[1,5],[2,4],[2,5],[3,4],[3,5]]"
            );
        }
    }

    #[test]
    fn progression_of_three() {
        assert_eq!(run("progression", &["[1,2,3]"], false), "[3,2,3,1,2,3]");
    }

    #[test]
    fn division_by_zero() {
        let p = parse_program(PROGRAMS).unwrap();
        let c = Closures::from_program(&p);
        let err = run_function(&c, "half", &[Literal::Int(4)], EvalOptions::default()).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::DivByZero);
    }

    #[test]
    fn nil_leaves_heap_alone() {
        let e = crate::syntax::parse_expr("nil").unwrap();
        let mut h = Heap::new();
        let (v, _) = evaluate(&e, &Store::new(), &mut h, &Closures::default(), EvalOptions::default()).unwrap();
        assert_eq!(v, Value::Null);
        assert!(h.is_empty());
    }

    #[test]
    fn footprint_cases() {
        let mut h = Heap::new();
        let v = Literal::parse("[1,2]").unwrap().build(&mut h);
        assert!(footprint(&h, Value::Int(7)).is_empty());
        assert!(footprint(&h, Value::Null).is_empty());
        assert_eq!(footprint(&h, v).len(), 2);
    }

    #[test]
    fn model_relation() {
        let mut h = Heap::new();
        assert_eq!(
            models(Value::Null, &h, &parse_sized_type("L(Int,0)").unwrap()),
            Some(Literal::List(vec![]))
        );
        let lit = Literal::parse("[[1,4],[1,5],[2,4],[2,5],[3,4],[3,5]]").unwrap();
        let v = lit.build(&mut h);
        assert_eq!(models(v, &h, &parse_sized_type("L(L(Int,2),6)").unwrap()), Some(lit));
        let one = Literal::parse("[1]").unwrap().build(&mut h);
        assert_eq!(models(one, &h, &parse_sized_type("L(Int,2)").unwrap()), None);
    }

    #[test]
    fn cyclic_heap_has_no_model() {
        let mut h = Heap::new();
        let l = h.alloc(Value::Int(1), Value::Null);
        h.set(l, Cell { hd: Value::Int(1), tl: Value::Loc(l) });
        assert_eq!(models(Value::Loc(l), &h, &parse_sized_type("L(Int,2)").unwrap()), None);
        assert_eq!(footprint(&h, Value::Loc(l)).len(), 1);
    }

    #[test]
    fn measuring() {
        let mut h = Heap::new();
        let v = Literal::parse("[[0,1]]").unwrap().build(&mut h);
        assert_eq!(measure_sizes(v, &h, 2).unwrap(), vec![LevelSize::Known(1), LevelSize::Known(2)]);
        assert_eq!(
            measure_sizes(Value::Null, &h, 2).unwrap(),
            vec![LevelSize::Known(0), LevelSize::Incomplete]
        );
        let bad = Literal::parse("[[1],[2,3]]").unwrap().build(&mut h);
        assert_eq!(
            measure_sizes(bad, &h, 2).unwrap_err(),
            MeasureError::NonShapelyObservation {
                level: 2,
                lengths: BTreeSet::from([1, 2])
            }
        );
    }

    #[test]
    fn debug_assertions_pass_on_benign_programs() {
        let p = desugar(&parse_program(PROGRAMS).unwrap());
        let c = Closures::from_program(&p);
        let opts = EvalOptions {
            debug_assertions: true,
            ..EvalOptions::default()
        };
        let args = [Literal::parse("[1,2]").unwrap(), Literal::parse("[3]").unwrap()];
        assert!(run_function(&c, "cprod", &args, opts).is_ok());
    }

    #[test]
    fn budget_is_enforced() {
        let p = parse_program("letfun loop(x) = loop(x) in").unwrap();
        let c = Closures::from_program(&p);
        let opts = EvalOptions {
            budget: 1000,
            ..EvalOptions::default()
        };
        let err = run_function(&c, "loop", &[Literal::Int(0)], opts).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::BudgetExhausted(1000));
    }

    #[test]
    fn literal_round_trip() {
        for s in ["[]", "[1,2,3]", "[[0,1]]", "-4", "[[],[[]]]"] {
            assert_eq!(Literal::parse(s).unwrap().to_string(), s);
        }
        assert!(Literal::parse("[1,").is_err());
    }
}
