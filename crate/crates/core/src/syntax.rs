//! Surface syntax, AST, desugaring to the core grammar and the
//! no-let-before-match restriction.
//!
//! One AST serves both the sugared and the core form. In core form every
//! argument of `cons`, a binary operator or a call is a variable, the
//! condition of `if` and the scrutinee of `match` are variables, and a
//! `let` binds a basic expression (or a variable). [`desugar`] maps any
//! parsed program into core form; [`Expr::is_core`] recognises it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::poly::{Polynomial, Rational};
use crate::types::{FirstOrderType, SizedType};

/// A line/column source position (1-based).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {pos}: expected {}, found {found}", expected.join(" or "))]
pub struct SyntaxError {
    pub pos: Pos,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Div,
    Mod,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Div => "div",
            BinOp::Mod => "mod",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Int(i64),
    Var(String),
    BinOp(BinOp, Box<Expr>, Box<Expr>),
    Nil,
    Cons(Box<Expr>, Box<Expr>),
    /// `[e1, ..., en]`; sugar only.
    List(Vec<Expr>),
    App(String, Vec<Expr>),
    Let(String, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Match {
        scrutinee: Box<Expr>,
        head: String,
        tail: String,
        nil_branch: Box<Expr>,
        cons_branch: Box<Expr>,
    },
    LetFun(Box<FunDef>, Box<Expr>),
    LetExtern(ExternDecl, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Expr,
    pub annotation: Option<FirstOrderType>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternDecl {
    pub name: String,
    pub params: Vec<String>,
    pub ftype: FirstOrderType,
    pub pos: Pos,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub functions: Vec<FunDef>,
    pub externs: Vec<ExternDecl>,
    pub main: Option<Expr>,
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos }
    }

    pub fn var(name: &str, pos: Pos) -> Self {
        Expr::new(ExprKind::Var(name.to_string()), pos)
    }

    pub fn as_var(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Var(v) => Some(v),
            _ => None,
        }
    }

    /// Basic expressions of the core grammar: constants, operators on
    /// variables, `nil`, `cons` and calls on variables.
    pub fn is_basic(&self) -> bool {
        match &self.kind {
            ExprKind::Int(_) | ExprKind::Nil => true,
            ExprKind::BinOp(_, a, b) | ExprKind::Cons(a, b) => {
                a.as_var().is_some() && b.as_var().is_some()
            }
            ExprKind::App(_, args) => args.iter().all(|a| a.as_var().is_some()),
            _ => false,
        }
    }

    pub fn is_core(&self) -> bool {
        match &self.kind {
            ExprKind::Var(_) => true,
            ExprKind::List(_) => false,
            ExprKind::Let(_, bound, body) => {
                (bound.is_basic() || bound.as_var().is_some()) && body.is_core()
            }
            ExprKind::If(c, a, b) => c.as_var().is_some() && a.is_core() && b.is_core(),
            ExprKind::Match {
                scrutinee,
                nil_branch,
                cons_branch,
                ..
            } => scrutinee.as_var().is_some() && nil_branch.is_core() && cons_branch.is_core(),
            ExprKind::LetFun(def, body) => def.body.is_core() && body.is_core(),
            ExprKind::LetExtern(_, body) => body.is_core(),
            _ => self.is_basic(),
        }
    }

    /// Free program variables.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match &self.kind {
            ExprKind::Int(_) | ExprKind::Nil => {}
            ExprKind::Var(v) => {
                if !bound.contains(v) {
                    out.insert(v.clone());
                }
            }
            ExprKind::BinOp(_, a, b) | ExprKind::Cons(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            ExprKind::List(es) | ExprKind::App(_, es) => {
                for e in es {
                    e.collect_free(bound, out);
                }
            }
            ExprKind::Let(x, e1, e2) => {
                e1.collect_free(bound, out);
                bound.push(x.clone());
                e2.collect_free(bound, out);
                bound.pop();
            }
            ExprKind::If(c, a, b) => {
                c.collect_free(bound, out);
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            ExprKind::Match {
                scrutinee,
                head,
                tail,
                nil_branch,
                cons_branch,
            } => {
                scrutinee.collect_free(bound, out);
                nil_branch.collect_free(bound, out);
                bound.push(head.clone());
                bound.push(tail.clone());
                cons_branch.collect_free(bound, out);
                bound.pop();
                bound.pop();
            }
            ExprKind::LetFun(_, body) | ExprKind::LetExtern(_, body) => {
                body.collect_free(bound, out)
            }
        }
    }

    /// Names of functions called anywhere inside, including nested definitions.
    pub fn called_functions(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let ExprKind::App(f, _) = &e.kind {
                out.insert(f.clone());
            }
        });
        out
    }

    /// Pre-order traversal, descending into nested function bodies.
    pub fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Int(_) | ExprKind::Nil | ExprKind::Var(_) => {}
            ExprKind::BinOp(_, a, b) | ExprKind::Cons(a, b) | ExprKind::Let(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            ExprKind::List(es) | ExprKind::App(_, es) => es.iter().for_each(|e| e.visit(f)),
            ExprKind::If(c, a, b) => {
                c.visit(f);
                a.visit(f);
                b.visit(f);
            }
            ExprKind::Match {
                scrutinee,
                nil_branch,
                cons_branch,
                ..
            } => {
                scrutinee.visit(f);
                nil_branch.visit(f);
                cons_branch.visit(f);
            }
            ExprKind::LetFun(def, body) => {
                def.body.visit(f);
                body.visit(f);
            }
            ExprKind::LetExtern(_, body) => body.visit(f),
        }
    }

    /// Copy with every position reset, for comparisons that ignore layout.
    pub fn strip_positions(&self) -> Expr {
        let s = |e: &Expr| Box::new(e.strip_positions());
        let kind = match &self.kind {
            ExprKind::BinOp(op, a, b) => ExprKind::BinOp(*op, s(a), s(b)),
            ExprKind::Cons(a, b) => ExprKind::Cons(s(a), s(b)),
            ExprKind::List(es) => ExprKind::List(es.iter().map(Expr::strip_positions).collect()),
            ExprKind::App(f, es) => {
                ExprKind::App(f.clone(), es.iter().map(Expr::strip_positions).collect())
            }
            ExprKind::Let(x, a, b) => ExprKind::Let(x.clone(), s(a), s(b)),
            ExprKind::If(c, a, b) => ExprKind::If(s(c), s(a), s(b)),
            ExprKind::Match {
                scrutinee,
                head,
                tail,
                nil_branch,
                cons_branch,
            } => ExprKind::Match {
                scrutinee: s(scrutinee),
                head: head.clone(),
                tail: tail.clone(),
                nil_branch: s(nil_branch),
                cons_branch: s(cons_branch),
            },
            ExprKind::LetFun(def, body) => {
                ExprKind::LetFun(Box::new(def.strip_positions()), s(body))
            }
            ExprKind::LetExtern(ext, body) => {
                let mut ext = ext.clone();
                ext.pos = Pos::default();
                ExprKind::LetExtern(ext, s(body))
            }
            k => k.clone(),
        };
        Expr::new(kind, Pos::default())
    }
}

impl FunDef {
    pub fn strip_positions(&self) -> FunDef {
        FunDef {
            name: self.name.clone(),
            params: self.params.clone(),
            body: self.body.strip_positions(),
            annotation: self.annotation.clone(),
            pos: Pos::default(),
        }
    }
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn extern_decl(&self, name: &str) -> Option<&ExternDecl> {
        self.externs.iter().find(|e| e.name == name)
    }

    pub fn strip_positions(&self) -> Program {
        Program {
            functions: self.functions.iter().map(FunDef::strip_positions).collect(),
            externs: self
                .externs
                .iter()
                .map(|e| ExternDecl {
                    pos: Pos::default(),
                    ..e.clone()
                })
                .collect(),
            main: self.main.as_ref().map(Expr::strip_positions),
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Kw(&'static str),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(n) => write!(f, "integer {n}"),
            Tok::Kw(k) => write!(f, "`{k}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "letfun",
    "letextern",
    "let",
    "in",
    "if",
    "then",
    "else",
    "match",
    "with",
    "nil",
    "cons",
    "div",
    "mod",
    "main",
];

const SYMBOLS: &[&str] = &[
    "->", "(", ")", ",", "=", "|", ":", "*", "+", "-", "/", "^", "[", "]",
];

fn lex(src: &str, allow_reserved: bool) -> Result<Vec<(Tok, Pos)>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let n = text.parse::<i64>().map_err(|_| SyntaxError {
                pos,
                expected: vec!["an integer that fits in 64 bits".into()],
                found: text.clone(),
            })?;
            col += (i - start) as u32;
            toks.push((Tok::Int(n), pos));
            continue;
        }
        if c.is_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'' || chars[i] == '$')
            {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            if text.contains('$') && !allow_reserved {
                return Err(SyntaxError {
                    pos,
                    expected: vec!["an identifier without `$` (reserved for generated names)".into()],
                    found: text,
                });
            }
            match KEYWORDS.iter().find(|k| **k == text) {
                Some(k) => toks.push((Tok::Kw(k), pos)),
                None => toks.push((Tok::Ident(text), pos)),
            }
            continue;
        }
        let sym = SYMBOLS.iter().find(|s| {
            let s: Vec<char> = s.chars().collect();
            chars[i..].starts_with(&s)
        });
        match sym {
            Some(s) => {
                i += s.len();
                col += s.len() as u32;
                toks.push((Tok::Sym(s), pos));
            }
            None => {
                return Err(SyntaxError {
                    pos,
                    expected: vec!["a token".into()],
                    found: format!("`{c}`"),
                })
            }
        }
    }
    toks.push((Tok::Eof, Pos { line, col }));
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn new(src: &str) -> PResult<Self> {
        Ok(Parser {
            toks: lex(src, false)?,
            at: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(SyntaxError {
            pos: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().to_string(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Kw(x) if *x == k)
    }

    fn sym(&mut self, s: &str) -> PResult<()> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.error(&[&format!("`{s}`")])
        }
    }

    fn kw(&mut self, k: &str) -> PResult<()> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            self.error(&[&format!("`{k}`")])
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn starts_annotation(&self) -> bool {
        matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Sym(":"))
    }

    fn program(&mut self) -> PResult<Program> {
        let mut prog = Program::default();
        let mut pending: Option<(String, FirstOrderType, Pos)> = None;
        loop {
            if self.starts_annotation() {
                if let Some((name, _, pos)) = &pending {
                    return Err(SyntaxError {
                        pos: *pos,
                        expected: vec![format!("`letfun {name}` or `letextern {name}` after its annotation")],
                        found: "another annotation".into(),
                    });
                }
                let pos = self.pos();
                let name = self.ident()?;
                self.sym(":")?;
                let ty = self.ftype()?;
                pending = Some((name, ty, pos));
            } else if self.is_kw("letfun") {
                let def = self.letfun(pending.take())?;
                self.kw("in")?;
                prog.functions.push(def);
            } else if self.is_kw("letextern") {
                let ext = self.letextern(pending.take())?;
                self.kw("in")?;
                prog.externs.push(ext);
            } else {
                if let Some((name, _, _)) = &pending {
                    return self.error(&[&format!("`letfun {name}`")]);
                }
                break;
            }
        }
        if self.is_kw("main") {
            self.bump();
            self.sym("=")?;
            prog.main = Some(self.expr()?);
        } else if *self.peek() != Tok::Eof {
            prog.main = Some(self.expr()?);
        }
        if *self.peek() != Tok::Eof {
            return self.error(&["end of input"]);
        }
        Ok(prog)
    }

    fn params(&mut self) -> PResult<Vec<String>> {
        self.sym("(")?;
        let mut ps = vec![self.ident()?];
        while self.is_sym(",") {
            self.bump();
            ps.push(self.ident()?);
        }
        self.sym(")")?;
        Ok(ps)
    }

    fn check_annotation_name(
        &self,
        name: &str,
        ann: &Option<(String, FirstOrderType, Pos)>,
    ) -> PResult<()> {
        match ann {
            Some((n, _, pos)) if n != name => Err(SyntaxError {
                pos: *pos,
                expected: vec![format!("an annotation for `{name}`")],
                found: format!("annotation for `{n}`"),
            }),
            _ => Ok(()),
        }
    }

    fn letfun(&mut self, ann: Option<(String, FirstOrderType, Pos)>) -> PResult<FunDef> {
        let pos = ann.as_ref().map(|a| a.2).unwrap_or_else(|| self.pos());
        self.kw("letfun")?;
        let name = self.ident()?;
        self.check_annotation_name(&name, &ann)?;
        let params = self.params()?;
        self.sym("=")?;
        let body = self.expr()?;
        Ok(FunDef {
            name,
            params,
            body,
            annotation: ann.map(|a| a.1),
            pos,
        })
    }

    fn letextern(&mut self, ann: Option<(String, FirstOrderType, Pos)>) -> PResult<ExternDecl> {
        let pos = self.pos();
        self.kw("letextern")?;
        let name = self.ident()?;
        self.check_annotation_name(&name, &ann)?;
        let params = self.params()?;
        let ftype = match ann {
            Some((_, t, _)) => t,
            None => {
                return Err(SyntaxError {
                    pos,
                    expected: vec![format!("a type annotation line `{name} : ...` before the extern")],
                    found: "`letextern`".into(),
                })
            }
        };
        Ok(ExternDecl {
            name,
            params,
            ftype,
            pos,
        })
    }

    fn expr(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        if self.starts_annotation() {
            let apos = self.pos();
            let name = self.ident()?;
            self.sym(":")?;
            let ty = self.ftype()?;
            let ann = Some((name, ty, apos));
            return if self.is_kw("letfun") {
                let def = self.letfun(ann)?;
                self.kw("in")?;
                let body = self.expr()?;
                Ok(Expr::new(ExprKind::LetFun(Box::new(def), Box::new(body)), pos))
            } else if self.is_kw("letextern") {
                let ext = self.letextern(ann)?;
                self.kw("in")?;
                let body = self.expr()?;
                Ok(Expr::new(ExprKind::LetExtern(ext, Box::new(body)), pos))
            } else {
                self.error(&["`letfun`", "`letextern`"])
            };
        }
        match self.peek() {
            Tok::Kw("let") => {
                self.bump();
                let x = self.ident()?;
                self.sym("=")?;
                let bound = self.expr()?;
                self.kw("in")?;
                let body = self.expr()?;
                Ok(Expr::new(ExprKind::Let(x, Box::new(bound), Box::new(body)), pos))
            }
            Tok::Kw("if") => {
                self.bump();
                let c = self.expr()?;
                self.kw("then")?;
                let a = self.expr()?;
                self.kw("else")?;
                let b = self.expr()?;
                Ok(Expr::new(ExprKind::If(Box::new(c), Box::new(a), Box::new(b)), pos))
            }
            Tok::Kw("match") => {
                self.bump();
                let scrutinee = self.expr()?;
                self.kw("with")?;
                self.sym("|")?;
                self.kw("nil")?;
                self.sym("->")?;
                let nil_branch = self.expr()?;
                self.sym("|")?;
                self.kw("cons")?;
                self.sym("(")?;
                let head = self.ident()?;
                self.sym(",")?;
                let tail = self.ident()?;
                self.sym(")")?;
                self.sym("->")?;
                let cons_branch = self.expr()?;
                Ok(Expr::new(
                    ExprKind::Match {
                        scrutinee: Box::new(scrutinee),
                        head,
                        tail,
                        nil_branch: Box::new(nil_branch),
                        cons_branch: Box::new(cons_branch),
                    },
                    pos,
                ))
            }
            Tok::Kw("letfun") => {
                let def = self.letfun(None)?;
                self.kw("in")?;
                let body = self.expr()?;
                Ok(Expr::new(ExprKind::LetFun(Box::new(def), Box::new(body)), pos))
            }
            Tok::Kw("letextern") => self.letextern(None).map(|_| unreachable!()),
            _ => self.arith(),
        }
    }

    fn arith(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.is_sym("+") {
                BinOp::Add
            } else if self.is_sym("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let pos = self.pos();
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::new(ExprKind::BinOp(op, Box::new(lhs), Box::new(rhs)), pos);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.atom()?;
        loop {
            let op = if self.is_kw("div") {
                BinOp::Div
            } else if self.is_kw("mod") {
                BinOp::Mod
            } else {
                return Ok(lhs);
            };
            let pos = self.pos();
            self.bump();
            let rhs = self.atom()?;
            lhs = Expr::new(ExprKind::BinOp(op, Box::new(lhs), Box::new(rhs)), pos);
        }
    }

    fn atom(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::new(ExprKind::Int(n), pos))
            }
            Tok::Sym("-") if matches!(self.peek_at(1), Tok::Int(_)) => {
                self.bump();
                match self.bump() {
                    Tok::Int(n) => Ok(Expr::new(ExprKind::Int(-n), pos)),
                    _ => unreachable!(),
                }
            }
            Tok::Kw("nil") => {
                self.bump();
                Ok(Expr::new(ExprKind::Nil, pos))
            }
            Tok::Kw("cons") => {
                self.bump();
                self.sym("(")?;
                let hd = self.expr()?;
                self.sym(",")?;
                let tl = self.expr()?;
                self.sym(")")?;
                Ok(Expr::new(ExprKind::Cons(Box::new(hd), Box::new(tl)), pos))
            }
            Tok::Sym("[") => {
                self.bump();
                let mut items = Vec::new();
                if !self.is_sym("]") {
                    items.push(self.expr()?);
                    while self.is_sym(",") {
                        self.bump();
                        items.push(self.expr()?);
                    }
                }
                self.sym("]")?;
                Ok(Expr::new(ExprKind::List(items), pos))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.is_sym("(") {
                    self.bump();
                    let mut args = Vec::new();
                    if !self.is_sym(")") {
                        args.push(self.expr()?);
                        while self.is_sym(",") {
                            self.bump();
                            args.push(self.expr()?);
                        }
                    }
                    self.sym(")")?;
                    Ok(Expr::new(ExprKind::App(name, args), pos))
                } else {
                    Ok(Expr::new(ExprKind::Var(name), pos))
                }
            }
            _ => self.error(&[
                "integer", "identifier", "`nil`", "`cons`", "`[`", "`(`", "`let`", "`if`", "`match`",
            ]),
        }
    }

    // --- types and size polynomials ---

    fn ftype(&mut self) -> PResult<FirstOrderType> {
        let mut params = vec![self.stype()?];
        while self.is_sym("*") {
            self.bump();
            params.push(self.stype()?);
        }
        self.sym("->")?;
        let result = self.stype()?;
        Ok(FirstOrderType { params, result })
    }

    fn stype(&mut self) -> PResult<SizedType> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "Int" => {
                self.bump();
                Ok(SizedType::Int)
            }
            Tok::Ident(s) if s == "L" && matches!(self.peek_at(1), Tok::Sym("(")) => {
                self.bump();
                self.sym("(")?;
                let elem = self.stype()?;
                self.sym(",")?;
                let size = self.poly()?;
                self.sym(")")?;
                Ok(SizedType::List(Box::new(elem), size))
            }
            Tok::Ident(s) if s.starts_with(|c: char| c.is_lowercase()) => {
                self.bump();
                Ok(SizedType::Var(s))
            }
            _ => self.error(&["`Int`", "a type variable", "`L(`"]),
        }
    }

    fn poly(&mut self) -> PResult<Polynomial> {
        let mut acc = self.poly_term()?;
        loop {
            if self.is_sym("+") {
                self.bump();
                acc = &acc + &self.poly_term()?;
            } else if self.is_sym("-") {
                self.bump();
                acc = &acc - &self.poly_term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn poly_term(&mut self) -> PResult<Polynomial> {
        let mut acc = self.poly_factor()?;
        while self.is_sym("*") {
            self.bump();
            acc = &acc * &self.poly_factor()?;
        }
        Ok(acc)
    }

    fn poly_factor(&mut self) -> PResult<Polynomial> {
        if self.is_sym("-") {
            self.bump();
            return Ok(-&self.poly_factor()?);
        }
        let base = match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                if self.is_sym("/") {
                    self.bump();
                    match self.peek().clone() {
                        Tok::Int(0) => return self.error(&["a nonzero denominator"]),
                        Tok::Int(d) => {
                            self.bump();
                            Polynomial::constant(Rational::new(n.into(), d.into()))
                        }
                        _ => return self.error(&["integer denominator"]),
                    }
                } else {
                    Polynomial::int(n)
                }
            }
            Tok::Ident(v) => {
                self.bump();
                Polynomial::var(&v)
            }
            Tok::Sym("(") => {
                self.bump();
                let p = self.poly()?;
                self.sym(")")?;
                p
            }
            _ => return self.error(&["integer", "size variable", "`(`"]),
        };
        if self.is_sym("^") {
            self.bump();
            match self.peek().clone() {
                Tok::Int(e) if (0..=64).contains(&e) => {
                    self.bump();
                    Ok(base.pow(e as u32))
                }
                _ => self.error(&["a small natural exponent"]),
            }
        } else {
            Ok(base)
        }
    }
}

/// Parses a source file in the surface syntax.
pub fn parse_program(text: &str) -> Result<Program, SyntaxError> {
    Parser::new(text)?.program()
}

/// Like [`parse_program`] but accepts `$` in identifiers; used for
/// generated code.
pub fn parse_program_internal(text: &str) -> Result<Program, SyntaxError> {
    Parser {
        toks: lex(text, true)?,
        at: 0,
    }
    .program()
}

/// Parses a single expression.
pub fn parse_expr(text: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.error(&["end of input"]);
    }
    Ok(e)
}

/// Parses a size polynomial such as `1/2*n^2 + 1/2*n`.
pub fn parse_polynomial(text: &str) -> Result<Polynomial, SyntaxError> {
    let mut p = Parser::new(text)?;
    let q = p.poly()?;
    if *p.peek() != Tok::Eof {
        return p.error(&["end of input"]);
    }
    Ok(q)
}

/// Parses a first-order type such as `L(a,n) * L(a,m) -> L(L(a,2), n*m)`.
pub fn parse_ftype(text: &str) -> Result<FirstOrderType, SyntaxError> {
    let mut p = Parser::new(text)?;
    let t = p.ftype()?;
    if *p.peek() != Tok::Eof {
        return p.error(&["end of input"]);
    }
    Ok(t)
}

/// Parses a zero-order sized type such as `L(L(Int,2), 6)`.
pub fn parse_sized_type(text: &str) -> Result<SizedType, SyntaxError> {
    let mut p = Parser::new(text)?;
    let t = p.stype()?;
    if *p.peek() != Tok::Eof {
        return p.error(&["end of input"]);
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Pretty printer
// ---------------------------------------------------------------------------

fn is_atomic(e: &Expr) -> bool {
    matches!(
        e.kind,
        ExprKind::Int(_)
            | ExprKind::Var(_)
            | ExprKind::Nil
            | ExprKind::Cons(..)
            | ExprKind::List(_)
            | ExprKind::App(..)
    ) && !matches!(e.kind, ExprKind::Int(n) if n < 0)
}

struct Printer {
    out: String,
}

impl Printer {
    fn indent(&mut self, level: usize) {
        self.out.push('\n');
        for _ in 0..level {
            self.out.push_str("  ");
        }
    }

    /// Prints `e` in an operand position, parenthesising compound forms.
    fn operand(&mut self, e: &Expr, level: usize) {
        if is_atomic(e) {
            self.expr(e, level);
        } else {
            self.out.push('(');
            self.expr(e, level + 1);
            self.out.push(')');
        }
    }

    fn list(&mut self, es: &[Expr], level: usize) {
        for (i, e) in es.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            self.operand(e, level);
        }
    }

    fn expr(&mut self, e: &Expr, level: usize) {
        match &e.kind {
            ExprKind::Int(n) => self.out.push_str(&n.to_string()),
            ExprKind::Var(v) => self.out.push_str(v),
            ExprKind::Nil => self.out.push_str("nil"),
            ExprKind::BinOp(op, a, b) => {
                self.operand(a, level);
                self.out.push_str(&format!(" {} ", op.symbol()));
                self.operand(b, level);
            }
            ExprKind::Cons(a, b) => {
                self.out.push_str("cons(");
                self.operand(a, level);
                self.out.push_str(", ");
                self.operand(b, level);
                self.out.push(')');
            }
            ExprKind::List(es) => {
                self.out.push('[');
                self.list(es, level);
                self.out.push(']');
            }
            ExprKind::App(f, es) => {
                self.out.push_str(f);
                self.out.push('(');
                self.list(es, level);
                self.out.push(')');
            }
            ExprKind::Let(x, bound, body) => {
                self.out.push_str(&format!("let {x} = "));
                self.operand(bound, level + 1);
                self.out.push_str(" in");
                self.indent(level);
                self.expr(body, level);
            }
            ExprKind::If(c, a, b) => {
                self.out.push_str("if ");
                self.operand(c, level + 1);
                self.out.push_str(" then");
                self.indent(level + 1);
                self.expr(a, level + 1);
                self.indent(level);
                self.out.push_str("else");
                self.indent(level + 1);
                self.expr(b, level + 1);
            }
            ExprKind::Match {
                scrutinee,
                head,
                tail,
                nil_branch,
                cons_branch,
            } => {
                self.out.push_str("match ");
                self.operand(scrutinee, level + 1);
                self.out.push_str(" with");
                self.indent(level);
                self.out.push_str("| nil -> ");
                self.expr(nil_branch, level + 1);
                self.indent(level);
                self.out.push_str(&format!("| cons({head}, {tail}) -> "));
                self.expr(cons_branch, level + 1);
            }
            ExprKind::LetFun(def, body) => {
                self.fundef(def, level);
                self.out.push_str(" in");
                self.indent(level);
                self.expr(body, level);
            }
            ExprKind::LetExtern(ext, body) => {
                self.extern_decl(ext, level);
                self.out.push_str(" in");
                self.indent(level);
                self.expr(body, level);
            }
        }
    }

    fn fundef(&mut self, def: &FunDef, level: usize) {
        if let Some(t) = &def.annotation {
            self.out.push_str(&format!("{} : {t}", def.name));
            self.indent(level);
        }
        self.out
            .push_str(&format!("letfun {}({}) =", def.name, def.params.join(", ")));
        self.indent(level + 1);
        self.expr(&def.body, level + 1);
        self.indent(level);
    }

    fn extern_decl(&mut self, ext: &ExternDecl, level: usize) {
        self.out.push_str(&format!("{} : {}", ext.name, ext.ftype));
        self.indent(level);
        self.out
            .push_str(&format!("letextern {}({})", ext.name, ext.params.join(", ")));
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut p = Printer { out: String::new() };
    p.expr(e, 0);
    p.out
}

/// Prints a program in the surface syntax; the output parses back to the same AST.
pub fn print_program(prog: &Program) -> String {
    let mut p = Printer { out: String::new() };
    for ext in &prog.externs {
        p.extern_decl(ext, 0);
        p.out.push_str(" in\n\n");
    }
    for def in &prog.functions {
        p.fundef(def, 0);
        p.out.push_str("in\n\n");
    }
    if let Some(main) = &prog.main {
        p.out.push_str("main = ");
        p.expr(main, 1);
        p.out.push('\n');
    }
    p.out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_expr(self))
    }
}

// ---------------------------------------------------------------------------
// Desugaring
// ---------------------------------------------------------------------------

/// Reserved-prefix name supply, scoped per function.
struct Fresh {
    next: u32,
}

impl Fresh {
    fn name(&mut self) -> String {
        self.next += 1;
        format!("${}", self.next)
    }
}

/// The remainder of a computation waiting for a basic expression or variable.
type Cont<'a> = &'a dyn Fn(Expr, &mut Fresh) -> Expr;

fn rename(e: &Expr, from: &str, to: &str) -> Expr {
    let mut map = BTreeMap::new();
    map.insert(from.to_string(), to.to_string());
    rename_vars(e, &map)
}

/// Capture-free renaming of free variables (binders are never renamed here,
/// and a binder equal to a key stops the substitution below it).
fn rename_vars(e: &Expr, map: &BTreeMap<String, String>) -> Expr {
    if map.is_empty() {
        return e.clone();
    }
    let r = |x: &Expr| Box::new(rename_vars(x, map));
    let without = |names: &[&String]| {
        let mut m = map.clone();
        for n in names {
            m.remove(*n);
        }
        m
    };
    let kind = match &e.kind {
        ExprKind::Var(v) => ExprKind::Var(map.get(v).cloned().unwrap_or_else(|| v.clone())),
        ExprKind::BinOp(op, a, b) => ExprKind::BinOp(*op, r(a), r(b)),
        ExprKind::Cons(a, b) => ExprKind::Cons(r(a), r(b)),
        ExprKind::List(es) => ExprKind::List(es.iter().map(|x| rename_vars(x, map)).collect()),
        ExprKind::App(f, es) => {
            ExprKind::App(f.clone(), es.iter().map(|x| rename_vars(x, map)).collect())
        }
        ExprKind::Let(x, a, b) => {
            ExprKind::Let(x.clone(), r(a), Box::new(rename_vars(b, &without(&[x]))))
        }
        ExprKind::If(c, a, b) => ExprKind::If(r(c), r(a), r(b)),
        ExprKind::Match {
            scrutinee,
            head,
            tail,
            nil_branch,
            cons_branch,
        } => ExprKind::Match {
            scrutinee: r(scrutinee),
            head: head.clone(),
            tail: tail.clone(),
            nil_branch: r(nil_branch),
            cons_branch: Box::new(rename_vars(cons_branch, &without(&[head, tail]))),
        },
        ExprKind::LetFun(def, body) => ExprKind::LetFun(def.clone(), r(body)),
        ExprKind::LetExtern(ext, body) => ExprKind::LetExtern(ext.clone(), r(body)),
        k => k.clone(),
    };
    Expr::new(kind, e.pos)
}

/// Normalises `e` and hands a variable naming its value to `k`.
fn norm_name(e: &Expr, fresh: &mut Fresh, k: Cont) -> Expr {
    let pos = e.pos;
    norm(e, fresh, Some(&|b: Expr, fresh: &mut Fresh| {
        if b.as_var().is_some() {
            k(b, fresh)
        } else {
            let z = fresh.name();
            let body = k(Expr::var(&z, pos), fresh);
            Expr::new(ExprKind::Let(z, Box::new(b), Box::new(body)), pos)
        }
    }))
}

fn norm_names(es: &[Expr], fresh: &mut Fresh, acc: Vec<Expr>, k: Cont) -> Expr {
    match es.split_first() {
        None => k(Expr::new(ExprKind::List(acc), Pos::default()), fresh),
        Some((first, rest)) => norm_name(first, fresh, &|v, fresh| {
            let mut acc = acc.clone();
            acc.push(v);
            norm_names(rest, fresh, acc, k)
        }),
    }
}

fn list_to_cons(items: &[Expr], pos: Pos) -> Expr {
    items.iter().rev().fold(Expr::new(ExprKind::Nil, pos), |tl, hd| {
        Expr::new(ExprKind::Cons(Box::new(hd.clone()), Box::new(tl)), hd.pos)
    })
}

/// Core normalisation in continuation-passing style. `k = None` means tail
/// position; otherwise the continuation receives a basic expression or a
/// variable. Binders introduced in non-tail positions are renamed because
/// their scope widens over the continuation.
fn norm(e: &Expr, fresh: &mut Fresh, k: Option<Cont>) -> Expr {
    let done = |b: Expr, fresh: &mut Fresh| match k {
        Some(k) => k(b, fresh),
        None => b,
    };
    let pos = e.pos;
    match &e.kind {
        ExprKind::Int(_) | ExprKind::Nil | ExprKind::Var(_) => done(e.clone(), fresh),
        ExprKind::BinOp(op, a, b) => norm_name(a, fresh, &|x, fresh| {
            norm_name(b, fresh, &|y, fresh| {
                done(
                    Expr::new(ExprKind::BinOp(*op, Box::new(x.clone()), Box::new(y)), pos),
                    fresh,
                )
            })
        }),
        ExprKind::Cons(a, b) => norm_name(a, fresh, &|x, fresh| {
            norm_name(b, fresh, &|y, fresh| {
                done(
                    Expr::new(ExprKind::Cons(Box::new(x.clone()), Box::new(y)), pos),
                    fresh,
                )
            })
        }),
        ExprKind::List(items) => norm(&list_to_cons(items, pos), fresh, k),
        ExprKind::App(f, args) => norm_names(args, fresh, Vec::new(), &|vs, fresh| {
            let vs = match vs.kind {
                ExprKind::List(vs) => vs,
                _ => unreachable!(),
            };
            done(Expr::new(ExprKind::App(f.clone(), vs), pos), fresh)
        }),
        ExprKind::Let(x, bound, body) => {
            let (x, body) = match k {
                None => (x.clone(), (**body).clone()),
                Some(_) => {
                    let x2 = fresh.name();
                    let b2 = rename(body, x, &x2);
                    (x2, b2)
                }
            };
            norm(bound, fresh, Some(&|b, fresh| {
                let rest = norm(&body, fresh, k);
                Expr::new(ExprKind::Let(x.clone(), Box::new(b), Box::new(rest)), pos)
            }))
        }
        ExprKind::If(c, a, b) => norm_name(c, fresh, &|x, fresh| {
            let a = norm(a, fresh, k);
            let b = norm(b, fresh, k);
            Expr::new(ExprKind::If(Box::new(x), Box::new(a), Box::new(b)), pos)
        }),
        ExprKind::Match {
            scrutinee,
            head,
            tail,
            nil_branch,
            cons_branch,
        } => norm_name(scrutinee, fresh, &|x, fresh| {
            let nil_b = norm(nil_branch, fresh, k);
            let (h, t, cons_b) = match k {
                None => (head.clone(), tail.clone(), (**cons_branch).clone()),
                Some(_) => {
                    let h2 = fresh.name();
                    let t2 = fresh.name();
                    let mut map = BTreeMap::new();
                    map.insert(head.clone(), h2.clone());
                    map.insert(tail.clone(), t2.clone());
                    (h2, t2, rename_vars(cons_branch, &map))
                }
            };
            let cons_b = norm(&cons_b, fresh, k);
            Expr::new(
                ExprKind::Match {
                    scrutinee: Box::new(x),
                    head: h,
                    tail: t,
                    nil_branch: Box::new(nil_b),
                    cons_branch: Box::new(cons_b),
                },
                pos,
            )
        }),
        ExprKind::LetFun(def, body) => {
            let def = desugar_fundef(def);
            let body = norm(body, fresh, k);
            Expr::new(ExprKind::LetFun(Box::new(def), Box::new(body)), pos)
        }
        ExprKind::LetExtern(ext, body) => {
            let body = norm(body, fresh, k);
            Expr::new(ExprKind::LetExtern(ext.clone(), Box::new(body)), pos)
        }
    }
}

fn desugar_fundef(def: &FunDef) -> FunDef {
    let mut fresh = Fresh { next: 0 };
    FunDef {
        body: norm(&def.body, &mut fresh, None),
        ..def.clone()
    }
}

/// Desugars a single expression into core form (fresh names start at `$1`).
pub fn desugar_expr(e: &Expr) -> Expr {
    norm(e, &mut Fresh { next: 0 }, None)
}

/// Hoists every compound argument into a fresh `let`, expands list literals
/// and floats non-basic `let`-bound expressions outwards. Deterministic,
/// left to right, idempotent.
pub fn desugar(p: &Program) -> Program {
    Program {
        functions: p.functions.iter().map(desugar_fundef).collect(),
        externs: p.externs.clone(),
        main: p.main.as_ref().map(desugar_expr),
    }
}

// ---------------------------------------------------------------------------
// Scoping and the no-let-before-match restriction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScopeError {
    #[error("{pos}: duplicate definition of function `{name}`")]
    DuplicateFunction { name: String, pos: Pos },
    #[error("{pos}: duplicate parameter `{name}` in `{function}`")]
    DuplicateParam { function: String, name: String, pos: Pos },
    #[error("{pos}: unbound variable `{name}` in `{function}`")]
    UnboundVariable { function: String, name: String, pos: Pos },
    #[error("{pos}: call to unknown function `{name}` in `{function}`")]
    UnknownFunction { function: String, name: String, pos: Pos },
    #[error("{pos}: `{name}` expects {expected} arguments, got {got}")]
    ArityMismatch { name: String, expected: usize, got: usize, pos: Pos },
    #[error("{pos}: binder `{name}` in `{function}` shadows a variable in scope")]
    Shadowing { function: String, name: String, pos: Pos },
    #[error("{pos}: `{name}` annotation has {annotated} parameter types but {declared} parameters")]
    AnnotationArity { name: String, annotated: usize, declared: usize, pos: Pos },
}

struct ScopeChecker {
    errors: Vec<ScopeError>,
    funs: BTreeMap<String, usize>,
}

impl ScopeChecker {
    fn expr(&mut self, func: &str, e: &Expr, scope: &mut Vec<String>) {
        let bind = |this: &mut Self, name: &str, pos: Pos, scope: &Vec<String>| {
            if scope.iter().any(|s| s == name) {
                this.errors.push(ScopeError::Shadowing {
                    function: func.into(),
                    name: name.into(),
                    pos,
                });
            }
        };
        match &e.kind {
            ExprKind::Int(_) | ExprKind::Nil => {}
            ExprKind::Var(v) => {
                if !scope.contains(v) {
                    self.errors.push(ScopeError::UnboundVariable {
                        function: func.into(),
                        name: v.clone(),
                        pos: e.pos,
                    });
                }
            }
            ExprKind::BinOp(_, a, b) | ExprKind::Cons(a, b) => {
                self.expr(func, a, scope);
                self.expr(func, b, scope);
            }
            ExprKind::List(es) => es.iter().for_each(|x| self.expr(func, x, scope)),
            ExprKind::App(f, es) => {
                match self.funs.get(f) {
                    None => self.errors.push(ScopeError::UnknownFunction {
                        function: func.into(),
                        name: f.clone(),
                        pos: e.pos,
                    }),
                    Some(&n) if n != es.len() => self.errors.push(ScopeError::ArityMismatch {
                        name: f.clone(),
                        expected: n,
                        got: es.len(),
                        pos: e.pos,
                    }),
                    _ => {}
                }
                es.iter().for_each(|x| self.expr(func, x, scope));
            }
            ExprKind::Let(x, a, b) => {
                self.expr(func, a, scope);
                bind(self, x, e.pos, scope);
                scope.push(x.clone());
                self.expr(func, b, scope);
                scope.pop();
            }
            ExprKind::If(c, a, b) => {
                self.expr(func, c, scope);
                self.expr(func, a, scope);
                self.expr(func, b, scope);
            }
            ExprKind::Match {
                scrutinee,
                head,
                tail,
                nil_branch,
                cons_branch,
            } => {
                self.expr(func, scrutinee, scope);
                self.expr(func, nil_branch, scope);
                bind(self, head, e.pos, scope);
                bind(self, tail, e.pos, scope);
                scope.push(head.clone());
                scope.push(tail.clone());
                self.expr(func, cons_branch, scope);
                scope.pop();
                scope.pop();
            }
            ExprKind::LetFun(def, body) => {
                let saved = self.funs.clone();
                self.funs.insert(def.name.clone(), def.params.len());
                self.fundef(def);
                self.expr(func, body, scope);
                self.funs = saved;
            }
            ExprKind::LetExtern(ext, body) => {
                let saved = self.funs.clone();
                self.funs.insert(ext.name.clone(), ext.params.len());
                self.expr(func, body, scope);
                self.funs = saved;
            }
        }
    }

    fn fundef(&mut self, def: &FunDef) {
        let mut seen = BTreeSet::new();
        for p in &def.params {
            if !seen.insert(p) {
                self.errors.push(ScopeError::DuplicateParam {
                    function: def.name.clone(),
                    name: p.clone(),
                    pos: def.pos,
                });
            }
        }
        if let Some(t) = &def.annotation {
            if t.params.len() != def.params.len() {
                self.errors.push(ScopeError::AnnotationArity {
                    name: def.name.clone(),
                    annotated: t.params.len(),
                    declared: def.params.len(),
                    pos: def.pos,
                });
            }
        }
        let mut scope = def.params.clone();
        self.expr(&def.name, &def.body, &mut scope);
    }
}

/// Well-formedness: unique names, bound variables, known callees with the
/// right arity, and no shadowing binders. Top-level functions see earlier
/// functions, themselves and every extern.
pub fn check_scopes(p: &Program) -> Vec<ScopeError> {
    let mut sc = ScopeChecker {
        errors: Vec::new(),
        funs: BTreeMap::new(),
    };
    for ext in &p.externs {
        if sc.funs.insert(ext.name.clone(), ext.params.len()).is_some() {
            sc.errors.push(ScopeError::DuplicateFunction {
                name: ext.name.clone(),
                pos: ext.pos,
            });
        }
        if ext.ftype.params.len() != ext.params.len() {
            sc.errors.push(ScopeError::AnnotationArity {
                name: ext.name.clone(),
                annotated: ext.ftype.params.len(),
                declared: ext.params.len(),
                pos: ext.pos,
            });
        }
    }
    for def in &p.functions {
        if sc.funs.insert(def.name.clone(), def.params.len()).is_some() {
            sc.errors.push(ScopeError::DuplicateFunction {
                name: def.name.clone(),
                pos: def.pos,
            });
        }
        sc.fundef(def);
    }
    if let Some(main) = &p.main {
        sc.expr("main", main, &mut Vec::new());
    }
    sc.errors
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: in `{function}`, match on `{scrutinee}`, which is neither a parameter nor bound by an enclosing match")]
pub struct RestrictionViolation {
    pub function: String,
    pub scrutinee: String,
    pub pos: Pos,
}

fn restriction_walk(
    func: &str,
    e: &Expr,
    matchable: &mut Vec<String>,
    out: &mut Vec<RestrictionViolation>,
) {
    match &e.kind {
        ExprKind::Match {
            scrutinee,
            head,
            tail,
            nil_branch,
            cons_branch,
        } => {
            match scrutinee.as_var() {
                Some(v) if matchable.iter().any(|m| m == v) => {}
                _ => out.push(RestrictionViolation {
                    function: func.into(),
                    scrutinee: scrutinee
                        .as_var()
                        .map(str::to_string)
                        .unwrap_or_else(|| print_expr(scrutinee)),
                    pos: e.pos,
                }),
            }
            restriction_walk(func, scrutinee, matchable, out);
            restriction_walk(func, nil_branch, matchable, out);
            // a shadowing binder would hide an outer name; track by push/pop
            matchable.push(head.clone());
            matchable.push(tail.clone());
            restriction_walk(func, cons_branch, matchable, out);
            matchable.pop();
            matchable.pop();
        }
        ExprKind::Let(x, bound, body) => {
            restriction_walk(func, bound, matchable, out);
            let hidden: Vec<usize> = matchable
                .iter()
                .enumerate()
                .filter(|(_, m)| *m == x)
                .map(|(i, _)| i)
                .collect();
            let saved = matchable.clone();
            for i in hidden.into_iter().rev() {
                matchable.remove(i);
            }
            restriction_walk(func, body, matchable, out);
            *matchable = saved;
        }
        ExprKind::LetFun(def, body) => {
            validate_fundef(def, out);
            restriction_walk(func, body, matchable, out);
        }
        ExprKind::Int(_) | ExprKind::Nil | ExprKind::Var(_) => {}
        ExprKind::BinOp(_, a, b) | ExprKind::Cons(a, b) => {
            restriction_walk(func, a, matchable, out);
            restriction_walk(func, b, matchable, out);
        }
        ExprKind::List(es) | ExprKind::App(_, es) => {
            es.iter().for_each(|x| restriction_walk(func, x, matchable, out))
        }
        ExprKind::If(c, a, b) => {
            restriction_walk(func, c, matchable, out);
            restriction_walk(func, a, matchable, out);
            restriction_walk(func, b, matchable, out);
        }
        ExprKind::LetExtern(_, body) => restriction_walk(func, body, matchable, out),
    }
}

fn validate_fundef(def: &FunDef, out: &mut Vec<RestrictionViolation>) {
    let mut matchable = def.params.clone();
    restriction_walk(&def.name, &def.body, &mut matchable, out);
}

/// Checks the no-let-before-match condition on every function: each match
/// scrutinee must be a formal parameter or a variable bound by an enclosing
/// match. An empty result means the program is accepted.
pub fn validate_restriction(p: &Program) -> Vec<RestrictionViolation> {
    let mut out = Vec::new();
    for def in &p.functions {
        validate_fundef(def, &mut out);
    }
    out
}

/// Membership in the refined "no-let-before-match" grammar, in which the
/// body of a `let` contains no `match` outside nested function definitions.
pub fn in_refined_grammar(e: &Expr) -> bool {
    fn no_match(e: &Expr) -> bool {
        match &e.kind {
            ExprKind::Match { .. } => false,
            ExprKind::Let(_, b, body) => b.is_basic() && no_match(body),
            ExprKind::If(_, a, b) => no_match(a) && no_match(b),
            ExprKind::LetFun(def, body) => in_refined_grammar(&def.body) && no_match(body),
            ExprKind::LetExtern(_, body) => no_match(body),
            _ => e.is_basic() || e.as_var().is_some(),
        }
    }
    match &e.kind {
        ExprKind::Let(_, b, body) => b.is_basic() && no_match(body),
        ExprKind::If(_, a, b) => in_refined_grammar(a) && in_refined_grammar(b),
        ExprKind::Match {
            scrutinee,
            nil_branch,
            cons_branch,
            ..
        } => {
            scrutinee.as_var().is_some()
                && in_refined_grammar(nil_branch)
                && in_refined_grammar(cons_branch)
        }
        ExprKind::LetFun(def, body) => in_refined_grammar(&def.body) && in_refined_grammar(body),
        ExprKind::LetExtern(_, body) => in_refined_grammar(body),
        _ => e.is_basic() || e.as_var().is_some(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CPROD: &str = "
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
          | cons(hd, tl) -> let l' = cons(x, cons(hd, nil)) in cons(l', pairs(x, tl))
        in
        cprod : L(a,n) * L(a,m) -> L(L(a,2), n*m)
        letfun cprod(l1, l2) =
          match l1 with
          | nil -> nil
          | cons(hd, tl) -> append(pairs(hd, l2), cprod(tl, l2))
        in
    ";

    #[test]
    fn identity_function() {
        let p = parse_program("letfun id(l) = l in id").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.functions[0].body.kind, ExprKind::Var("l".into()));
    }

    #[test]
    fn nested_calls_survive_parsing() {
        let p = parse_program(CPROD).unwrap();
        let cprod = p.function("cprod").unwrap();
        let ExprKind::Match { cons_branch, .. } = &cprod.body.kind else {
            panic!("expected match")
        };
        let ExprKind::App(f, args) = &cons_branch.kind else {
            panic!("expected call")
        };
        assert_eq!(f, "append");
        assert!(matches!(&args[0].kind, ExprKind::App(g, _) if g == "pairs"));
        assert!(matches!(&args[1].kind, ExprKind::App(g, _) if g == "cprod"));
        assert_eq!(
            cprod.annotation.as_ref().unwrap().to_string(),
            "L(a, n) * L(a, m) -> L(L(a, 2), m*n)"
        );
    }

    #[test]
    fn truncated_match_is_an_error() {
        let err = parse_program("letfun f(l) = match l with").unwrap_err();
        assert!(err.expected.iter().any(|e| e.contains('|')), "{err}");
    }

    #[test]
    fn hoists_nested_calls_left_to_right() {
        let e = parse_expr("append(pairs(hd, l2), cprod(tl, l2))").unwrap();
        let d = desugar_expr(&e).strip_positions();
        let expected = parse_expr_internal(
            "let $1 = pairs(hd, l2) in let $2 = cprod(tl, l2) in append($1, $2)",
        );
        assert_eq!(d, expected);
    }

    #[test]
    fn hoists_literals_and_nil() {
        let d = desugar_expr(&parse_expr("cons(1, nil)").unwrap()).strip_positions();
        assert_eq!(
            d,
            parse_expr_internal("let $1 = 1 in let $2 = nil in cons($1, $2)")
        );
    }

    #[test]
    fn core_form_is_a_fixpoint() {
        let src = "match l with | nil -> nil | cons(h, t) -> let r = f(t) in cons(h, r)";
        let e = parse_expr(src).unwrap();
        assert!(e.is_core());
        assert_eq!(desugar_expr(&e), e);
    }

    #[test]
    fn let_in_argument_position_is_renamed() {
        let e = parse_expr("f(let x = g(y) in x, x)").unwrap();
        let d = desugar_expr(&e).strip_positions();
        assert_eq!(d, parse_expr_internal("let $1 = g(y) in f($1, x)"));
    }

    #[test]
    fn if_in_let_binding_is_floated() {
        let e = parse_expr("let z = if c then a else b in cons(z, nil)").unwrap();
        let d = desugar_expr(&e);
        assert!(d.is_core());
        assert!(matches!(d.kind, ExprKind::If(..)));
    }

    #[test]
    fn restriction_rejects_match_on_let_bound() {
        let p = parse_program(
            "letfun f0(l1) = l1 in
             letfun f(l1) = let l = f0(l1) in match l with | nil -> l1 | cons(h, t) -> l1 in",
        )
        .unwrap();
        let v = validate_restriction(&desugar(&p));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].scrutinee, "l");
        assert_eq!(v[0].function, "f");
    }

    #[test]
    fn restriction_accepts_match_on_tail() {
        let p = parse_program(
            "letfun f(l) = match l with | nil -> nil
               | cons(h, t) -> match t with | nil -> nil | cons(h2, t2) -> t2 in",
        )
        .unwrap();
        assert!(validate_restriction(&p).is_empty());
        let p = parse_program("letfun f(x, y) = x + y in").unwrap();
        assert!(validate_restriction(&p).is_empty());
    }

    #[test]
    fn print_parse_round_trip() {
        let p = parse_program(CPROD).unwrap();
        let printed = print_program(&p);
        let again = parse_program(&printed).unwrap();
        assert_eq!(again.strip_positions(), p.strip_positions());
    }

    #[test]
    fn scope_errors() {
        let p = parse_program("letfun f(l) = g(l, k) in").unwrap();
        let errs = check_scopes(&p);
        assert!(errs.iter().any(|e| matches!(e, ScopeError::UnknownFunction { name, .. } if name == "g")));
        assert!(errs.iter().any(|e| matches!(e, ScopeError::UnboundVariable { name, .. } if name == "k")));
        let p = parse_program("letfun f(l) = match l with | nil -> nil | cons(l, t) -> t in").unwrap();
        assert!(matches!(check_scopes(&p)[..], [ScopeError::Shadowing { .. }]));
    }

    #[test]
    fn dollar_names_are_reserved() {
        assert!(parse_expr("$1").is_err());
    }

    #[test]
    fn polynomial_syntax() {
        let p = parse_polynomial("1/2*n^2 + 1/2*n").unwrap();
        assert_eq!(p.to_string(), "1/2*n^2 + 1/2*n");
        assert_eq!(parse_polynomial("-(n - m)").unwrap().to_string(), "m - n");
        assert!(parse_polynomial("n / 2").is_err());
    }

    /// Test helper that accepts reserved names by parsing a `$`-free variant
    /// and renaming `_dN` back to `$N`.
    fn parse_expr_internal(src: &str) -> Expr {
        let e = parse_expr(&src.replace('$', "_d")).unwrap();
        fn fix(s: &str) -> String {
            s.strip_prefix("_d")
                .map(|n| format!("${n}"))
                .unwrap_or_else(|| s.to_string())
        }
        fn go(e: &Expr) -> Expr {
            let kind = match &e.kind {
                ExprKind::Var(v) => ExprKind::Var(fix(v)),
                ExprKind::Let(x, a, b) => ExprKind::Let(fix(x), Box::new(go(a)), Box::new(go(b))),
                ExprKind::Cons(a, b) => ExprKind::Cons(Box::new(go(a)), Box::new(go(b))),
                ExprKind::BinOp(op, a, b) => ExprKind::BinOp(*op, Box::new(go(a)), Box::new(go(b))),
                ExprKind::App(f, es) => ExprKind::App(f.clone(), es.iter().map(go).collect()),
                ExprKind::If(c, a, b) => {
                    ExprKind::If(Box::new(go(c)), Box::new(go(a)), Box::new(go(b)))
                }
                k => k.clone(),
            };
            Expr::new(kind, Pos::default())
        }
        go(&e)
    }
}
