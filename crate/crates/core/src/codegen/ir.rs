//! Loop IR: a small imperative language with abstract level-function calls.

use std::fmt::{self, Write as _};

use crate::levels::{LevelFunction, LevelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Idx,
    Val,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Eq,
    Ne,
    And,
    Or,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Real(f64),
    Bool(bool),
    Var(String),
    /// `array[index]`
    Load(String, Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Min(Vec<Expr>),
}

pub fn var(s: impl Into<String>) -> Expr {
    Expr::Var(s.into())
}

pub fn int(i: i64) -> Expr {
    Expr::Int(i)
}

pub fn load(a: impl Into<String>, i: Expr) -> Expr {
    Expr::Load(a.into(), Box::new(i))
}

/// Build a binary expression, folding constants and identities.
pub fn bin(op: Op, a: Expr, b: Expr) -> Expr {
    use Expr::*;
    match (op, &a, &b) {
        (Op::Add, Int(x), Int(y)) => Int(x + y),
        (Op::Sub, Int(x), Int(y)) => Int(x - y),
        (Op::Mul, Int(x), Int(y)) => Int(x * y),
        (Op::Add, Int(0), _) => b,
        (Op::Add | Op::Sub, _, Int(0)) => a,
        (Op::Mul, Int(0), _) | (Op::Mul, _, Int(0)) => Int(0),
        (Op::Mul, Int(1), _) => b,
        (Op::Mul, _, Int(1)) => a,
        (Op::And, Bool(true), _) => b,
        (Op::And, _, Bool(true)) => a,
        (Op::And, Bool(false), _) | (Op::And, _, Bool(false)) => Bool(false),
        (Op::Or, Bool(false), _) => b,
        (Op::Or, _, Bool(false)) => a,
        (Op::Or, Bool(true), _) | (Op::Or, _, Bool(true)) => Bool(true),
        _ => Bin(op, Box::new(a), Box::new(b)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    bin(Op::Add, a, b)
}
pub fn mul(a: Expr, b: Expr) -> Expr {
    bin(Op::Mul, a, b)
}
pub fn lt(a: Expr, b: Expr) -> Expr {
    bin(Op::Lt, a, b)
}
pub fn eq(a: Expr, b: Expr) -> Expr {
    bin(Op::Eq, a, b)
}
pub fn and(a: Expr, b: Expr) -> Expr {
    bin(Op::And, a, b)
}

pub fn not(e: Expr) -> Expr {
    match e {
        Expr::Bool(b) => Expr::Bool(!b),
        e => Expr::Not(Box::new(e)),
    }
}

pub fn all(es: impl IntoIterator<Item = Expr>) -> Expr {
    es.into_iter().fold(Expr::Bool(true), and)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelCall {
    pub tensor: String,
    /// 1-based level number, as in array names (`B2_crd`).
    pub level: usize,
    pub kind: LevelKind,
    pub func: LevelFunction,
    pub args: Vec<Expr>,
    /// Variables declared to receive the results.
    pub outs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Decl(Ty, String, Option<Expr>),
    Assign(String, Expr),
    Store(String, Expr, Expr),
    /// `target += value`; the target is a variable or `array[index]`.
    Accumulate(Expr, Expr),
    ForRange {
        var: String,
        lo: Expr,
        hi: Expr,
        body: Vec<Stmt>,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    If {
        cases: Vec<(Expr, Vec<Stmt>)>,
        other: Vec<Stmt>,
    },
    Level(LevelCall),
    /// Call to a runtime helper from the emitted prelude.
    Call(String, Vec<Expr>),
    Block(Vec<Stmt>),
    Break,
    Comment(String),
}

pub fn if_then(cond: Expr, body: Vec<Stmt>) -> Stmt {
    Stmt::If {
        cases: vec![(cond, body)],
        other: Vec::new(),
    }
}

/// A whole kernel: parameters, body and the statements that run after it.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Param {
    IdxArray(String),
    ValArray(String),
    Idx(String),
}

impl Param {
    pub fn name(&self) -> &str {
        match self {
            Param::IdxArray(s) | Param::ValArray(s) | Param::Idx(s) => s,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Rem => "%",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Eq => "==",
            Op::Ne => "!=",
            Op::And => "&&",
            Op::Or => "||",
            Op::Max => "max",
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(i) => write!(f, "{i}"),
            Expr::Real(x) => write!(f, "{x:?}"),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Load(a, i) => write!(f, "{a}[{i}]"),
            Expr::Bin(Op::Max, a, b) => write!(f, "max({a}, {b})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {op} {b})"),
            Expr::Not(e) => write!(f, "!{e}"),
            Expr::Min(es) => {
                let v: Vec<String> = es.iter().map(|e| e.to_string()).collect();
                write!(f, "min({})", v.join(", "))
            }
        }
    }
}

fn show_block(out: &mut String, body: &[Stmt], depth: usize) {
    for s in body {
        show_stmt(out, s, depth);
    }
}

fn show_stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = "  ".repeat(depth);
    let _ = match s {
        Stmt::Decl(t, n, Some(e)) => writeln!(out, "{pad}{t:?} {n} = {e}"),
        Stmt::Decl(t, n, None) => writeln!(out, "{pad}{t:?} {n}"),
        Stmt::Assign(n, e) => writeln!(out, "{pad}{n} = {e}"),
        Stmt::Store(a, i, e) => writeln!(out, "{pad}{a}[{i}] = {e}"),
        Stmt::Accumulate(t, e) => writeln!(out, "{pad}{t} += {e}"),
        Stmt::ForRange { var, lo, hi, body } => {
            let _ = writeln!(out, "{pad}for {var} in {lo}..{hi}");
            show_block(out, body, depth + 1);
            Ok(())
        }
        Stmt::While { cond, body } => {
            let _ = writeln!(out, "{pad}while {cond}");
            show_block(out, body, depth + 1);
            Ok(())
        }
        Stmt::If { cases, other } => {
            for (k, (c, b)) in cases.iter().enumerate() {
                let _ = writeln!(out, "{pad}{} {c}", if k == 0 { "if" } else { "elif" });
                show_block(out, b, depth + 1);
            }
            if !other.is_empty() {
                let _ = writeln!(out, "{pad}else");
                show_block(out, other, depth + 1);
            }
            Ok(())
        }
        Stmt::Level(c) => {
            let args: Vec<String> = c.args.iter().map(|e| e.to_string()).collect();
            writeln!(
                out,
                "{pad}{} = {}{}.{}:{}({})",
                c.outs.join(", "),
                c.tensor,
                c.level,
                c.kind.name(),
                c.func.name(),
                args.join(", ")
            )
        }
        Stmt::Call(n, args) => {
            let args: Vec<String> = args.iter().map(|e| e.to_string()).collect();
            writeln!(out, "{pad}{n}({})", args.join(", "))
        }
        Stmt::Block(b) => {
            show_block(out, b, depth);
            Ok(())
        }
        Stmt::Break => writeln!(out, "{pad}break"),
        Stmt::Comment(c) => writeln!(out, "{pad}// {c}"),
    };
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ps: Vec<&str> = self.params.iter().map(|p| p.name()).collect();
        writeln!(f, "kernel {}({})", self.name, ps.join(", "))?;
        let mut s = String::new();
        show_block(&mut s, &self.body, 1);
        f.write_str(&s)
    }
}

/// Loop kinds and nesting only: one line per loop, indented by depth.
pub fn skeleton(body: &[Stmt]) -> String {
    fn go(out: &mut String, body: &[Stmt], depth: usize) {
        for s in body {
            match s {
                Stmt::ForRange { body, .. } => {
                    let _ = writeln!(out, "{}for", "  ".repeat(depth));
                    go(out, body, depth + 1);
                }
                Stmt::While { body, .. } => {
                    let _ = writeln!(out, "{}while", "  ".repeat(depth));
                    go(out, body, depth + 1);
                }
                Stmt::If { cases, other } => {
                    for (_, b) in cases {
                        go(out, b, depth);
                    }
                    go(out, other, depth);
                }
                Stmt::Block(b) => go(out, b, depth),
                _ => {}
            }
        }
    }
    let mut s = String::new();
    go(&mut s, body, 0);
    s
}

/// Visit every statement, depth first.
pub fn walk(body: &[Stmt], f: &mut impl FnMut(&Stmt)) {
    for s in body {
        f(s);
        match s {
            Stmt::ForRange { body, .. } | Stmt::While { body, .. } | Stmt::Block(body) => {
                walk(body, f)
            }
            Stmt::If { cases, other } => {
                for (_, b) in cases {
                    walk(b, f);
                }
                walk(other, f);
            }
            _ => {}
        }
    }
}

pub fn count_level_calls(body: &[Stmt]) -> usize {
    let mut n = 0;
    walk(body, &mut |s| {
        if matches!(s, Stmt::Level(_)) {
            n += 1
        }
    });
    n
}
