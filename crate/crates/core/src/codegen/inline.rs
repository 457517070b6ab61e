//! Replace abstract level-function calls with per-kind code, then fold the
//! found flags that are constant for the kinds involved.

use std::collections::{BTreeMap, BTreeSet};

use super::ir::*;
use super::CodegenError;
use crate::levels::{LevelFunction as F, LevelKind as K};

pub fn inline(body: Vec<Stmt>) -> Result<Vec<Stmt>, CodegenError> {
    let body = expand(body)?;
    Ok(fold_found(body))
}

fn expand(body: Vec<Stmt>) -> Result<Vec<Stmt>, CodegenError> {
    let mut out = Vec::with_capacity(body.len());
    for s in body {
        match s {
            Stmt::Level(c) => out.extend(level_body(&c)?),
            other => out.push(map_children(other, &mut |b| expand(b))?),
        }
    }
    Ok(out)
}

fn map_children(
    s: Stmt,
    f: &mut dyn FnMut(Vec<Stmt>) -> Result<Vec<Stmt>, CodegenError>,
) -> Result<Stmt, CodegenError> {
    Ok(match s {
        Stmt::ForRange { var, lo, hi, body } => Stmt::ForRange {
            var,
            lo,
            hi,
            body: f(body)?,
        },
        Stmt::While { cond, body } => Stmt::While {
            cond,
            body: f(body)?,
        },
        Stmt::If { cases, other } => Stmt::If {
            cases: cases
                .into_iter()
                .map(|(c, b)| Ok((c, f(b)?)))
                .collect::<Result<_, CodegenError>>()?,
            other: f(other)?,
        },
        Stmt::Block(b) => Stmt::Block(f(b)?),
        s => s,
    })
}

fn idx(n: &str, e: Expr) -> Stmt {
    Stmt::Decl(Ty::Idx, n.to_string(), Some(e))
}

fn flag(n: &str, b: Expr) -> Stmt {
    Stmt::Decl(Ty::Bool, n.to_string(), Some(b))
}

fn grow(arr: &str, n: Expr) -> Stmt {
    Stmt::Call(
        "sl_grow_idx".into(),
        vec![var(format!("&{arr}")), var(format!("&{arr}_cap")), n],
    )
}

/// Per-kind implementation of one level function call.
fn level_body(c: &LevelCall) -> Result<Vec<Stmt>, CodegenError> {
    let n = format!("{}{}", c.tensor, c.level);
    let a = |i: usize| c.args[i].clone();
    let o = |i: usize| c.outs[i].as_str();
    let name = |s: &str| format!("{n}_{s}");
    let crd_at = |p: Expr| {
        load(
            name("crd"),
            add(mul(p, var(name("stride"))), var(name("base"))),
        )
    };
    let unsupported =
        || CodegenError::Unsupported(format!("{} on a {} level", c.func.name(), c.kind.name()));
    Ok(match (c.kind, c.func) {
        (K::Dense, F::CoordBounds) => vec![idx(o(0), int(0)), idx(o(1), var(name("dim")))],
        (K::Dense | K::Range, F::CoordAccess) | (K::Dense, F::Locate) => vec![
            idx(o(0), add(mul(a(0), var(name("dim"))), a(1))),
            flag(o(1), Expr::Bool(true)),
        ],
        (K::Dense, F::Size) => vec![idx(o(0), mul(a(0), var(name("dim"))))],
        (K::Dense, F::InsertInit | F::InsertCoord) => Vec::new(),
        (K::Range, F::CoordBounds) => {
            let off = load(name("offset"), a(0));
            let lo = format!("{}_lo", o(0));
            vec![
                idx(&lo, bin(Op::Max, int(0), bin(Op::Sub, int(0), off.clone()))),
                idx(o(0), var(lo.clone())),
                idx(
                    o(1),
                    bin(
                        Op::Max,
                        Expr::Min(vec![var(name("dim")), bin(Op::Sub, var(name("pdim")), off)]),
                        var(lo),
                    ),
                ),
            ]
        }
        (K::Compressed, F::PosBounds) => vec![
            idx(o(0), load(name("pos"), a(0))),
            idx(o(1), load(name("pos"), add(a(0), int(1)))),
        ],
        (K::Singleton | K::Offset, F::PosBounds) => {
            vec![idx(o(0), a(0)), idx(o(1), add(a(0), int(1)))]
        }
        (K::Compressed | K::Singleton, F::PosAccess) => {
            vec![idx(o(0), crd_at(a(0))), flag(o(1), Expr::Bool(true))]
        }
        (K::Offset, F::PosAccess) => vec![
            idx(
                o(0),
                add(
                    a(1),
                    load(name("offset"), bin(Op::Div, a(0), var(name("seg")))),
                ),
            ),
            flag(o(1), Expr::Bool(true)),
        ],
        (K::Hashed, F::PosBounds) => vec![
            idx(o(0), mul(a(0), var(name("w")))),
            idx(o(1), mul(add(a(0), int(1)), var(name("w")))),
        ],
        (K::Hashed, F::PosAccess) => vec![
            idx(o(0), load(name("crd"), a(0))),
            flag(o(1), bin(Op::Ne, var(o(0)), int(-1))),
        ],
        (K::Hashed, F::Locate) => {
            let (s, slot) = (format!("{}_s", o(0)), format!("{}_slot", o(0)));
            let w = var(name("w"));
            vec![
                idx(o(0), int(-1)),
                flag(o(1), Expr::Bool(false)),
                Stmt::ForRange {
                    var: s.clone(),
                    lo: int(0),
                    hi: w.clone(),
                    body: vec![
                        idx(&slot, probe(a(0), a(1), var(s), w)),
                        if_then(
                            eq(load(name("crd"), var(slot.clone())), a(1)),
                            vec![
                                Stmt::Assign(o(0).into(), var(slot.clone())),
                                Stmt::Assign(o(1).into(), Expr::Bool(true)),
                                Stmt::Break,
                            ],
                        ),
                        if_then(eq(load(name("crd"), var(slot)), int(-1)), vec![Stmt::Break]),
                    ],
                },
            ]
        }
        (K::Hashed, F::Size) => vec![idx(o(0), mul(a(0), var(name("w"))))],
        (K::Hashed, F::InsertInit) => {
            vec![Stmt::Call(
                "sl_fill_idx".into(),
                vec![
                    var(format!("&{}", name("crd"))),
                    var(format!("&{}_cap", name("crd"))),
                    a(1),
                    int(-1),
                ],
            )]
        }
        (K::Hashed, F::InsertCoord) => {
            let (s, slot) = (name("s"), name("slot"));
            let w = var(name("w"));
            let at = load(name("crd"), var(slot.clone()));
            vec![Stmt::ForRange {
                var: s.clone(),
                lo: int(0),
                hi: w.clone(),
                body: vec![
                    idx(&slot, probe(a(0), a(1), var(s), w)),
                    if_then(eq(at.clone(), a(1)), vec![Stmt::Break]),
                    if_then(
                        eq(at, int(-1)),
                        vec![Stmt::Store(name("crd"), var(slot), a(1)), Stmt::Break],
                    ),
                ],
            }]
        }
        (K::Compressed | K::Singleton, F::AppendCoord) => vec![
            grow(&name("crd"), add(a(0), int(1))),
            Stmt::Store(name("crd"), a(0), a(1)),
        ],
        (K::Compressed, F::AppendEdges) => {
            let q = name("q");
            let last = name("last_edge");
            vec![
                grow(&name("pos"), add(a(0), int(2))),
                Stmt::ForRange {
                    var: q.clone(),
                    lo: add(var(last.clone()), int(1)),
                    hi: a(0),
                    body: vec![Stmt::Store(name("pos"), add(var(q), int(1)), a(1))],
                },
                Stmt::Store(name("pos"), a(0), a(1)),
                Stmt::Store(name("pos"), add(a(0), int(1)), a(2)),
                Stmt::Assign(last, a(0)),
            ]
        }
        (K::Compressed, F::AppendFinalize) => {
            let q = name("q");
            vec![
                grow(&name("pos"), add(a(0), int(1))),
                Stmt::ForRange {
                    var: q.clone(),
                    lo: add(var(name("last_edge")), int(1)),
                    hi: a(0),
                    body: vec![Stmt::Store(name("pos"), add(var(q), int(1)), a(1))],
                },
            ]
        }
        (K::Singleton, F::AppendFinalize) => Vec::new(),
        _ => return Err(unsupported()),
    })
}

/// Slot `step` of the probe sequence for `c` in segment `parent`.
fn probe(parent: Expr, c: Expr, step: Expr, w: Expr) -> Expr {
    add(
        mul(parent, w.clone()),
        bin(Op::Rem, add(bin(Op::Rem, c, w.clone()), step), w),
    )
}

// ---- constant found flags ----

/// Flags declared with a constant and never reassigned are substituted, and
/// the branches they guard are resolved statically.
fn fold_found(body: Vec<Stmt>) -> Vec<Stmt> {
    let mut consts = BTreeMap::new();
    let mut assigned = BTreeSet::new();
    walk(&body, &mut |s| match s {
        Stmt::Decl(Ty::Bool, n, Some(Expr::Bool(b))) => {
            consts.insert(n.clone(), *b);
        }
        Stmt::Assign(n, _) => {
            assigned.insert(n.clone());
        }
        _ => {}
    });
    for n in &assigned {
        consts.remove(n);
    }
    fold_block(body, &consts)
}

fn subst(e: Expr, c: &BTreeMap<String, bool>) -> Expr {
    match e {
        Expr::Var(v) => match c.get(&v) {
            Some(b) => Expr::Bool(*b),
            None => Expr::Var(v),
        },
        Expr::Bin(op, a, b) => bin(op, subst(*a, c), subst(*b, c)),
        Expr::Not(a) => not(subst(*a, c)),
        Expr::Load(a, i) => Expr::Load(a, Box::new(subst(*i, c))),
        Expr::Min(es) => Expr::Min(es.into_iter().map(|e| subst(e, c)).collect()),
        e => e,
    }
}

fn fold_block(body: Vec<Stmt>, c: &BTreeMap<String, bool>) -> Vec<Stmt> {
    let mut out = Vec::new();
    for s in body {
        match s {
            Stmt::Decl(Ty::Bool, n, _) if c.contains_key(&n) => {}
            Stmt::Decl(t, n, e) => out.push(Stmt::Decl(t, n, e.map(|e| subst(e, c)))),
            Stmt::Assign(n, e) => out.push(Stmt::Assign(n, subst(e, c))),
            Stmt::While { cond, body } => out.push(Stmt::While {
                cond: subst(cond, c),
                body: fold_block(body, c),
            }),
            Stmt::ForRange { var, lo, hi, body } => out.push(Stmt::ForRange {
                var,
                lo,
                hi,
                body: fold_block(body, c),
            }),
            Stmt::Block(b) => out.push(Stmt::Block(fold_block(b, c))),
            Stmt::If { cases, other } => {
                let mut kept = Vec::new();
                let mut other = fold_block(other, c);
                for (cond, b) in cases {
                    match subst(cond, c) {
                        Expr::Bool(false) => {}
                        Expr::Bool(true) => {
                            // everything after an always-taken case is dead
                            other = fold_block(b, c);
                            break;
                        }
                        cond => kept.push((cond, fold_block(b, c))),
                    }
                }
                if kept.is_empty() {
                    if !other.is_empty() {
                        out.push(Stmt::Block(other));
                    }
                } else {
                    out.push(Stmt::If { cases: kept, other });
                }
            }
            s => out.push(s),
        }
    }
    out
}
