//! Schedule to loop IR. Mirrors the interpreter: the same loops, iterator
//! conversions, case selection and output protocol, expressed as code.

use std::collections::BTreeMap;

use super::ir::*;
use super::CodegenError;
use crate::engine::schedule::{
    Derived, FusedStep, IterPlan, LoopNode, Node, OutputMode, PointPlan, Schedule,
};
use crate::lattice::{Dim, Directive, Expr as LExpr};
use crate::levels::{LevelFunction as F, LevelKind};

/// Where an input parameter's data comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Field {
    Pos,
    Crd,
    Offset,
    Vals,
    Dim,
    ParentDim,
    Segment,
    Width,
    Stride,
    Base,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Source {
    pub tensor: String,
    /// 0-based level; unused for values.
    pub level: usize,
    pub field: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lowered {
    pub kernel: Kernel,
    pub sources: Vec<Source>,
    /// Output level kinds, in order.
    pub out_levels: Vec<LevelKind>,
}

#[derive(Clone)]
enum Bound {
    Single(Expr),
    Range(Expr, Expr),
    List { buf: String, lo: Expr, hi: Expr },
}

struct Sink {
    acc: String,
    has: String,
}

struct Iter {
    init: Vec<Stmt>,
    valid: Expr,
    read: Vec<Stmt>,
    coord: Expr,
    bind: Bound,
    /// Statements binding the position when it is computed per coordinate.
    bind_stmts: Vec<Stmt>,
    advance: Vec<Stmt>,
}

pub(crate) struct Lower<'a> {
    s: &'a Schedule,
    labels: Vec<String>,
    bound: Vec<Bound>,
    params: Vec<Param>,
    sources: Vec<Source>,
    bufs: Vec<String>,
    depth: usize,
}

fn c_name(name: &str) -> String {
    const RESERVED: &[&str] = &[
        "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
        "enum", "extern", "float", "for", "goto", "if", "int", "long", "register", "return",
        "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned",
        "void", "volatile", "while", "out", "min", "max",
    ];
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if RESERVED.contains(&s.as_str()) || s.starts_with(|c: char| c.is_ascii_digit()) {
        format!("v_{s}")
    } else {
        s
    }
}

pub fn lower(s: &Schedule, name: &str) -> Result<Lowered, CodegenError> {
    let mut count: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &s.graph.paths {
        *count.entry(p.tensor.as_str()).or_default() += 1;
    }
    let labels = s
        .graph
        .paths
        .iter()
        .enumerate()
        .map(|(a, p)| {
            let t = c_name(&p.tensor);
            if count[p.tensor.as_str()] > 1 {
                format!("{t}{a}_")
            } else {
                t
            }
        })
        .collect();
    let mut l = Lower {
        s,
        labels,
        bound: vec![Bound::Single(int(0)); s.graph.paths.len()],
        params: Vec::new(),
        sources: Vec::new(),
        bufs: Vec::new(),
        depth: 0,
    };
    let (init, fin) = l.output_setup();
    let nest = l.node(&s.root, None)?;
    let mut body = Vec::new();
    for b in &l.bufs {
        body.push(Stmt::Call("SL_BUF".into(), vec![var(b.clone())]));
    }
    body.extend(init);
    body.extend(nest);
    body.extend(fin);
    for b in &l.bufs {
        body.push(Stmt::Call("sl_free".into(), vec![var(format!("&{b}"))]));
    }
    let out_levels = s.tensors[0].format.levels.iter().map(|f| f.kind).collect();
    Ok(Lowered {
        kernel: Kernel {
            name: c_name(name),
            params: l.params,
            body,
        },
        sources: l.sources,
        out_levels,
    })
}

impl<'a> Lower<'a> {
    fn tname(&self, a: usize) -> String {
        c_name(&self.s.graph.paths[a].tensor)
    }

    fn kind(&self, d: Dim) -> LevelKind {
        self.s.tensors[d.access].format.levels[d.level].kind
    }

    fn var_name(&self, v: usize) -> String {
        c_name(self.s.graph.var_name(v))
    }

    fn param(&mut self, p: Param, src: Source) {
        if !self.params.iter().any(|q| q.name() == p.name()) {
            self.params.push(p);
            self.sources.push(src);
        }
    }

    /// Register the parameters a level's inlined functions read.
    fn level_params(&mut self, d: Dim) {
        if d.access == 0 {
            return;
        }
        let t = self.s.graph.paths[d.access].tensor.clone();
        let n = format!("{}{}", self.tname(d.access), d.level + 1);
        let src = |field| Source {
            tensor: t.clone(),
            level: d.level,
            field,
        };
        match self.kind(d) {
            LevelKind::Dense => self.param(Param::Idx(format!("{n}_dim")), src(Field::Dim)),
            LevelKind::Range => {
                self.param(Param::Idx(format!("{n}_dim")), src(Field::Dim));
                self.param(Param::Idx(format!("{n}_pdim")), src(Field::ParentDim));
                self.param(Param::IdxArray(format!("{n}_offset")), src(Field::Offset));
            }
            LevelKind::Compressed => {
                self.param(Param::IdxArray(format!("{n}_pos")), src(Field::Pos));
                self.param(Param::IdxArray(format!("{n}_crd")), src(Field::Crd));
                self.param(Param::Idx(format!("{n}_stride")), src(Field::Stride));
                self.param(Param::Idx(format!("{n}_base")), src(Field::Base));
            }
            LevelKind::Singleton => {
                self.param(Param::IdxArray(format!("{n}_crd")), src(Field::Crd));
                self.param(Param::Idx(format!("{n}_stride")), src(Field::Stride));
                self.param(Param::Idx(format!("{n}_base")), src(Field::Base));
            }
            LevelKind::Offset => {
                self.param(Param::Idx(format!("{n}_seg")), src(Field::Segment));
                self.param(Param::IdxArray(format!("{n}_offset")), src(Field::Offset));
            }
            LevelKind::Hashed => {
                self.param(Param::Idx(format!("{n}_w")), src(Field::Width));
                self.param(Param::IdxArray(format!("{n}_crd")), src(Field::Crd));
            }
        }
    }

    fn call(&mut self, d: Dim, func: F, args: Vec<Expr>, outs: &[String]) -> Stmt {
        self.level_params(d);
        Stmt::Level(LevelCall {
            tensor: self.tname(d.access),
            level: d.level + 1,
            kind: self.kind(d),
            func,
            args,
            outs: outs.to_vec(),
        })
    }

    /// Coordinate of the level above `d` (its prefix's last entry).
    fn prefix_last(&self, d: Dim) -> Expr {
        if d.level == 0 {
            int(0)
        } else {
            var(self.var_name(self.s.graph.paths[d.access].vars[d.level - 1]))
        }
    }

    fn pname(&self, d: Dim) -> String {
        format!("p{}{}", self.labels[d.access], d.level + 1)
    }

    // ---- nodes ----

    fn node(&mut self, n: &Node, sink: Option<&Sink>) -> Result<Vec<Stmt>, CodegenError> {
        match n {
            Node::Compute(e) => {
                let (mut st, v) = self.value(e);
                let sink = sink.expect("compute under a write");
                st.push(Stmt::Accumulate(var(sink.acc.clone()), v));
                st.push(Stmt::Assign(sink.has.clone(), Expr::Bool(true)));
                Ok(st)
            }
            Node::Write(inner) => {
                if let Node::Compute(e) = &**inner {
                    let (mut st, v) = self.value(e);
                    st.extend(self.write_out(v));
                    return Ok(st);
                }
                self.depth += 1;
                let sk = Sink {
                    acc: format!("t{}", self.depth),
                    has: format!("has{}", self.depth),
                };
                let mut st = vec![
                    Stmt::Decl(Ty::Val, sk.acc.clone(), Some(Expr::Real(0.0))),
                    Stmt::Decl(Ty::Bool, sk.has.clone(), Some(Expr::Bool(false))),
                ];
                st.extend(self.node(inner, Some(&sk))?);
                st.push(if_then(
                    var(sk.has.clone()),
                    self.write_out(var(sk.acc.clone())),
                ));
                self.depth -= 1;
                Ok(st)
            }
            Node::Loop(l) => match &l.derived {
                Some(d) => self.derived(l, d, sink),
                None if !l.fused.is_empty() => self.fused(l, sink),
                None => self.merge(l, sink),
            },
        }
    }

    /// Leaf value reads for every access in `e`, and the value expression.
    fn value(&mut self, e: &LExpr) -> (Vec<Stmt>, Expr) {
        let mut st = Vec::new();
        let v = self.value_rec(e, &mut st);
        (st, v)
    }

    fn value_rec(&mut self, e: &LExpr, st: &mut Vec<Stmt>) -> Expr {
        match e {
            LExpr::Lit(x) => Expr::Real(*x),
            LExpr::Add(a, b) => {
                let (a, b) = (self.value_rec(a, st), self.value_rec(b, st));
                Expr::Bin(Op::Add, Box::new(a), Box::new(b))
            }
            LExpr::Mul(a, b) => {
                let (a, b) = (self.value_rec(a, st), self.value_rec(b, st));
                Expr::Bin(Op::Mul, Box::new(a), Box::new(b))
            }
            LExpr::Access(a) => {
                let t = self.s.graph.paths[*a].tensor.clone();
                let vals = format!("{}_vals", self.tname(*a));
                self.param(
                    Param::ValArray(vals.clone()),
                    Source {
                        tensor: t,
                        level: 0,
                        field: Field::Vals,
                    },
                );
                match self.bound[*a].clone() {
                    Bound::Single(p) => load(vals, p),
                    Bound::Range(lo, hi) => {
                        let v = format!("v{}", self.labels[*a]);
                        let k = format!("k{}", self.labels[*a]);
                        st.push(Stmt::Decl(Ty::Val, v.clone(), Some(Expr::Real(0.0))));
                        st.push(Stmt::ForRange {
                            var: k.clone(),
                            lo,
                            hi,
                            body: vec![Stmt::Accumulate(var(v.clone()), load(vals, var(k)))],
                        });
                        var(v)
                    }
                    Bound::List { buf, lo, hi } => {
                        let v = format!("v{}", self.labels[*a]);
                        let k = format!("k{}", self.labels[*a]);
                        st.push(Stmt::Decl(Ty::Val, v.clone(), Some(Expr::Real(0.0))));
                        st.push(Stmt::ForRange {
                            var: k.clone(),
                            lo,
                            hi,
                            body: vec![Stmt::Accumulate(
                                var(v.clone()),
                                load(vals, buf_pos(&buf, var(k))),
                            )],
                        });
                        var(v)
                    }
                }
            }
        }
    }

    fn body(
        &mut self,
        l: &LoopNode,
        q: usize,
        sink: Option<&Sink>,
    ) -> Result<Vec<Stmt>, CodegenError> {
        match &l.bodies[q] {
            Some(b) => self.node(b, sink),
            None => Ok(Vec::new()),
        }
    }

    fn bind(&mut self, a: usize, b: Bound) -> Bound {
        std::mem::replace(&mut self.bound[a], b)
    }

    fn parent_single(&self, d: Dim) -> Expr {
        match &self.bound[d.access] {
            Bound::Single(p) => p.clone(),
            _ => unreachable!("locate under a single position"),
        }
    }

    /// Locate calls for `dims` at coordinate `c`: statements and found flags.
    fn locates(&mut self, dims: &[Dim], c: &Expr) -> (Vec<Stmt>, Vec<(Dim, Expr, Expr)>) {
        let mut st = Vec::new();
        let mut out = Vec::new();
        for &d in dims {
            let p = self.pname(d);
            let f = format!("f{}{}", self.labels[d.access], d.level + 1);
            let pp = self.parent_single(d);
            let call = self.call(d, F::Locate, vec![pp, c.clone()], &[p.clone(), f.clone()]);
            st.push(call);
            out.push((d, var(p), var(f)));
        }
        (st, out)
    }

    // ---- iterators ----

    fn iter(&mut self, ip: &IterPlan, v: &str) -> Iter {
        let d = ip.dim;
        let a = d.access;
        let kind = self.kind(d);
        let p = self.pname(d);
        let cvar = format!("{v}{}", self.labels[a]);
        let parent = self.bound[a].clone();
        let contiguous = matches!(
            (&parent, kind),
            (Bound::Single(_), _)
                | (
                    Bound::Range(..),
                    LevelKind::Compressed | LevelKind::Singleton | LevelKind::Offset
                )
        );
        let plain = matches!(ip.directive, Directive::None | Directive::DedupChained);
        if plain && kind.value_iterable() {
            if let Bound::Single(pp) = parent {
                let end = format!("{cvar}_end");
                let pl = self.prefix_last(d);
                let init =
                    vec![self.call(d, F::CoordBounds, vec![pl], &[cvar.clone(), end.clone()])];
                let bind_stmts = vec![self.call(
                    d,
                    F::CoordAccess,
                    vec![pp, var(cvar.clone())],
                    &[p.clone(), format!("f{}{}", self.labels[a], d.level + 1)],
                )];
                return Iter {
                    init,
                    valid: lt(var(cvar.clone()), var(end)),
                    read: Vec::new(),
                    coord: var(cvar.clone()),
                    bind: Bound::Single(var(p)),
                    bind_stmts,
                    advance: vec![Stmt::Assign(cvar.clone(), add(var(cvar), int(1)))],
                };
            }
        }
        if plain && !kind.value_iterable() && contiguous {
            let end = format!("{p}_end");
            let init = match &parent {
                Bound::Single(pp) => {
                    vec![self.call(d, F::PosBounds, vec![pp.clone()], &[p.clone(), end.clone()])]
                }
                Bound::Range(lo, hi) => vec![
                    self.call(
                        d,
                        F::PosBounds,
                        vec![lo.clone()],
                        &[p.clone(), format!("{p}_e0")],
                    ),
                    self.call(
                        d,
                        F::PosBounds,
                        vec![bin(Op::Sub, hi.clone(), int(1))],
                        &[format!("{p}_b1"), end.clone()],
                    ),
                ],
                Bound::List { .. } => unreachable!(),
            };
            let f = format!("f{}{}", self.labels[a], d.level + 1);
            let pl = self.prefix_last(d);
            let read = vec![self.call(
                d,
                F::PosAccess,
                vec![var(p.clone()), pl.clone()],
                &[cvar.clone(), f],
            )];
            if ip.directive == Directive::DedupChained {
                let seg = format!("{p}_seg");
                let c2 = format!("{cvar}_next");
                let f2 = format!("{cvar}_found");
                let scan = vec![
                    self.call(
                        d,
                        F::PosAccess,
                        vec![var(seg.clone()), pl],
                        &[c2.clone(), f2],
                    ),
                    if_then(bin(Op::Ne, var(c2), var(cvar.clone())), vec![Stmt::Break]),
                    Stmt::Assign(seg.clone(), add(var(seg.clone()), int(1))),
                ];
                let mut read = read;
                read.push(Stmt::Decl(
                    Ty::Idx,
                    seg.clone(),
                    Some(add(var(p.clone()), int(1))),
                ));
                read.push(Stmt::While {
                    cond: lt(var(seg.clone()), var(end.clone())),
                    body: scan,
                });
                return Iter {
                    init,
                    valid: lt(var(p.clone()), var(end)),
                    read,
                    coord: var(cvar),
                    bind: Bound::Range(var(p.clone()), var(seg.clone())),
                    bind_stmts: Vec::new(),
                    advance: vec![Stmt::Assign(p, var(seg))],
                };
            }
            return Iter {
                init,
                valid: lt(var(p.clone()), var(end)),
                read,
                coord: var(cvar),
                bind: Bound::Single(var(p.clone())),
                bind_stmts: Vec::new(),
                advance: vec![Stmt::Assign(p.clone(), add(var(p), int(1)))],
            };
        }
        // scratch: gather (coordinate, position) pairs, sort, then group
        let buf = format!("buf{}{}", self.labels[a], d.level + 1);
        if !self.bufs.contains(&buf) {
            self.bufs.push(buf.clone());
        }
        let b = format!("b{}{}", self.labels[a], d.level + 1);
        let mut init = vec![Stmt::Assign(format!("{buf}.len"), int(0))];
        let gp = format!("{p}_par");
        let push_body = self.gather(d, &buf, &var(gp.clone()));
        init.extend(for_each_pos(&parent, &gp, push_body));
        init.push(Stmt::Call("sl_sort".into(), vec![var(format!("&{buf}"))]));
        init.push(Stmt::Decl(Ty::Idx, b.clone(), Some(int(0))));
        let len = var(format!("{buf}.len"));
        let coord_at = |i: Expr| load(format!("{buf}.d"), mul(int(2), i));
        if ip.directive == Directive::ReorderScratch {
            return Iter {
                init,
                valid: lt(var(b.clone()), len),
                read: vec![Stmt::Decl(
                    Ty::Idx,
                    cvar.clone(),
                    Some(coord_at(var(b.clone()))),
                )],
                coord: var(cvar),
                bind: Bound::Single(buf_pos(&buf, var(b.clone()))),
                bind_stmts: Vec::new(),
                advance: vec![Stmt::Assign(b.clone(), add(var(b), int(1)))],
            };
        }
        let e = format!("{b}_end");
        let read = vec![
            Stmt::Decl(Ty::Idx, cvar.clone(), Some(coord_at(var(b.clone())))),
            Stmt::Decl(Ty::Idx, e.clone(), Some(add(var(b.clone()), int(1)))),
            Stmt::While {
                cond: and(
                    lt(var(e.clone()), len.clone()),
                    eq(coord_at(var(e.clone())), var(cvar.clone())),
                ),
                body: vec![Stmt::Assign(e.clone(), add(var(e.clone()), int(1)))],
            },
        ];
        Iter {
            init,
            valid: lt(var(b.clone()), len),
            read,
            coord: var(cvar),
            bind: Bound::List {
                buf,
                lo: var(b.clone()),
                hi: var(e.clone()),
            },
            bind_stmts: Vec::new(),
            advance: vec![Stmt::Assign(b, var(e))],
        }
    }

    /// Push every child entry of parent position `pp` into `buf`.
    fn gather(&mut self, d: Dim, buf: &str, pp: &Expr) -> Vec<Stmt> {
        let kind = self.kind(d);
        let g = format!("g{}{}", self.labels[d.access], d.level + 1);
        let pl = self.prefix_last(d);
        let push =
            |c: Expr, p: Expr| Stmt::Call("sl_push".into(), vec![var(format!("&{buf}")), c, p]);
        if kind.value_iterable() {
            let (lo, hi) = (format!("{g}_lo"), format!("{g}_hi"));
            let (q, f) = (format!("{g}_p"), format!("{g}_f"));
            let bounds = self.call(d, F::CoordBounds, vec![pl], &[lo.clone(), hi.clone()]);
            let acc = self.call(
                d,
                F::CoordAccess,
                vec![pp.clone(), var(g.clone())],
                &[q.clone(), f],
            );
            vec![
                bounds,
                Stmt::ForRange {
                    var: g.clone(),
                    lo: var(lo),
                    hi: var(hi),
                    body: vec![acc, push(var(g), var(q))],
                },
            ]
        } else {
            let (lo, hi) = (format!("{g}_lo"), format!("{g}_hi"));
            let (c, f) = (format!("{g}_c"), format!("{g}_f"));
            let bounds = self.call(d, F::PosBounds, vec![pp.clone()], &[lo.clone(), hi.clone()]);
            let acc = self.call(
                d,
                F::PosAccess,
                vec![var(g.clone()), pl],
                &[c.clone(), f.clone()],
            );
            vec![
                bounds,
                Stmt::ForRange {
                    var: g.clone(),
                    lo: var(lo),
                    hi: var(hi),
                    body: vec![acc, if_then(var(f), vec![push(var(c), var(g))])],
                },
            ]
        }
    }

    // ---- loops ----

    /// Case selection and bodies at coordinate `c`. `present(dim)` tells
    /// whether a co-iterated dim sits at `c`.
    fn cases(
        &mut self,
        l: &LoopNode,
        pp: &PointPlan,
        c: &Expr,
        iters: &[Iter],
        present: &dyn Fn(usize) -> Expr,
        sink: Option<&Sink>,
    ) -> Result<Vec<Stmt>, CodegenError> {
        let (mut st, located) = self.locates(&pp.locate, c);
        let mut cases = Vec::new();
        for &q in &pp.cases {
            let dims = l.lattice.points[q].dims.clone();
            let mut conds = Vec::new();
            let mut body = Vec::new();
            let mut saved = Vec::new();
            for d in &dims {
                if let Some((_, p, f)) = located.iter().find(|x| x.0 == *d) {
                    conds.push(f.clone());
                    saved.push((d.access, self.bind(d.access, Bound::Single(p.clone()))));
                } else {
                    let i = pp
                        .coiter
                        .iter()
                        .copied()
                        .find(|&i| l.iters[i].dim == *d)
                        .expect("coiterated");
                    conds.push(present(i));
                    body.extend(iters[i].bind_stmts.clone());
                    saved.push((d.access, self.bind(d.access, iters[i].bind.clone())));
                }
            }
            let r = self.body(l, q, sink);
            for (a, old) in saved.into_iter().rev() {
                self.bound[a] = old;
            }
            body.extend(r?);
            cases.push((all(conds), body));
        }
        // later cases only run when earlier ones fail
        st.push(Stmt::If {
            cases,
            other: Vec::new(),
        });
        Ok(st)
    }

    fn merge(&mut self, l: &LoopNode, sink: Option<&Sink>) -> Result<Vec<Stmt>, CodegenError> {
        let v = self.var_name(l.var);
        let iters: Vec<Iter> = l.iters.iter().map(|ip| self.iter(ip, &v)).collect();
        if let [pp] = &l.points[..] {
            let i0 = pp.coiter.first().copied().unwrap_or(0);
            if pp.coiter.len() == 1
                && iters[i0].read.len() <= 1
                && l.iters[i0].directive == Directive::None
            {
                return Ok(vec![Stmt::Block(self.counted(l, pp, &iters, &v, sink)?)]);
            }
        }
        let mut st: Vec<Stmt> = iters.iter().flat_map(|it| it.init.clone()).collect();
        for pp in &l.points {
            if pp.coiter.is_empty() {
                continue;
            }
            let mut body = Vec::new();
            for &i in &pp.coiter {
                body.extend(iters[i].read.clone());
            }
            let coords: Vec<Expr> = pp.coiter.iter().map(|&i| iters[i].coord.clone()).collect();
            let c = if coords.len() == 1 {
                coords[0].clone()
            } else {
                Expr::Min(coords)
            };
            body.push(Stmt::Decl(Ty::Idx, v.clone(), Some(c)));
            let solo = pp.coiter.len() == 1;
            let present = |i: usize| {
                if solo {
                    Expr::Bool(true)
                } else {
                    eq(iters[i].coord.clone(), var(v.clone()))
                }
            };
            body.extend(self.cases(l, pp, &var(v.clone()), &iters, &present, sink)?);
            for &i in &pp.coiter {
                if pp.coiter.len() == 1 {
                    body.extend(iters[i].advance.clone());
                } else {
                    body.push(if_then(present(i), iters[i].advance.clone()));
                }
            }
            st.push(Stmt::While {
                cond: all(pp.coiter.iter().map(|&i| iters[i].valid.clone())),
                body,
            });
        }
        Ok(vec![Stmt::Block(st)])
    }

    /// A single unconverted iterator: a counted loop over coordinates or
    /// positions.
    fn counted(
        &mut self,
        l: &LoopNode,
        pp: &PointPlan,
        iters: &[Iter],
        v: &str,
        sink: Option<&Sink>,
    ) -> Result<Vec<Stmt>, CodegenError> {
        let i0 = pp.coiter[0];
        let it = &iters[i0];
        let ip = &l.iters[i0];
        let mut body = Vec::new();
        let (lo_var, hi) = match &it.valid {
            Expr::Bin(Op::Lt, a, b) => (a.to_string(), (**b).clone()),
            _ => unreachable!("counted iterator"),
        };
        if ip.value_iter {
            body.push(Stmt::Decl(
                Ty::Idx,
                v.to_string(),
                Some(var(lo_var.clone())),
            ));
            let present = |_: usize| Expr::Bool(true);
            body.extend(self.cases(l, pp, &var(v.to_string()), iters, &present, sink)?);
        } else {
            let mut inner = vec![Stmt::Decl(Ty::Idx, v.to_string(), Some(it.coord.clone()))];
            let present = |_: usize| Expr::Bool(true);
            inner.extend(self.cases(l, pp, &var(v.to_string()), iters, &present, sink)?);
            let found = match &it.read[0] {
                Stmt::Level(c) => var(c.outs[1].clone()),
                _ => unreachable!(),
            };
            body.push(it.read[0].clone());
            body.push(if_then(found, inner));
        }
        let mut init = it.init.clone();
        let lo = take_cursor(&mut init, &lo_var);
        init.push(Stmt::ForRange {
            var: lo_var,
            lo,
            hi,
            body,
        });
        Ok(init)
    }

    fn fused(&mut self, l: &LoopNode, sink: Option<&Sink>) -> Result<Vec<Stmt>, CodegenError> {
        let v = self.var_name(l.var);
        let it = self.iter(&l.iters[0], &v);
        let pp = &l.points[0];
        let head = l.iters[0].dim;
        let (lo_var, hi) = match &it.valid {
            Expr::Bin(Op::Lt, a, b) => (a.to_string(), (**b).clone()),
            _ => unreachable!(),
        };
        let mut init = it.init.clone();
        let lo = take_cursor(&mut init, &lo_var);
        let mut body = Vec::new();
        let found = if l.iters[0].value_iter {
            body.push(Stmt::Decl(Ty::Idx, v.clone(), Some(var(lo_var.clone()))));
            body.extend(it.bind_stmts.clone());
            Expr::Bool(true)
        } else {
            body.push(it.read[0].clone());
            match &it.read[0] {
                Stmt::Level(c) => {
                    let (c0, f) = (c.outs[0].clone(), c.outs[1].clone());
                    body.push(Stmt::Decl(Ty::Idx, v.clone(), Some(var(c0))));
                    var(f)
                }
                _ => unreachable!(),
            }
        };
        let old = self.bind(head.access, it.bind.clone());
        let inner = self.fused_rest(l, &pp.locate, &var(v.clone()), &l.fused, sink);
        self.bound[head.access] = old;
        body.push(if_then(found, inner?));
        let mut st = init;
        st.push(Stmt::ForRange {
            var: lo_var,
            lo,
            hi,
            body,
        });
        Ok(vec![Stmt::Block(st)])
    }

    /// Locate `locate` at `c`, then descend into the remaining fused steps.
    fn fused_rest(
        &mut self,
        l: &LoopNode,
        locate: &[Dim],
        c: &Expr,
        steps: &[FusedStep],
        sink: Option<&Sink>,
    ) -> Result<Vec<Stmt>, CodegenError> {
        let (mut st, located) = self.locates(locate, c);
        let mut saved = Vec::new();
        for (d, p, _) in &located {
            saved.push((d.access, self.bind(d.access, Bound::Single(p.clone()))));
        }
        let cond = all(located.iter().map(|x| x.2.clone()));
        let inner = match steps.split_first() {
            None => self.body(l, 0, sink),
            Some((step, rest)) => {
                let d = step.dim;
                let w = self.var_name(step.var);
                let p = self.pname(d);
                let pp = self.parent_single(d);
                let pl = self.prefix_last(d);
                let cw = format!("{w}{}", self.labels[d.access]);
                let f = format!("f{}{}", self.labels[d.access], d.level + 1);
                let mut s = vec![
                    self.call(d, F::PosBounds, vec![pp], &[p.clone(), format!("{p}_end")]),
                    self.call(
                        d,
                        F::PosAccess,
                        vec![var(p.clone()), pl],
                        &[cw.clone(), f.clone()],
                    ),
                    Stmt::Decl(Ty::Idx, w.clone(), Some(var(cw))),
                ];
                let old = self.bind(d.access, Bound::Single(var(p)));
                let r = self.fused_rest(l, &step.locate, &var(w), rest, sink);
                self.bound[d.access] = old;
                s.push(if_then(var(f), r?));
                Ok(s)
            }
        };
        for (a, old) in saved.into_iter().rev() {
            self.bound[a] = old;
        }
        st.push(if_then(cond, inner?));
        Ok(st)
    }

    fn derived(
        &mut self,
        l: &LoopNode,
        d: &Derived,
        sink: Option<&Sink>,
    ) -> Result<Vec<Stmt>, CodegenError> {
        let v = self.var_name(l.var);
        let c = add(
            mul(var(self.var_name(d.outer)), int(d.block as i64)),
            var(self.var_name(d.inner)),
        );
        let pp = &l.points[0];
        let present = |_: usize| Expr::Bool(false);
        let body = self.cases(l, pp, &var(v.clone()), &[], &present, sink)?;
        Ok(vec![Stmt::Block(vec![
            Stmt::Decl(Ty::Idx, v.clone(), Some(c)),
            if_then(lt(var(v), int(d.extent as i64)), body),
        ])])
    }
}

fn buf_pos(buf: &str, i: Expr) -> Expr {
    load(format!("{buf}.d"), add(mul(int(2), i), int(1)))
}

/// Run `body` once per position in the binding, with the position in `pv`.
fn for_each_pos(b: &Bound, pv: &str, body: Vec<Stmt>) -> Vec<Stmt> {
    match b {
        Bound::Single(p) => {
            let mut st = vec![Stmt::Decl(Ty::Idx, pv.to_string(), Some(p.clone()))];
            st.extend(body);
            vec![Stmt::Block(st)]
        }
        Bound::Range(lo, hi) => vec![Stmt::ForRange {
            var: pv.to_string(),
            lo: lo.clone(),
            hi: hi.clone(),
            body,
        }],
        Bound::List { buf, lo, hi } => {
            let k = format!("{pv}_k");
            let mut st = vec![Stmt::Decl(
                Ty::Idx,
                pv.to_string(),
                Some(buf_pos(buf, var(k.clone()))),
            )];
            st.extend(body);
            vec![Stmt::ForRange {
                var: k,
                lo: lo.clone(),
                hi: hi.clone(),
                body: st,
            }]
        }
    }
}

/// Rename the init output that declares the cursor `v`, so a counted loop
/// can own `v`; returns the loop's start.
fn take_cursor(init: &mut [Stmt], v: &str) -> Expr {
    for s in init.iter_mut() {
        if let Stmt::Level(c) = s {
            if let Some(o) = c.outs.iter_mut().find(|o| *o == v) {
                *o = format!("{v}_begin");
                return var(o.clone());
            }
        }
    }
    unreachable!("cursor {v} not declared")
}

// ---- output assembly ----

impl Lower<'_> {
    fn out_level(&self, k: usize) -> (String, LevelKind) {
        (
            format!("{}{}", self.labels[0], k + 1),
            self.s.tensors[0].format.levels[k].kind,
        )
    }

    fn out_call(&self, k: usize, func: F, args: Vec<Expr>, outs: &[String]) -> Stmt {
        Stmt::Level(LevelCall {
            tensor: self.labels[0].clone(),
            level: k + 1,
            kind: self.s.tensors[0].format.levels[k].kind,
            func,
            args,
            outs: outs.to_vec(),
        })
    }

    fn out_param(&mut self, name: String, k: usize, field: Field) {
        let tensor = self.s.graph.paths[0].tensor.clone();
        self.param(
            Param::Idx(name),
            Source {
                tensor,
                level: k,
                field,
            },
        );
    }

    fn vals_name(&self) -> String {
        format!("{}_vals", self.labels[0])
    }

    /// Declarations run before the nest, and the statements that finish the
    /// output and hand it to the caller.
    fn output_setup(&mut self) -> (Vec<Stmt>, Vec<Stmt>) {
        let vals = self.vals_name();
        let o = self.labels[0].clone();
        let n = self.s.tensors[0].format.levels.len();
        let mut init = vec![Stmt::Call("SL_OUT_VAL".into(), vec![var(vals.clone())])];
        let mut fin = Vec::new();
        let grow = |size: Expr| {
            Stmt::Call(
                "sl_grow_val".into(),
                vec![var(format!("&{vals}")), var(format!("&{vals}_cap")), size],
            )
        };
        let export = |k: usize, pos: Option<(String, Expr)>, crd: Option<(String, Expr)>| {
            let (p, np) = pos.map_or((var("NULL"), int(0)), |(a, n)| (var(a), n));
            let (c, nc) = crd.map_or((var("NULL"), int(0)), |(a, n)| (var(a), n));
            Stmt::Call(
                "sl_out_level".into(),
                vec![var("out"), int(k as i64), p, np, c, nc],
            )
        };
        match self.s.output {
            OutputMode::Scalar => {
                init.push(grow(int(1)));
                fin.push(Stmt::Call(
                    "sl_out_vals".into(),
                    vec![var("out"), var(vals), int(1)],
                ));
            }
            OutputMode::Insert => {
                let mut size = format!("{o}_size0");
                init.push(Stmt::Decl(Ty::Idx, size.clone(), Some(int(1))));
                for k in 0..n {
                    let (ln, kind) = self.out_level(k);
                    self.out_param(format!("{ln}_dim"), k, Field::Dim);
                    if kind == LevelKind::Hashed {
                        self.out_param(format!("{ln}_w"), k, Field::Width);
                        init.push(Stmt::Call(
                            "SL_OUT_IDX".into(),
                            vec![var(format!("{ln}_crd"))],
                        ));
                    }
                    let next = format!("{o}_size{}", k + 1);
                    init.push(self.out_call(
                        k,
                        F::Size,
                        vec![var(size.clone())],
                        std::slice::from_ref(&next),
                    ));
                    init.push(self.out_call(
                        k,
                        F::InsertInit,
                        vec![var(size), var(next.clone())],
                        &[],
                    ));
                    let crd = (kind == LevelKind::Hashed)
                        .then(|| (format!("{ln}_crd"), var(next.clone())));
                    fin.push(export(k, None, crd));
                    size = next;
                }
                init.push(grow(var(size.clone())));
                fin.push(Stmt::Call(
                    "sl_out_vals".into(),
                    vec![var("out"), var(vals), var(size)],
                ));
            }
            OutputMode::Append => {
                init.push(Stmt::Decl(
                    Ty::Bool,
                    format!("{o}_has_last"),
                    Some(Expr::Bool(false)),
                ));
                let mut psize = format!("{o}_size0");
                fin.push(Stmt::Decl(Ty::Idx, psize.clone(), Some(int(1))));
                for k in 0..n {
                    let (ln, kind) = self.out_level(k);
                    init.push(Stmt::Decl(Ty::Idx, format!("{ln}_last"), Some(int(0))));
                    init.push(Stmt::Decl(Ty::Idx, format!("{ln}_ppos"), Some(int(0))));
                    let size = format!("{o}_size{}", k + 1);
                    match kind {
                        LevelKind::Dense => {
                            self.out_param(format!("{ln}_dim"), k, Field::Dim);
                            fin.push(Stmt::Decl(
                                Ty::Idx,
                                size.clone(),
                                Some(mul(var(psize.clone()), var(format!("{ln}_dim")))),
                            ));
                            fin.push(export(k, None, None));
                        }
                        _ => {
                            init.push(Stmt::Call(
                                "SL_OUT_IDX".into(),
                                vec![var(format!("{ln}_crd"))],
                            ));
                            init.push(Stmt::Decl(Ty::Idx, format!("{ln}_count"), Some(int(0))));
                            let count = var(format!("{ln}_count"));
                            let mut pos = None;
                            if kind == LevelKind::Compressed {
                                init.push(Stmt::Call(
                                    "SL_OUT_IDX".into(),
                                    vec![var(format!("{ln}_pos"))],
                                ));
                                init.push(Stmt::Decl(Ty::Idx, format!("{ln}_open"), Some(int(-1))));
                                init.push(Stmt::Decl(Ty::Idx, format!("{ln}_begin"), Some(int(0))));
                                init.push(Stmt::Decl(
                                    Ty::Idx,
                                    format!("{ln}_last_edge"),
                                    Some(int(-1)),
                                ));
                                let open = var(format!("{ln}_open"));
                                fin.push(if_then(
                                    bin(Op::Le, int(0), open.clone()),
                                    vec![self.out_call(
                                        k,
                                        F::AppendEdges,
                                        vec![open, var(format!("{ln}_begin")), count.clone()],
                                        &[],
                                    )],
                                ));
                                pos = Some((format!("{ln}_pos"), add(var(psize.clone()), int(1))));
                            }
                            fin.push(self.out_call(
                                k,
                                F::AppendFinalize,
                                vec![var(psize.clone()), count.clone()],
                                &[],
                            ));
                            fin.push(Stmt::Decl(Ty::Idx, size.clone(), Some(count.clone())));
                            fin.push(export(k, pos, Some((format!("{ln}_crd"), count))));
                        }
                    }
                    psize = size;
                }
                fin.push(grow(var(psize.clone())));
                fin.push(Stmt::Call(
                    "sl_out_vals".into(),
                    vec![var("out"), var(vals), var(psize)],
                ));
            }
        }
        (init, fin)
    }

    /// Add `v` at the output coordinate formed by the output's index vars.
    fn write_out(&mut self, v: Expr) -> Vec<Stmt> {
        let vals = self.vals_name();
        let o = self.labels[0].clone();
        let coords: Vec<Expr> = self.s.graph.paths[0]
            .vars
            .iter()
            .map(|&x| var(self.var_name(x)))
            .collect();
        let n = coords.len();
        match self.s.output {
            OutputMode::Scalar => vec![Stmt::Accumulate(load(vals, int(0)), v)],
            OutputMode::Insert => {
                let mut st = Vec::new();
                let mut p = int(0);
                for (k, c) in coords.iter().enumerate() {
                    let (ln, _) = self.out_level(k);
                    st.push(self.out_call(k, F::InsertCoord, vec![p.clone(), c.clone()], &[]));
                    let (q, f) = (format!("p{ln}"), format!("f{ln}"));
                    st.push(self.out_call(k, F::Locate, vec![p, c.clone()], &[q.clone(), f]));
                    p = var(q);
                }
                st.push(Stmt::Accumulate(load(vals, p), v));
                st
            }
            OutputMode::Append => {
                let fd = format!("{o}_fd");
                let has = format!("{o}_has_last");
                let last = |k: usize| var(format!("{o}{}_last", k + 1));
                let ppos = |k: usize| var(format!("{o}{}_ppos", k + 1));
                let mut diff = vec![(
                    not(var(has.clone())),
                    vec![Stmt::Assign(fd.clone(), int(0))],
                )];
                for (k, c) in coords.iter().enumerate() {
                    diff.push((
                        bin(Op::Ne, last(k), c.clone()),
                        vec![Stmt::Assign(fd.clone(), int(k as i64))],
                    ));
                }
                let mut emit = Vec::new();
                let kinds: Vec<LevelKind> = (0..n).map(|k| self.out_level(k).1).collect();
                for k in (0..n).rev() {
                    let mut need = bin(Op::Le, var(fd.clone()), int(k as i64));
                    if k + 1 < n && kinds[k + 1] == LevelKind::Singleton {
                        need = bin(Op::Or, need, var(format!("{o}{}_need", k + 2)));
                    }
                    emit.push(Stmt::Decl(
                        Ty::Bool,
                        format!("{o}{}_need", k + 1),
                        Some(need),
                    ));
                }
                for (k, c) in coords.iter().enumerate() {
                    let (ln, kind) = self.out_level(k);
                    let parent = if k == 0 { int(0) } else { ppos(k - 1) };
                    let pp = format!("{ln}_ppos");
                    let body = match kind {
                        LevelKind::Dense => vec![Stmt::Assign(
                            pp,
                            add(mul(parent, var(format!("{ln}_dim"))), c.clone()),
                        )],
                        LevelKind::Compressed => {
                            let (open, begin, count) = (
                                format!("{ln}_open"),
                                format!("{ln}_begin"),
                                format!("{ln}_count"),
                            );
                            vec![
                                if_then(
                                    bin(Op::Ne, var(open.clone()), parent.clone()),
                                    vec![
                                        if_then(
                                            bin(Op::Le, int(0), var(open.clone())),
                                            vec![self.out_call(
                                                k,
                                                F::AppendEdges,
                                                vec![
                                                    var(open.clone()),
                                                    var(begin.clone()),
                                                    var(count.clone()),
                                                ],
                                                &[],
                                            )],
                                        ),
                                        Stmt::Assign(open, parent),
                                        Stmt::Assign(begin, var(count.clone())),
                                    ],
                                ),
                                self.out_call(
                                    k,
                                    F::AppendCoord,
                                    vec![var(count.clone()), c.clone()],
                                    &[],
                                ),
                                Stmt::Assign(pp, var(count.clone())),
                                Stmt::Assign(count.clone(), add(var(count), int(1))),
                            ]
                        }
                        _ => {
                            let count = format!("{ln}_count");
                            vec![
                                self.out_call(
                                    k,
                                    F::AppendCoord,
                                    vec![parent.clone(), c.clone()],
                                    &[],
                                ),
                                Stmt::Assign(pp, parent),
                                Stmt::Assign(count.clone(), add(var(count), int(1))),
                            ]
                        }
                    };
                    emit.push(if_then(var(format!("{ln}_need")), body));
                }
                let at = ppos(n - 1);
                emit.push(Stmt::Call(
                    "sl_grow_val".into(),
                    vec![
                        var(format!("&{vals}")),
                        var(format!("&{vals}_cap")),
                        add(at.clone(), int(1)),
                    ],
                ));
                emit.push(Stmt::Accumulate(load(vals.clone(), at.clone()), v.clone()));
                emit.push(Stmt::Assign(has, Expr::Bool(true)));
                for (k, c) in coords.iter().enumerate() {
                    emit.push(Stmt::Assign(format!("{o}{}_last", k + 1), c.clone()));
                }
                vec![
                    Stmt::Decl(Ty::Idx, fd.clone(), Some(int(n as i64))),
                    Stmt::If {
                        cases: diff,
                        other: Vec::new(),
                    },
                    Stmt::If {
                        cases: vec![(
                            eq(var(fd), int(n as i64)),
                            vec![Stmt::Accumulate(load(vals, at), v)],
                        )],
                        other: emit,
                    },
                ]
            }
        }
    }
}
