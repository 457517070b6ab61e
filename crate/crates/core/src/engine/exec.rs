//! Interpreter for loop schedules.

use super::iter::{LevelIter, PosSet};
use super::output::Assembler;
use super::schedule::{Derived, FusedStep, LoopNode, Node, Schedule};
use super::EngineError;
use crate::formats::TensorStorage;
use crate::lattice::{Dim, Expr};
use crate::scalar::{Idx, Scalar};

type R<T> = Result<T, EngineError>;

pub(crate) struct Exec<'a, T> {
    s: &'a Schedule,
    // per path; the output path has no storage
    tensors: Vec<Option<&'a TensorStorage<T>>>,
    pos: Vec<PosSet>,
    lc: Vec<Vec<Idx>>,
    var: Vec<Idx>,
    out_lc: Vec<Idx>,
    out: Assembler<T>,
    pub visits: u64,
}

impl<'a, T: Scalar> Exec<'a, T> {
    pub fn new(
        s: &'a Schedule,
        tensors: Vec<Option<&'a TensorStorage<T>>>,
        out: Assembler<T>,
    ) -> Self {
        let n = tensors.len();
        Exec {
            s,
            tensors,
            pos: vec![PosSet::Single(0); n],
            lc: vec![Vec::new(); n],
            var: vec![0; s.graph.vars.len()],
            out_lc: vec![0; s.graph.paths[0].vars.len()],
            out,
            visits: 0,
        }
    }

    pub fn run(mut self) -> R<(TensorStorage<T>, u64)> {
        self.node(&self.s.root)?;
        let visits = self.visits;
        Ok((self.out.finish()?, visits))
    }

    fn storage(&self, a: usize) -> &'a TensorStorage<T> {
        self.tensors[a].expect("input access")
    }

    fn node(&mut self, n: &'a Node) -> R<Option<T>> {
        match n {
            Node::Compute(e) => Ok(Some(self.eval(e))),
            Node::Write(inner) => {
                if let Some(v) = self.node(inner)? {
                    for (k, &v) in self.s.graph.paths[0].vars.iter().enumerate() {
                        self.out_lc[k] = self.var[v];
                    }
                    let lc = std::mem::take(&mut self.out_lc);
                    let r = self.out.write(&lc, v);
                    self.out_lc = lc;
                    r?;
                }
                Ok(None)
            }
            Node::Loop(l) => match &l.derived {
                Some(d) => self.derived(l, d),
                None if !l.fused.is_empty() => self.fused(l),
                None => self.merge(l),
            },
        }
    }

    fn eval(&self, e: &Expr) -> T {
        match e {
            Expr::Access(a) => {
                let vals = &self.storage(*a).vals;
                let mut s = T::zero();
                self.pos[*a].for_each(|p| s += vals[p as usize]);
                s
            }
            Expr::Lit(x) => T::from_f64_lossy(*x),
            Expr::Add(l, r) => self.eval(l) + self.eval(r),
            Expr::Mul(l, r) => self.eval(l) * self.eval(r),
        }
    }

    fn locate(&mut self, d: Dim, c: Idx) -> R<(Idx, bool)> {
        let level = &self.storage(d.access).levels[d.level];
        let pp = self.pos[d.access]
            .single()
            .expect("locate under a single position");
        let lc = &mut self.lc[d.access];
        lc.push(c);
        let r = level.locate(pp, lc);
        lc.pop();
        Ok(r?)
    }

    fn bind(&mut self, a: usize, c: Idx, p: PosSet) -> PosSet {
        self.lc[a].push(c);
        std::mem::replace(&mut self.pos[a], p)
    }

    fn unbind(&mut self, a: usize, old: PosSet) {
        self.lc[a].pop();
        self.pos[a] = old;
    }

    fn body(&mut self, l: &'a LoopNode, q: usize) -> R<Option<T>> {
        match &l.bodies[q] {
            Some(b) => self.node(b),
            None => Ok(None),
        }
    }

    fn merge(&mut self, l: &'a LoopNode) -> R<Option<T>> {
        let mut iters = Vec::with_capacity(l.iters.len());
        for ip in &l.iters {
            let a = ip.dim.access;
            let level = &self.storage(a).levels[ip.dim.level];
            iters.push(LevelIter::new(
                level,
                &self.pos[a],
                &mut self.lc[a],
                ip.directive,
            )?);
        }
        let mut acc: Option<T> = None;
        let mut found: Vec<(Idx, bool)> = Vec::new();
        for pp in &l.points {
            if pp.coiter.is_empty() {
                continue;
            }
            while pp.coiter.iter().all(|&i| iters[i].valid()) {
                let cand = pp
                    .coiter
                    .iter()
                    .map(|&i| iters[i].coord())
                    .min()
                    .unwrap_or(0);
                self.visits += 1;
                self.var[l.var] = cand;
                found.clear();
                for &d in &pp.locate {
                    found.push(self.locate(d, cand)?);
                }
                let case = pp.cases.iter().copied().find(|&q| {
                    l.lattice.points[q].dims.iter().all(|d| {
                        if let Some(k) = pp.locate.iter().position(|x| x == d) {
                            found[k].1
                        } else {
                            pp.coiter
                                .iter()
                                .any(|&i| l.iters[i].dim == *d && iters[i].coord() == cand)
                        }
                    })
                });
                if let Some(q) = case {
                    let mut saved = Vec::new();
                    for d in &l.lattice.points[q].dims {
                        let p = match pp.locate.iter().position(|x| x == d) {
                            Some(k) => PosSet::Single(found[k].0),
                            None => {
                                let i = pp
                                    .coiter
                                    .iter()
                                    .copied()
                                    .find(|&i| l.iters[i].dim == *d)
                                    .expect("coiterated");
                                iters[i].positions().clone()
                            }
                        };
                        saved.push((d.access, self.bind(d.access, cand, p)));
                    }
                    let r = self.body(l, q);
                    for (a, old) in saved.into_iter().rev() {
                        self.unbind(a, old);
                    }
                    if let Some(v) = r? {
                        acc = Some(acc.map_or(v, |s| s + v));
                    }
                }
                for &i in &pp.coiter {
                    if iters[i].coord() == cand {
                        let a = l.iters[i].dim.access;
                        let level = &self.storage(a).levels[l.iters[i].dim.level];
                        iters[i].advance(level, &mut self.lc[a])?;
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Locate `dims` at `c` and bind them all, or bind nothing if any is
    /// missing.
    fn bind_located(&mut self, dims: &[Dim], c: Idx, saved: &mut Vec<(usize, PosSet)>) -> R<bool> {
        let mut ps = Vec::with_capacity(dims.len());
        for &d in dims {
            let (p, ok) = self.locate(d, c)?;
            if !ok {
                return Ok(false);
            }
            ps.push(p);
        }
        for (&d, p) in dims.iter().zip(ps) {
            saved.push((d.access, self.bind(d.access, c, PosSet::Single(p))));
        }
        Ok(true)
    }

    fn restore(&mut self, saved: Vec<(usize, PosSet)>) {
        for (a, old) in saved.into_iter().rev() {
            self.unbind(a, old);
        }
    }

    fn fused(&mut self, l: &'a LoopNode) -> R<Option<T>> {
        let ip = &l.iters[0];
        let a = ip.dim.access;
        let level = &self.storage(a).levels[ip.dim.level];
        let mut it = LevelIter::new(level, &self.pos[a], &mut self.lc[a], ip.directive)?;
        let pp = &l.points[0];
        let mut acc: Option<T> = None;
        while it.valid() {
            let c = it.coord();
            self.visits += 1;
            self.var[l.var] = c;
            let mut saved = Vec::new();
            if self.bind_located(&pp.locate, c, &mut saved)? {
                saved.push((a, self.bind(a, c, it.positions().clone())));
                let r = self.fused_step(l, &l.fused);
                self.restore(saved);
                if let Some(v) = r? {
                    acc = Some(acc.map_or(v, |s| s + v));
                }
            }
            it.advance(level, &mut self.lc[a])?;
        }
        Ok(acc)
    }

    fn fused_step(&mut self, l: &'a LoopNode, steps: &'a [FusedStep]) -> R<Option<T>> {
        let Some((st, rest)) = steps.split_first() else {
            return self.body(l, 0);
        };
        let a = st.dim.access;
        let level = &self.storage(a).levels[st.dim.level];
        let pp = self.pos[a].single().expect("fused parent position");
        let (lo, hi) = level.pos_bounds(pp)?;
        let mut acc: Option<T> = None;
        for p in lo..hi {
            let (c, ok) = level.pos_access(p, &self.lc[a])?;
            if !ok {
                continue;
            }
            self.var[st.var] = c;
            let mut saved = Vec::new();
            if self.bind_located(&st.locate, c, &mut saved)? {
                saved.push((a, self.bind(a, c, PosSet::Single(p))));
                let r = self.fused_step(l, rest);
                self.restore(saved);
                if let Some(v) = r? {
                    acc = Some(acc.map_or(v, |s| s + v));
                }
            }
        }
        Ok(acc)
    }

    fn derived(&mut self, l: &'a LoopNode, d: &Derived) -> R<Option<T>> {
        let c = self.var[d.outer] * d.block as Idx + self.var[d.inner];
        if c as usize >= d.extent {
            return Ok(None);
        }
        self.visits += 1;
        self.var[l.var] = c;
        let pp = &l.points[0];
        let mut found = Vec::with_capacity(pp.locate.len());
        for &dim in &pp.locate {
            found.push(self.locate(dim, c)?);
        }
        let case = pp.cases.iter().copied().find(|&q| {
            l.lattice.points[q].dims.iter().all(|x| {
                pp.locate
                    .iter()
                    .position(|y| y == x)
                    .is_some_and(|k| found[k].1)
            })
        });
        let Some(q) = case else {
            return Ok(None);
        };
        let mut saved = Vec::new();
        for x in &l.lattice.points[q].dims {
            let k = pp.locate.iter().position(|y| y == x).expect("located");
            saved.push((x.access, self.bind(x.access, c, PosSet::Single(found[k].0))));
        }
        let r = self.body(l, q);
        self.restore(saved);
        r
    }
}
