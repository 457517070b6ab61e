//! Loop schedules: the plan both the interpreter and the code generator follow.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::EngineError;
use crate::formats::TensorFormat;
use crate::graph::{self, IterationGraph, TensorInfo};
use crate::lattice::{
    self, build_plan, split_coiter_locate, Dim, DimInfo, Directive, Expr, IterFacts, MergeLattice,
};
use crate::levels::{LevelFormat, LevelKind};
use crate::notation::Checked;

/// Shape of the position set bound to a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindKind {
    Single,
    /// A contiguous run of positions (chained duplicates).
    Range,
    /// An arbitrary list of positions (scratch-grouped duplicates).
    List,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterPlan {
    pub dim: Dim,
    pub parent: BindKind,
    pub directive: Directive,
    /// Binding handed to the level's descendants.
    pub child: BindKind,
    pub value_iter: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointPlan {
    pub point: usize,
    /// Indices into `LoopNode::iters`.
    pub coiter: Vec<usize>,
    pub locate: Vec<Dim>,
    /// Dominated lattice points, tried in order.
    pub cases: Vec<usize>,
}

/// A branchless level advanced together with its parent's loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedStep {
    pub var: usize,
    pub dim: Dim,
    pub locate: Vec<Dim>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derived {
    pub outer: usize,
    pub inner: usize,
    pub block: usize,
    pub extent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopNode {
    pub var: usize,
    pub lattice: MergeLattice,
    pub iters: Vec<IterPlan>,
    pub points: Vec<PointPlan>,
    pub fused: Vec<FusedStep>,
    pub derived: Option<Derived>,
    /// Indexed by lattice point; `None` for points never used as a case.
    pub bodies: Vec<Option<Node>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Loop(Box<LoopNode>),
    /// All accesses bound: evaluate.
    Compute(Expr),
    /// Evaluate the inner node and store its value at the output coordinate.
    Write(Box<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    Scalar,
    /// Every level locates or inserts: writes may come in any order.
    Insert,
    /// Levels append: writes arrive in lexicographic order.
    Append,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanOptions {
    pub fuse: bool,
    pub prune: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            fuse: true,
            prune: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub graph: IterationGraph,
    pub expr: Expr,
    /// Per path (0 is the output).
    pub tensors: Vec<TensorInfo>,
    pub names: Vec<String>,
    pub out_dims: Vec<usize>,
    pub output: OutputMode,
    pub write_depth: usize,
    pub root: Node,
}

#[derive(Clone)]
struct State {
    bound: Vec<usize>,
    kind: Vec<BindKind>,
}

struct Planner<'a> {
    g: &'a IterationGraph,
    tensors: &'a [TensorInfo],
    opts: PlanOptions,
    write_depth: usize,
    output: OutputMode,
}

struct Ctx<'a> {
    p: &'a Planner<'a>,
    st: &'a State,
}

impl Ctx<'_> {
    fn level(&self, d: Dim) -> &LevelFormat {
        &self.p.tensors[d.access].format.levels[d.level]
    }
}

impl DimInfo for Ctx<'_> {
    fn can_locate(&self, d: Dim) -> bool {
        self.level(d).kind.has_locate() && self.st.kind[d.access] == BindKind::Single
    }
    fn is_full(&self, d: Dim) -> bool {
        self.level(d).props.full
    }
    fn is_dense(&self, d: Dim) -> bool {
        self.level(d).kind == LevelKind::Dense
    }
}

impl Schedule {
    pub fn build(
        checked: &Checked,
        inputs: &BTreeMap<String, TensorInfo>,
        out_format: &TensorFormat,
        opts: PlanOptions,
    ) -> Result<Schedule, EngineError> {
        let a = &checked.assignment;
        let out_dims: Vec<usize> = a.lhs.vars.iter().map(|v| checked.extents[v]).collect();
        if out_format.order != out_dims.len() {
            return Err(EngineError::UnsupportedOutput(format!(
                "output format has order {} but `{}` has order {}",
                out_format.order,
                a.lhs.tensor,
                out_dims.len()
            )));
        }
        let mut infos = inputs.clone();
        infos.insert(
            a.lhs.tensor.clone(),
            TensorInfo::from_format(out_format, &out_dims),
        );
        let g = graph::build(checked, &infos)?;
        let tensors: Vec<TensorInfo> = g.paths.iter().map(|p| infos[&p.tensor].clone()).collect();
        let names = g.paths.iter().map(|p| p.tensor.clone()).collect();
        let expr = Expr::from_index_expr(&a.rhs);
        let output = output_mode(&g, out_format)?;
        let write_depth = g
            .order
            .iter()
            .enumerate()
            .filter(|(_, &v)| !g.vars[v].reduction)
            .map(|(i, _)| i + 1)
            .max()
            .unwrap_or(0);
        let planner = Planner {
            g: &g,
            tensors: &tensors,
            opts,
            write_depth,
            output,
        };
        let st = State {
            bound: vec![0; tensors.len()],
            kind: vec![BindKind::Single; tensors.len()],
        };
        let root = planner.plan(0, &expr, &st)?;
        Ok(Schedule {
            graph: g,
            expr,
            tensors,
            names,
            out_dims,
            output,
            write_depth,
            root,
        })
    }

    pub fn dim_name(&self, d: Dim) -> String {
        format!("{}{}", self.names[d.access], d.level + 1)
    }

    fn dims_str(&self, ds: &[Dim]) -> String {
        let v: Vec<String> = ds.iter().map(|&d| self.dim_name(d)).collect();
        format!("{{{}}}", v.join(","))
    }

    /// One block per loop: lattice points with their co-iterated and
    /// located dims, and the conversion of each iterator.
    pub fn dump_lattices(&self) -> String {
        let mut s = String::new();
        self.dump_node(&self.root, 0, &mut s);
        s
    }

    fn dump_node(&self, n: &Node, depth: usize, s: &mut String) {
        let pad = "  ".repeat(depth);
        match n {
            Node::Compute(e) => {
                let _ = writeln!(s, "{pad}compute {}", e.show(&self.names));
            }
            Node::Write(inner) => {
                let _ = writeln!(s, "{pad}write {}", self.names[0]);
                self.dump_node(inner, depth + 1, s);
            }
            Node::Loop(l) => {
                let mut head = format!("{pad}loop {}", self.graph.var_name(l.var));
                for f in &l.fused {
                    let _ = write!(head, "+{}", self.graph.var_name(f.var));
                }
                if l.derived.is_some() {
                    head.push_str(" (derived)");
                }
                let _ = writeln!(s, "{head}: {} point(s)", l.lattice.points.len());
                for (q, p) in l.lattice.points.iter().enumerate() {
                    let (co, lo) = match l.points.iter().find(|pp| pp.point == q) {
                        Some(pp) => (
                            pp.coiter.iter().map(|&i| l.iters[i].dim).collect(),
                            pp.locate.clone(),
                        ),
                        None => {
                            // a dominated point reached from an earlier loop
                            let co: Vec<Dim> = p
                                .dims
                                .iter()
                                .copied()
                                .filter(|d| l.iters.iter().any(|it| it.dim == *d))
                                .collect();
                            let lo = p.dims.iter().copied().filter(|d| !co.contains(d)).collect();
                            (co, lo)
                        }
                    };
                    let _ = writeln!(
                        s,
                        "{pad}  point {q} {} coiter {} locate {} expr {}",
                        self.dims_str(&p.dims),
                        self.dims_str(&co),
                        self.dims_str(&lo),
                        p.expr.show(&self.names)
                    );
                }
                for it in &l.iters {
                    let _ = writeln!(s, "{pad}  iter {} {}", self.dim_name(it.dim), it.directive);
                }
                let mut located: Vec<Dim> = l
                    .points
                    .iter()
                    .flat_map(|p| p.locate.iter().copied())
                    .collect();
                located.extend(l.fused.iter().flat_map(|f| f.locate.iter().copied()));
                located.sort();
                located.dedup();
                for d in located {
                    let _ = writeln!(
                        s,
                        "{pad}  locate {} {}",
                        self.dim_name(d),
                        Directive::AccessByLocate
                    );
                }
                for f in &l.fused {
                    let _ = writeln!(s, "{pad}  fused {}", self.dim_name(f.dim));
                }
                for b in l.bodies.iter().flatten() {
                    self.dump_node(b, depth + 1, s);
                }
            }
        }
    }

    /// Visit every loop node, outermost first.
    pub fn loops(&self) -> Vec<&LoopNode> {
        fn go<'a>(n: &'a Node, out: &mut Vec<&'a LoopNode>) {
            match n {
                Node::Loop(l) => {
                    out.push(l);
                    for b in l.bodies.iter().flatten() {
                        go(b, out);
                    }
                }
                Node::Write(i) => go(i, out),
                Node::Compute(_) => {}
            }
        }
        let mut v = Vec::new();
        go(&self.root, &mut v);
        v
    }
}

fn output_mode(g: &IterationGraph, f: &TensorFormat) -> Result<OutputMode, EngineError> {
    if f.order == 0 {
        return Ok(OutputMode::Scalar);
    }
    let kinds: Vec<LevelKind> = f.levels.iter().map(|l| l.kind).collect();
    if kinds
        .iter()
        .all(|k| matches!(k, LevelKind::Dense | LevelKind::Hashed))
    {
        return Ok(OutputMode::Insert);
    }
    if kinds.iter().all(|k| {
        matches!(
            k,
            LevelKind::Dense | LevelKind::Compressed | LevelKind::Singleton
        )
    }) {
        let out = g.output_vars();
        if g.order[..out.len()] != *out {
            return Err(EngineError::UnsupportedOutput(format!(
                "format `{f}` appends coordinates, so the output variables must be the outermost loops in storage order; \
                 use an insert-capable (dense or hashed) output"
            )));
        }
        if out.iter().any(|&v| g.is_derived(v)) {
            return Err(EngineError::UnsupportedOutput(
                "blocked loops cannot produce coordinates in order for an appending output".into(),
            ));
        }
        for w in f.levels.windows(2) {
            if w[1].kind == LevelKind::Singleton && w[0].kind == LevelKind::Dense {
                return Err(EngineError::UnsupportedOutput(format!(
                    "format `{f}` has a singleton level under a dense level"
                )));
            }
        }
        return Ok(OutputMode::Append);
    }
    Err(EngineError::UnsupportedOutput(format!(
        "format `{f}` has levels that support neither insert nor append"
    )))
}

impl Planner<'_> {
    fn level(&self, d: Dim) -> &LevelFormat {
        &self.tensors[d.access].format.levels[d.level]
    }

    fn nlevels(&self, access: usize) -> usize {
        self.tensors[access].format.levels.len()
    }

    fn lattice(&self, var: usize, expr: &Expr, st: &State) -> Result<MergeLattice, EngineError> {
        let l = lattice::build(var, expr, self.g)?;
        let ctx = Ctx { p: self, st };
        Ok(if self.opts.prune {
            l.prune_full(|d| ctx.is_full(d))
        } else {
            l
        })
    }

    fn plan(&self, pos: usize, expr: &Expr, st: &State) -> Result<Node, EngineError> {
        let node = if pos == self.g.order.len() {
            Node::Compute(expr.clone())
        } else {
            Node::Loop(Box::new(self.plan_loop(pos, expr, st)?))
        };
        Ok(if pos == self.write_depth {
            Node::Write(Box::new(node))
        } else {
            node
        })
    }

    fn plan_loop(&self, pos: usize, expr: &Expr, st: &State) -> Result<LoopNode, EngineError> {
        let var = self.g.order[pos];
        let lat = self.lattice(var, expr, st)?;
        if let Some((vo, vi)) = self.g.vars[var].derived_from {
            return self.plan_derived(pos, var, vo, vi, lat, st);
        }
        let ctx = Ctx { p: self, st };
        let splits: Vec<(Vec<Dim>, Vec<Dim>)> = lat
            .points
            .iter()
            .map(|p| split_coiter_locate(p, &ctx))
            .collect();
        let mut u: Vec<Dim> = Vec::new();
        for (co, _) in &splits {
            for d in co {
                if !u.contains(d) {
                    u.push(*d);
                }
            }
        }
        if let Some(n) = self.try_fuse(pos, var, &lat, &u, st)? {
            return Ok(n);
        }
        let free = !self.g.vars[var].reduction;
        let must_order = u.len() > 1 || (self.output == OutputMode::Append && free);
        let iters: Vec<IterPlan> = u
            .iter()
            .map(|&d| self.iter_plan(d, st, must_order))
            .collect();
        let mut points = Vec::new();
        for (q, p) in lat.points.iter().enumerate() {
            let coiter: Vec<usize> = (0..u.len()).filter(|&i| p.dims.contains(&u[i])).collect();
            let locate: Vec<Dim> = p.dims.iter().copied().filter(|d| !u.contains(d)).collect();
            if let Some(d) = locate.iter().find(|&&d| !ctx.can_locate(d)) {
                return Err(EngineError::Unsupported(format!(
                    "level {} of `{}` can be neither iterated nor located here",
                    d.level, self.tensors[d.access].format
                )));
            }
            points.push(PointPlan {
                point: q,
                coiter,
                locate,
                cases: lat.dominated_points(q),
            });
        }
        let mut bodies = vec![None; lat.points.len()];
        for q in 0..lat.points.len() {
            let mut child = st.clone();
            for &d in &lat.points[q].dims {
                child.bound[d.access] = d.level + 1;
                child.kind[d.access] = match u.iter().position(|x| *x == d) {
                    Some(i) => iters[i].child,
                    None => BindKind::Single,
                };
            }
            bodies[q] = Some(self.plan(pos + 1, &lat.points[q].expr, &child)?);
        }
        Ok(LoopNode {
            var,
            lattice: lat,
            iters,
            points,
            fused: Vec::new(),
            derived: None,
            bodies,
        })
    }

    fn iter_plan(&self, d: Dim, st: &State, must_order: bool) -> IterPlan {
        let lf = self.level(d);
        let parent = st.kind[d.access];
        let value_iter = lf.kind.value_iterable();
        let leaf = d.level + 1 == self.nlevels(d.access);
        let child_chainable = !leaf && {
            let c = self.level(Dim {
                access: d.access,
                level: d.level + 1,
            });
            c.kind.position_iterable() && c.props.ordered && c.props.compact
        };
        let facts = IterFacts {
            ordered: value_iter || lf.props.ordered,
            unique: (value_iter || lf.props.unique) && parent == BindKind::Single,
            compact: lf.props.compact,
            gathered_parent: parent == BindKind::List || (parent == BindKind::Range && value_iter),
            child_chainable,
            leaf,
        };
        let directive = build_plan(facts, must_order);
        let child = match directive {
            Directive::DedupChained => BindKind::Range,
            Directive::DedupScratch | Directive::ReorderDedupScratch => BindKind::List,
            _ => BindKind::Single,
        };
        IterPlan {
            dim: d,
            parent,
            directive,
            child,
            value_iter,
        }
    }

    fn plan_derived(
        &self,
        pos: usize,
        var: usize,
        outer: usize,
        inner: usize,
        lat: MergeLattice,
        st: &State,
    ) -> Result<LoopNode, EngineError> {
        let ctx = Ctx { p: self, st };
        let top = lat.top().dims.clone();
        if let Some(d) = top.iter().find(|&&d| !ctx.can_locate(d)) {
            return Err(EngineError::Unsupported(format!(
                "`{}` is blocked in one operand, so level {} of `{}` would need locate",
                self.g.var_name(var),
                d.level,
                self.tensors[d.access].format
            )));
        }
        let block = match self.g.vars[inner].kind {
            crate::graph::VarKind::Split { block, .. } => block,
            _ => unreachable!("inner split variable"),
        };
        let extent = self.g.vars[var].extent.unwrap_or(usize::MAX);
        let mut child = st.clone();
        for &d in &top {
            child.bound[d.access] = d.level + 1;
            child.kind[d.access] = BindKind::Single;
        }
        let mut bodies = vec![None; lat.points.len()];
        for q in 0..lat.points.len() {
            bodies[q] = Some(self.plan(pos + 1, &lat.points[q].expr, &child)?);
        }
        let points = vec![PointPlan {
            point: 0,
            coiter: Vec::new(),
            locate: top,
            cases: (0..lat.points.len()).collect(),
        }];
        Ok(LoopNode {
            var,
            lattice: lat,
            iters: Vec::new(),
            points,
            fused: Vec::new(),
            derived: Some(Derived {
                outer,
                inner,
                block,
                extent,
            }),
            bodies,
        })
    }

    /// Fuse a run of branchless levels of one access into the loop over
    /// their parent. Each variable must merge only that access, with all
    /// other operands located.
    fn try_fuse(
        &self,
        pos: usize,
        var: usize,
        lat: &MergeLattice,
        u: &[Dim],
        st: &State,
    ) -> Result<Option<LoopNode>, EngineError> {
        if !self.opts.fuse
            || lat.points.len() != 1
            || u.len() != 1
            || st.kind[u[0].access] != BindKind::Single
        {
            return Ok(None);
        }
        let head = u[0];
        let ordered_ok = |d: Dim| {
            self.output != OutputMode::Append
                || self.level(d).props.ordered
                || self.level(d).kind.value_iterable()
        };
        if !ordered_ok(head) {
            return Ok(None);
        }
        let mut state = st.clone();
        let ctx0 = Ctx { p: self, st };
        let head_locate: Vec<Dim> = lat
            .top()
            .dims
            .iter()
            .copied()
            .filter(|d| *d != head)
            .collect();
        if head_locate.iter().any(|&d| !ctx0.can_locate(d)) {
            return Ok(None);
        }
        for &d in &lat.top().dims {
            state.bound[d.access] = d.level + 1;
            state.kind[d.access] = BindKind::Single;
        }
        let mut expr = lat.top().expr.clone();
        let mut steps = Vec::new();
        let mut at = pos + 1;
        let mut prev = head;
        while at < self.g.order.len() {
            let w = self.g.order[at];
            if self.g.is_derived(w) {
                break;
            }
            let next = Dim {
                access: prev.access,
                level: prev.level + 1,
            };
            if next.level >= self.nlevels(next.access)
                || !self.level(next).props.branchless
                || !ordered_ok(next)
            {
                break;
            }
            if self.g.paths[next.access].vars[next.level] != w {
                break;
            }
            let lw = self.lattice(w, &expr, &state)?;
            if lw.points.len() != 1 {
                break;
            }
            let ctx = Ctx {
                p: self,
                st: &state,
            };
            let (co, lo) = split_coiter_locate(lw.top(), &ctx);
            if co != vec![next] || lo.iter().any(|&d| !ctx.can_locate(d)) {
                break;
            }
            for &d in &lw.top().dims {
                state.bound[d.access] = d.level + 1;
                state.kind[d.access] = BindKind::Single;
            }
            expr = lw.top().expr.clone();
            steps.push(FusedStep {
                var: w,
                dim: next,
                locate: lo,
            });
            prev = next;
            at += 1;
        }
        if steps.is_empty() {
            return Ok(None);
        }
        let iter = IterPlan {
            dim: head,
            parent: BindKind::Single,
            directive: Directive::None,
            child: BindKind::Single,
            value_iter: self.level(head).kind.value_iterable(),
        };
        let mut body = self.plan(at, &expr, &state)?;
        if pos < self.write_depth && self.write_depth < at {
            body = Node::Write(Box::new(body));
        }
        Ok(Some(LoopNode {
            var,
            lattice: lat.clone(),
            iters: vec![iter],
            points: vec![PointPlan {
                point: 0,
                coiter: vec![0],
                locate: head_locate,
                cases: vec![0],
            }],
            fused: steps,
            derived: None,
            bodies: vec![Some(body)],
        }))
    }
}
