//! Iteration graphs: index variables, tensor paths and variable ordering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::formats::{LevelDim, TensorFormat, TensorStorage};
use crate::notation::Checked;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error(
        "index variable ordering constraints form a cycle: {}; change the mode ordering of one of the tensors",
        .0.join(" -> ")
    )]
    Cycle(Vec<String>),
    #[error("unsupported iteration: {0}")]
    Unsupported(String),
    #[error("tensor `{0}` has no format binding")]
    Unbound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// A variable from the expression.
    Logical,
    /// A tensor-local structural coordinate (ELL slot, DIA diagonal).
    Synthetic,
    /// `v / block` or `v % block` of logical variable `of`.
    Split {
        of: usize,
        block: usize,
        outer: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexVar {
    pub name: String,
    /// `None` when the extent depends on data not yet seen.
    pub extent: Option<usize>,
    pub kind: VarKind,
    /// For a blocked logical variable: its (outer, inner) split variables.
    pub derived_from: Option<(usize, usize)>,
    /// Not an output variable.
    pub reduction: bool,
}

/// The index variables an access walks through, one per storage level.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorPath {
    pub tensor: String,
    pub vars: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationGraph {
    pub vars: Vec<IndexVar>,
    /// Path 0 is the output; the rest follow the right-hand side in order.
    pub paths: Vec<TensorPath>,
    pub order: Vec<usize>,
}

/// Format and shape of one bound tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorInfo {
    pub format: TensorFormat,
    pub dims: Vec<usize>,
    pub level_extents: Vec<Option<usize>>,
}

impl TensorInfo {
    pub fn from_format(format: &TensorFormat, dims: &[usize]) -> Self {
        let level_extents = format
            .level_dims
            .iter()
            .map(|d| match *d {
                LevelDim::Mode(m) => Some(dims[m]),
                LevelDim::BlockOuter { mode, block } => Some(dims[mode].div_ceil(block)),
                LevelDim::BlockInner { block, .. } => Some(block),
                LevelDim::Diagonal | LevelDim::Slot => None,
            })
            .collect();
        TensorInfo {
            format: format.clone(),
            dims: dims.to_vec(),
            level_extents,
        }
    }

    pub fn from_storage<T: Scalar>(s: &TensorStorage<T>) -> Self {
        TensorInfo {
            format: s.format.clone(),
            dims: s.dims.clone(),
            level_extents: (0..s.levels.len())
                .map(|k| Some(s.level_extent(k)))
                .collect(),
        }
    }
}

impl IterationGraph {
    pub fn var_name(&self, v: usize) -> &str {
        &self.vars[v].name
    }

    pub fn var_id(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn position(&self, v: usize) -> usize {
        self.order
            .iter()
            .position(|&x| x == v)
            .expect("ordered var")
    }

    pub fn is_derived(&self, v: usize) -> bool {
        self.vars[v].derived_from.is_some()
    }

    /// Output variables, in output storage order.
    pub fn output_vars(&self) -> &[usize] {
        &self.paths[0].vars
    }

    /// Edges implied by paths and by block splits.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for p in &self.paths {
            for w in p.vars.windows(2) {
                e.push((w[0], w[1]));
            }
        }
        for (v, var) in self.vars.iter().enumerate() {
            if let Some((o, i)) = var.derived_from {
                e.push((o, v));
                e.push((i, v));
            }
        }
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Text adjacency list plus the resolved order.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for v in &self.vars {
            let ext = v.extent.map_or("?".to_string(), |e| e.to_string());
            let kind = match v.kind {
                VarKind::Logical if v.derived_from.is_some() => "derived",
                VarKind::Logical => "logical",
                VarKind::Synthetic => "synthetic",
                VarKind::Split { .. } => "split",
            };
            let role = if v.reduction { "reduction" } else { "free" };
            let _ = writeln!(s, "var {} extent {} {} {}", v.name, ext, kind, role);
        }
        for p in &self.paths {
            let names: Vec<&str> = p.vars.iter().map(|&v| self.var_name(v)).collect();
            let _ = writeln!(s, "path {}: {}", p.tensor, names.join(" -> "));
        }
        let names: Vec<&str> = self.order.iter().map(|&v| self.var_name(v)).collect();
        let _ = writeln!(s, "order: {}", names.join(", "));
        s
    }
}

struct Builder {
    vars: Vec<IndexVar>,
}

impl Builder {
    fn intern(
        &mut self,
        name: String,
        extent: Option<usize>,
        kind: VarKind,
        reduction: bool,
    ) -> usize {
        if let Some(i) = self
            .vars
            .iter()
            .position(|v| v.name == name && v.kind == kind)
        {
            return i;
        }
        let mut name = name;
        while self.vars.iter().any(|v| v.name == name) {
            name.push('_');
        }
        self.vars.push(IndexVar {
            name,
            extent,
            kind,
            derived_from: None,
            reduction,
        });
        self.vars.len() - 1
    }
}

/// Build the iteration graph and resolve a variable order.
pub fn build(
    checked: &Checked,
    tensors: &BTreeMap<String, TensorInfo>,
) -> Result<IterationGraph, GraphError> {
    let a = &checked.assignment;
    let mut b = Builder { vars: Vec::new() };
    for name in a.vars() {
        let red = !a.lhs.vars.contains(&name);
        let ext = checked.extents.get(&name).copied();
        b.intern(name, ext, VarKind::Logical, red);
    }
    let mut paths = Vec::new();
    for (n, acc) in a.all_accesses().into_iter().enumerate() {
        let info = tensors
            .get(&acc.tensor)
            .ok_or_else(|| GraphError::Unbound(acc.tensor.clone()))?;
        if n == 0 && !info.format.is_simple() {
            return Err(GraphError::Unsupported(format!(
                "output format `{}` has structural levels",
                info.format
            )));
        }
        let logical = |m: usize| acc.vars[m].clone();
        let mut vars = Vec::with_capacity(info.format.levels.len());
        for (k, d) in info.format.level_dims.iter().enumerate() {
            let v = match *d {
                LevelDim::Mode(m) => b
                    .vars
                    .iter()
                    .position(|x| x.name == logical(m) && x.kind == VarKind::Logical)
                    .unwrap(),
                LevelDim::Diagonal | LevelDim::Slot => {
                    let tag = if *d == LevelDim::Slot { "slot" } else { "diag" };
                    b.intern(
                        format!("{}_{}{}", acc.tensor, tag, n),
                        info.level_extents[k],
                        VarKind::Synthetic,
                        true,
                    )
                }
                LevelDim::BlockOuter { mode, block } | LevelDim::BlockInner { mode, block } => {
                    let outer = matches!(d, LevelDim::BlockOuter { .. });
                    let of = b
                        .vars
                        .iter()
                        .position(|x| x.name == logical(mode) && x.kind == VarKind::Logical)
                        .unwrap();
                    if let Some(other) = b.vars.iter().find(|x| {
                        matches!(x.kind, VarKind::Split { of: o, block: bb, .. } if o == of && bb != block)
                    }) {
                        return Err(GraphError::Unsupported(format!(
                            "index variable `{}` is blocked with two different block sizes ({} and {block})",
                            b.vars[of].name,
                            match other.kind {
                                VarKind::Split { block, .. } => block,
                                _ => 0,
                            }
                        )));
                    }
                    let red = b.vars[of].reduction;
                    let name = format!(
                        "{}{}{}",
                        b.vars[of].name,
                        if outer { "o" } else { "i" },
                        block
                    );
                    b.intern(
                        name,
                        info.level_extents[k],
                        VarKind::Split { of, block, outer },
                        red,
                    )
                }
            };
            if vars.contains(&v) {
                return Err(GraphError::Unsupported(format!(
                    "access `{}` visits index variable `{}` twice",
                    acc.tensor, b.vars[v].name
                )));
            }
            vars.push(v);
        }
        paths.push(TensorPath {
            tensor: acc.tensor.clone(),
            vars,
        });
    }
    // link split pairs to the logical variable they recompose
    for v in 0..b.vars.len() {
        if let VarKind::Split {
            of,
            outer: true,
            block,
        } = b.vars[v].kind
        {
            let inner = b.vars.iter().position(|x| {
                x.kind
                    == VarKind::Split {
                        of,
                        block,
                        outer: false,
                    }
            });
            match inner {
                Some(i) => b.vars[of].derived_from = Some((v, i)),
                None => {
                    return Err(GraphError::Unsupported(format!(
                        "outer block variable `{}` has no inner partner",
                        b.vars[v].name
                    )))
                }
            }
        }
    }
    let mut g = IterationGraph {
        vars: b.vars,
        paths,
        order: Vec::new(),
    };
    g.order = order_vars(&g)?;
    Ok(g)
}

/// Topological order of the path edges. Among ready variables the one
/// that appears first (output, then operands, in path order) goes first.
pub fn order_vars(g: &IterationGraph) -> Result<Vec<usize>, GraphError> {
    let n = g.vars.len();
    let mut rank = vec![usize::MAX; n];
    let mut next = 0;
    for p in &g.paths {
        for &v in &p.vars {
            if rank[v] == usize::MAX {
                rank[v] = next;
                next += 1;
            }
        }
    }
    for r in rank.iter_mut().filter(|r| **r == usize::MAX) {
        *r = next;
        next += 1;
    }
    let edges = g.edges();
    let mut indeg = vec![0; n];
    for &(_, b) in &edges {
        indeg[b] += 1;
    }
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let pick = (0..n)
            .filter(|&v| !done[v] && indeg[v] == 0)
            .min_by_key(|&v| rank[v]);
        let Some(v) = pick else {
            return Err(GraphError::Cycle(find_cycle(g, &edges, &done)));
        };
        done[v] = true;
        order.push(v);
        for &(a, b) in &edges {
            if a == v {
                indeg[b] -= 1;
            }
        }
    }
    Ok(order)
}

fn find_cycle(g: &IterationGraph, edges: &[(usize, usize)], done: &[bool]) -> Vec<String> {
    // every remaining node has a remaining predecessor: walk backwards until a repeat
    let start = (0..g.vars.len()).find(|&v| !done[v]).unwrap();
    let mut seen = vec![start];
    let mut cur = start;
    loop {
        let pred = edges
            .iter()
            .find(|&&(a, b)| b == cur && !done[a])
            .map(|&(a, _)| a)
            .unwrap();
        if let Some(at) = seen.iter().position(|&x| x == pred) {
            let mut cyc: Vec<usize> = seen[at..].to_vec();
            cyc.reverse();
            cyc.push(cyc[0]);
            return cyc.into_iter().map(|v| g.vars[v].name.clone()).collect();
        }
        seen.push(pred);
        cur = pred;
    }
}
