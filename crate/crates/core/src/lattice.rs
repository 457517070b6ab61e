//! Merge lattices, coiterate/locate splits and iterator conversion plans.

use std::fmt;

use thiserror::Error;

use crate::graph::IterationGraph;
use crate::notation::IndexExpr;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("unsupported merge over `{var}`: {msg}")]
    Unsupported { var: String, msg: String },
}

/// Right-hand side with accesses numbered by path index (1-based; path 0
/// is the output).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Access(usize),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Lit(f64),
}

impl Expr {
    pub fn from_index_expr(e: &IndexExpr) -> Expr {
        let mut next = 1;
        Self::lower(e, &mut next)
    }

    fn lower(e: &IndexExpr, next: &mut usize) -> Expr {
        match e {
            IndexExpr::Access(_) => {
                *next += 1;
                Expr::Access(*next - 1)
            }
            IndexExpr::Add(l, r) => {
                let l = Self::lower(l, next);
                Expr::Add(Box::new(l), Box::new(Self::lower(r, next)))
            }
            IndexExpr::Mul(l, r) => {
                let l = Self::lower(l, next);
                Expr::Mul(Box::new(l), Box::new(Self::lower(r, next)))
            }
            IndexExpr::Literal(v) => Expr::Lit(*v),
        }
    }

    pub fn accesses(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.walk(&mut |a| out.push(a));
        out
    }

    fn walk(&self, f: &mut impl FnMut(usize)) {
        match self {
            Expr::Access(a) => f(*a),
            Expr::Add(l, r) | Expr::Mul(l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Expr::Lit(_) => {}
        }
    }

    pub fn show(&self, names: &[String]) -> String {
        match self {
            Expr::Access(a) => names[*a].clone(),
            Expr::Lit(v) => format!("{v:?}"),
            Expr::Add(l, r) => format!("({} + {})", l.show(names), r.show(names)),
            Expr::Mul(l, r) => format!("{} * {}", l.show(names), r.show(names)),
        }
    }
}

/// One storage level of one access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dim {
    pub access: usize,
    pub level: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticePoint {
    /// Sorted.
    pub dims: Vec<Dim>,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeLattice {
    pub var: usize,
    pub points: Vec<LatticePoint>,
}

fn union(a: &[Dim], b: &[Dim]) -> Vec<Dim> {
    let mut d: Vec<Dim> = a.iter().chain(b).copied().collect();
    d.sort_unstable();
    d.dedup();
    d
}

/// Keep the first point of each dim-set. A later point with the same dims
/// is a restriction of an earlier meet, whose expression already covers it.
fn dedup_points(points: Vec<LatticePoint>) -> Vec<LatticePoint> {
    let mut out: Vec<LatticePoint> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| q.dims == p.dims) {
            out.push(p);
        }
    }
    out
}

fn dim_of(g: &IterationGraph, access: usize, var: usize) -> Option<Dim> {
    g.paths[access]
        .vars
        .iter()
        .position(|&v| v == var)
        .map(|level| Dim { access, level })
}

/// Lattice construction: accesses give one point, products take pairwise
/// meets, sums take meets followed by the points of each side.
pub fn build(var: usize, expr: &Expr, g: &IterationGraph) -> Result<MergeLattice, LatticeError> {
    let points = construct(var, expr, g);
    if !g.is_derived(var) {
        if let Some(p) = points.iter().find(|p| p.dims.is_empty()) {
            let _ = p;
            return Err(LatticeError::Unsupported {
                var: g.var_name(var).to_string(),
                msg: "a term of a sum does not depend on this variable (broadcasting is not supported)".into(),
            });
        }
    }
    Ok(MergeLattice { var, points })
}

fn construct(var: usize, expr: &Expr, g: &IterationGraph) -> Vec<LatticePoint> {
    match expr {
        Expr::Access(a) => vec![LatticePoint {
            dims: dim_of(g, *a, var).into_iter().collect(),
            expr: expr.clone(),
        }],
        Expr::Lit(_) => vec![LatticePoint {
            dims: Vec::new(),
            expr: expr.clone(),
        }],
        Expr::Mul(l, r) => {
            let (lp, rp) = (construct(var, l, g), construct(var, r, g));
            let mut out = Vec::new();
            for a in &lp {
                for b in &rp {
                    out.push(LatticePoint {
                        dims: union(&a.dims, &b.dims),
                        expr: Expr::Mul(Box::new(a.expr.clone()), Box::new(b.expr.clone())),
                    });
                }
            }
            dedup_points(out)
        }
        Expr::Add(l, r) => {
            let (lp, rp) = (construct(var, l, g), construct(var, r, g));
            let mut out = Vec::new();
            for a in &lp {
                for b in &rp {
                    out.push(LatticePoint {
                        dims: union(&a.dims, &b.dims),
                        expr: Expr::Add(Box::new(a.expr.clone()), Box::new(b.expr.clone())),
                    });
                }
            }
            out.extend(lp);
            out.extend(rp);
            dedup_points(out)
        }
    }
}

impl MergeLattice {
    pub fn top(&self) -> &LatticePoint {
        &self.points[0]
    }

    /// Drop points that leave out a full dimension.
    pub fn prune_full(&self, is_full: impl Fn(Dim) -> bool) -> MergeLattice {
        let full: Vec<Dim> = self.points[0]
            .dims
            .iter()
            .copied()
            .filter(|&d| is_full(d))
            .collect();
        MergeLattice {
            var: self.var,
            points: self
                .points
                .iter()
                .filter(|p| full.iter().all(|d| p.dims.contains(d)))
                .cloned()
                .collect(),
        }
    }

    /// Indices of points whose dims are a subset of point `p`'s, in order.
    pub fn dominated_points(&self, p: usize) -> Vec<usize> {
        let top = &self.points[p].dims;
        (0..self.points.len())
            .filter(|&q| self.points[q].dims.iter().all(|d| top.contains(d)))
            .collect()
    }
}

/// Dimension facts the split needs.
pub trait DimInfo {
    fn can_locate(&self, d: Dim) -> bool;
    fn is_full(&self, d: Dim) -> bool;
    fn is_dense(&self, d: Dim) -> bool;
}

fn coiter_rec(e: &Expr, dims: &[Dim], info: &dyn DimInfo) -> Vec<Dim> {
    match e {
        Expr::Access(a) => dims.iter().copied().filter(|d| d.access == *a).collect(),
        Expr::Lit(_) => Vec::new(),
        Expr::Add(l, r) => union(&coiter_rec(l, dims, info), &coiter_rec(r, dims, info)),
        Expr::Mul(l, r) => {
            let cl = coiter_rec(l, dims, info);
            let cr = coiter_rec(r, dims, info);
            let keep = |c: &[Dim]| -> Vec<Dim> {
                c.iter().copied().filter(|&d| !info.can_locate(d)).collect()
            };
            let a = union(&cl, &keep(&cr));
            let b = union(&cr, &keep(&cl));
            let full = |s: &[Dim]| s.iter().filter(|&&d| info.is_full(d)).count();
            if a.is_empty() && !b.is_empty() {
                return b;
            }
            if b.is_empty() {
                return a;
            }
            if (b.len(), full(&b)) < (a.len(), full(&a)) {
                b
            } else {
                a
            }
        }
    }
}

/// Split a point's dims into those to co-iterate and those to locate.
pub fn split_coiter_locate(point: &LatticePoint, info: &dyn DimInfo) -> (Vec<Dim>, Vec<Dim>) {
    let mut coiter = coiter_rec(&point.expr, &point.dims, info);
    if coiter.is_empty() {
        // every operand can be located; keep one to drive the loop
        if let Some(&d) = point
            .dims
            .iter()
            .find(|&&d| info.is_full(d) && !info.is_dense(d))
            .or_else(|| point.dims.iter().find(|&&d| info.is_full(d)))
            .or(point.dims.first())
        {
            coiter.push(d);
        }
    }
    let full: Vec<Dim> = coiter
        .iter()
        .copied()
        .filter(|&d| info.is_full(d))
        .collect();
    if full.len() >= 2 {
        let keep = full
            .iter()
            .copied()
            .find(|&d| !info.can_locate(d))
            .or_else(|| full.iter().copied().find(|&d| info.is_dense(d)))
            .unwrap_or(full[0]);
        coiter.retain(|&d| d == keep || !info.is_full(d) || !info.can_locate(d));
    }
    let locate = point
        .dims
        .iter()
        .copied()
        .filter(|d| !coiter.contains(d))
        .collect();
    (coiter, locate)
}

/// How an iterator is adapted before merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Directive {
    None,
    DedupChained,
    DedupScratch,
    ReorderScratch,
    /// Reorder into scratch, then group equal coordinates.
    ReorderDedupScratch,
    AccessByLocate,
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Directive::None => "none",
            Directive::DedupChained => "dedup-chained",
            Directive::DedupScratch => "dedup-scratch",
            Directive::ReorderScratch => "reorder-scratch",
            Directive::ReorderDedupScratch => "reorder-scratch+dedup-scratch",
            Directive::AccessByLocate => "access-by-locate",
        })
    }
}

/// Facts about a co-iterated dimension used to choose its conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterFacts {
    pub ordered: bool,
    /// Unique with respect to the positions the iterator covers.
    pub unique: bool,
    pub compact: bool,
    /// The parent binding is a gathered list of positions.
    pub gathered_parent: bool,
    /// The child level exists, supports position iteration and is ordered
    /// and compact.
    pub child_chainable: bool,
    /// This is the last level.
    pub leaf: bool,
}

/// Conversion for one co-iterated dimension. `must_order` is set when the
/// dimension merges with others or the output needs ordered coordinates.
pub fn build_plan(f: IterFacts, must_order: bool) -> Directive {
    if f.gathered_parent {
        return Directive::DedupScratch;
    }
    let reorder = !f.ordered && must_order;
    match (reorder, f.unique) {
        (true, true) => Directive::ReorderScratch,
        (true, false) => Directive::ReorderDedupScratch,
        (false, true) => Directive::None,
        (false, false) => {
            if f.ordered && f.compact && (f.leaf || f.child_chainable) {
                Directive::DedupChained
            } else if !f.ordered {
                // unordered duplicates can only be grouped after sorting
                Directive::ReorderDedupScratch
            } else {
                Directive::DedupScratch
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::parse_format;
    use crate::graph::{build as build_graph, TensorInfo};
    use crate::notation::{parse, validate};
    use std::collections::BTreeMap;

    struct Setup {
        g: IterationGraph,
        expr: Expr,
        infos: Vec<TensorInfo>,
    }

    fn setup(text: &str, fmts: &[(&str, &str, &[usize])]) -> Setup {
        let a = parse(text).unwrap();
        let dims = fmts
            .iter()
            .map(|(n, _, d)| (n.to_string(), d.to_vec()))
            .collect();
        let c = validate(&a, &dims).unwrap();
        let map: BTreeMap<String, TensorInfo> = fmts
            .iter()
            .map(|(n, f, d)| {
                (
                    n.to_string(),
                    TensorInfo::from_format(&parse_format(f, Some(d.len())).unwrap(), d),
                )
            })
            .collect();
        let g = build_graph(&c, &map).unwrap();
        let infos = g.paths.iter().map(|p| map[&p.tensor].clone()).collect();
        Setup {
            g,
            expr: Expr::from_index_expr(&a.rhs),
            infos,
        }
    }

    impl DimInfo for Setup {
        fn can_locate(&self, d: Dim) -> bool {
            self.infos[d.access].format.levels[d.level]
                .kind
                .has_locate()
        }
        fn is_full(&self, d: Dim) -> bool {
            self.infos[d.access].format.levels[d.level].props.full
        }
        fn is_dense(&self, d: Dim) -> bool {
            self.infos[d.access].format.levels[d.level].kind == crate::levels::LevelKind::Dense
        }
    }

    fn lattice(s: &Setup, var: &str) -> MergeLattice {
        build(s.g.var_id(var).unwrap(), &s.expr, &s.g).unwrap()
    }

    fn d(access: usize, level: usize) -> Dim {
        Dim { access, level }
    }

    #[test]
    fn sparse_union_and_intersection() {
        let s = setup(
            "z(i) = x(i) + y(i)",
            &[
                ("z", "dense", &[5]),
                ("x", "sparse-vector", &[5]),
                ("y", "sparse-vector", &[5]),
            ],
        );
        let l = lattice(&s, "i");
        let dims: Vec<_> = l.points.iter().map(|p| p.dims.clone()).collect();
        assert_eq!(
            dims,
            vec![vec![d(1, 0), d(2, 0)], vec![d(1, 0)], vec![d(2, 0)]]
        );
        let s = setup(
            "z(i) = x(i) * y(i)",
            &[
                ("z", "dense", &[5]),
                ("x", "sparse-vector", &[5]),
                ("y", "sparse-vector", &[5]),
            ],
        );
        assert_eq!(lattice(&s, "i").points.len(), 1);
    }

    #[test]
    fn csr_plus_full_coo() {
        let s = setup(
            "A(i,j) = B(i,j) + C(i,j)",
            &[
                ("A", "dense", &[4, 6]),
                ("B", "csr", &[4, 6]),
                ("C", "{compressed(f,~u),singleton}", &[4, 6]),
            ],
        );
        let li = lattice(&s, "i");
        assert_eq!(li.points.len(), 3);
        let pruned = li.prune_full(|x| s.is_full(x));
        assert_eq!(pruned.points.len(), 1);
        assert_eq!(pruned.points[0].expr, li.points[0].expr);
        let lj = lattice(&s, "j");
        assert_eq!(lj.points.len(), 3);
        assert_eq!(lj.prune_full(|x| s.is_full(x)).points.len(), 3);
        assert_eq!(lj.dominated_points(1), vec![1]);
        assert_eq!(lj.dominated_points(0), vec![0, 1, 2]);
        // full rows: co-iterate the row level without locate, locate the dense one
        let (co, lo) = split_coiter_locate(&pruned.points[0], &s);
        assert_eq!(co, vec![d(2, 0)]);
        assert_eq!(lo, vec![d(1, 0)]);
    }

    #[test]
    fn sparse_times_dense_locates() {
        let s = setup(
            "z(i) = x(i) * y(i)",
            &[
                ("z", "dense", &[5]),
                ("x", "sparse-vector", &[5]),
                ("y", "dense", &[5]),
            ],
        );
        let l = lattice(&s, "i");
        assert_eq!(
            split_coiter_locate(&l.points[0], &s),
            (vec![d(1, 0)], vec![d(2, 0)])
        );
        let s = setup(
            "z(i) = x(i) * y(i)",
            &[
                ("z", "dense", &[5]),
                ("x", "sparse-vector", &[5]),
                ("y", "sparse-vector", &[5]),
            ],
        );
        let l = lattice(&s, "i");
        assert_eq!(
            split_coiter_locate(&l.points[0], &s).0,
            vec![d(1, 0), d(2, 0)]
        );
    }

    #[test]
    fn sum_times_dense() {
        let s = setup(
            "z(i) = (a(i) + b(i)) * c(i)",
            &[
                ("z", "dense", &[5]),
                ("a", "sparse-vector", &[5]),
                ("b", "sparse-vector", &[5]),
                ("c", "dense", &[5]),
            ],
        );
        let l = lattice(&s, "i");
        let (co, lo) = split_coiter_locate(&l.points[0], &s);
        assert_eq!(co, vec![d(1, 0), d(2, 0)]);
        assert_eq!(lo, vec![d(3, 0)]);
    }

    #[test]
    fn plan_directives() {
        let coo_rows = IterFacts {
            ordered: true,
            unique: false,
            compact: true,
            gathered_parent: false,
            child_chainable: true,
            leaf: false,
        };
        assert_eq!(build_plan(coo_rows, false), Directive::DedupChained);
        let hashed = IterFacts {
            ordered: false,
            unique: true,
            compact: false,
            gathered_parent: false,
            child_chainable: false,
            leaf: true,
        };
        assert_eq!(build_plan(hashed, true), Directive::ReorderScratch);
        assert_eq!(build_plan(hashed, false), Directive::None);
        let csr = IterFacts {
            unique: true,
            ordered: true,
            ..coo_rows
        };
        assert_eq!(build_plan(csr, true), Directive::None);
        let no_chain = IterFacts {
            child_chainable: false,
            ..coo_rows
        };
        assert_eq!(build_plan(no_chain, false), Directive::DedupScratch);
    }

    #[test]
    fn k_ary_point_counts() {
        for k in 1..=4usize {
            let names: Vec<String> = (0..k).map(|n| format!("x{n}")).collect();
            let mut fmts: Vec<(&str, &str, &[usize])> = vec![("z", "dense", &[4])];
            for n in &names {
                fmts.push((n.as_str(), "sparse-vector", &[4]));
            }
            let terms: Vec<String> = names.iter().map(|n| format!("{n}(i)")).collect();
            let s = setup(&format!("z(i) = {}", terms.join(" + ")), &fmts);
            assert_eq!(lattice(&s, "i").points.len(), (1 << k) - 1);
            let s = setup(&format!("z(i) = {}", terms.join(" * ")), &fmts);
            assert_eq!(lattice(&s, "i").points.len(), 1);
        }
    }

    #[test]
    fn broadcast_sum_unsupported() {
        let s = setup(
            "A(i,j) = B(i,j) + c(j)",
            &[
                ("A", "dense", &[3, 4]),
                ("B", "csr", &[3, 4]),
                ("c", "dense", &[4]),
            ],
        );
        assert!(build(s.g.var_id("i").unwrap(), &s.expr, &s.g).is_err());
    }
}
