//! Checks for the level and format invariants. Each returns a description
//! of the first violation, so the proptest suites and the acceptance
//! summary can share them.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use sparse_levels::engine::{Kernel, PlanOptions};
use sparse_levels::formats::PRESETS;
use sparse_levels::levels::{LevelError, LevelFunction, LevelKind};
use sparse_levels::{parse_format, Coords, Idx, LevelFormat, LevelStorage, Storage};

use super::{random, REL};

/// Call every level function on every kind and check that exactly the
/// functions outside the kind's capability set are rejected. Returns the
/// number of checks made.
pub fn capability_conformance() -> Result<usize, String> {
    let mut checks = 0;
    for kind in LevelKind::ALL {
        for f in LevelFunction::ALL {
            let mut l = LevelStorage::new(LevelFormat::new(kind));
            l.dim = 2;
            l.parent_dim = 2;
            l.segment = 2;
            l.width = 2;
            l.pos = vec![0, 1];
            l.crd = Arc::new(vec![0, -1]);
            l.offset = Arc::new(vec![0]);
            let rejected = matches!(l.probe(f), Err(LevelError::UnsupportedCapability { .. }));
            if rejected == kind.supports(f.capability()) {
                return Err(format!("{kind} {f}: rejected={rejected}"));
            }
            checks += 1;
        }
    }
    Ok(checks)
}

/// One child of a parent position: (coordinate, position, found).
type Child = (Idx, Idx, bool);

fn children(l: &LevelStorage, parent: Idx, prefix: &mut Vec<Idx>) -> Result<Vec<Child>, String> {
    let mut out = Vec::new();
    if l.kind().value_iterable() {
        let (lo, hi) = l.coord_bounds(prefix).map_err(|e| e.to_string())?;
        for i in lo..hi {
            prefix.push(i);
            let (p, found) = l.coord_access(parent, prefix).map_err(|e| e.to_string())?;
            prefix.pop();
            out.push((i, p, found));
        }
    } else {
        let (lo, hi) = l.pos_bounds(parent).map_err(|e| e.to_string())?;
        for p in lo..hi {
            let (i, found) = l.pos_access(p, prefix).map_err(|e| e.to_string())?;
            out.push((i, p, found));
        }
    }
    Ok(out)
}

fn check_level(l: &LevelStorage, parent: Idx, kids: &[Child]) -> Result<(), String> {
    let props = l.format.props;
    let kind = l.kind();
    let found: Vec<Idx> = kids.iter().filter(|c| c.2).map(|c| c.0).collect();
    if props.full {
        let want: Vec<Idx> = (0..l.dim as Idx).collect();
        let got: BTreeSet<Idx> = found.iter().copied().collect();
        if got.into_iter().collect::<Vec<_>>() != want {
            return Err(format!("{kind} full: parent {parent} has {found:?}"));
        }
    }
    if props.ordered {
        let ok = if props.unique {
            found.windows(2).all(|w| w[0] < w[1])
        } else {
            // non-decreasing implies equal coordinates are adjacent
            found.windows(2).all(|w| w[0] <= w[1])
        };
        if !ok {
            return Err(format!("{kind} ordered/unique={}: {found:?}", props.unique));
        }
    }
    if props.branchless && matches!(kind, LevelKind::Singleton | LevelKind::Offset) {
        let b = l.pos_bounds(parent).map_err(|e| e.to_string())?;
        if b != (parent, parent + 1) {
            return Err(format!("{kind} branchless: pos_bounds({parent}) = {b:?}"));
        }
    }
    if props.compact
        && matches!(kind, LevelKind::Compressed | LevelKind::Singleton)
        && kids.iter().any(|c| !c.2)
    {
        return Err(format!("{kind} compact: unfound position under {parent}"));
    }
    Ok(())
}

fn walk(s: &Storage, k: usize, parent: Idx, prefix: &mut Vec<Idx>) -> Result<usize, String> {
    if k == s.levels.len() {
        return Ok(0);
    }
    let l = &s.levels[k];
    let kids = children(l, parent, prefix)?;
    check_level(l, parent, &kids)?;
    let mut n = 1;
    for (i, p, found) in kids {
        if found {
            prefix.push(i);
            n += walk(s, k + 1, p, prefix)?;
            prefix.pop();
        }
    }
    Ok(n)
}

/// Enumerate every parent of every level of `s` and check the declared
/// full/ordered/unique/branchless/compact properties. Returns the number
/// of parents visited.
pub fn level_properties(s: &Storage) -> Result<usize, String> {
    if s.levels.is_empty() {
        return Ok(0);
    }
    walk(s, 0, 0, &mut Vec::new())
}

/// Append `rows[p]` under parent `p` of a fresh compressed level and read
/// every row back by position iteration.
pub fn append_round_trip(rows: &[Vec<Idx>]) -> Result<(), String> {
    let mut l = LevelStorage::new(LevelFormat::compressed());
    let e = |e: LevelError| e.to_string();
    l.append_init(rows.len(), 0).map_err(e)?;
    let mut pos = 0;
    for (p, row) in rows.iter().enumerate() {
        let begin = pos;
        for &c in row {
            l.append_coord(pos, c).map_err(e)?;
            pos += 1;
        }
        l.append_edges(p as Idx, begin, pos).map_err(e)?;
    }
    l.append_finalize(rows.len(), pos as usize).map_err(e)?;
    for (p, row) in rows.iter().enumerate() {
        let (lo, hi) = l.pos_bounds(p as Idx).map_err(e)?;
        let mut got = Vec::new();
        for q in lo..hi {
            got.push(l.pos_access(q, &[p as Idx]).map_err(e)?.0);
        }
        if &got != row {
            return Err(format!("row {p}: appended {row:?}, read {got:?}"));
        }
    }
    Ok(())
}

/// Insert `sets[p]` under parent `p` of a hashed level of width `width` and
/// check that locate finds exactly the inserted coordinates in `0..dim`.
pub fn insert_round_trip(sets: &[BTreeSet<Idx>], width: usize, dim: usize) -> Result<(), String> {
    let mut l = LevelStorage::new(LevelFormat::hashed());
    l.width = width;
    l.dim = dim;
    let e = |e: LevelError| e.to_string();
    let size = l.size(sets.len()).map_err(e)?;
    l.insert_init(sets.len(), size).map_err(e)?;
    for (p, set) in sets.iter().enumerate() {
        for &c in set {
            l.insert_coord(p as Idx, c).map_err(e)?;
        }
    }
    l.insert_finalize(sets.len(), size).map_err(e)?;
    for (p, set) in sets.iter().enumerate() {
        for c in 0..dim as Idx {
            let (_, found) = l.locate(p as Idx, &[p as Idx, c]).map_err(e)?;
            if found != set.contains(&c) {
                return Err(format!("parent {p} coordinate {c}: found={found}"));
            }
        }
    }
    Ok(())
}

/// Presets and the tensor orders they are tested at.
pub fn preset_orders() -> Vec<(&'static str, usize)> {
    let mut out = Vec::new();
    for &p in PRESETS {
        for order in 1..=3 {
            if parse_format(p, Some(order)).is_ok() {
                out.push((p, order));
            }
        }
    }
    out
}

/// Assemble `list` into `spec`, check level properties, and compare the
/// canonical enumeration with the canonical input.
pub fn preset_round_trip(spec: &str, list: &Coords) -> Result<(), String> {
    let f = parse_format(spec, Some(list.order())).map_err(|e| e.to_string())?;
    let s = Storage::assemble(&f, &list.dims, list).map_err(|e| format!("{spec}: {e}"))?;
    level_properties(&s).map_err(|e| format!("{spec}: {e}"))?;
    let got = s.to_coords().map_err(|e| e.to_string())?;
    if got.pruned() == list.canonical().pruned() {
        Ok(())
    } else {
        Err(format!("{spec}: round trip changed {:?}", list.dims))
    }
}

/// Kernels for the plan-option comparisons: (expression, operand formats,
/// output format). Dims come from `dims_for`.
pub const OPTION_CASES: &[(&str, &[&str], &str)] = &[
    (
        "A(i,j) = B(i,j) + C(i,j)",
        &["csr", "{compressed(f,~u),singleton}"],
        "dense",
    ),
    ("A(i,j) = B(i,j) + C(i,j)", &["csr", "coo"], "dense"),
    ("A(i,j) = B(i,j) * C(i,j)", &["dcsr", "dense"], "dense"),
    ("A(i,j) = B(i,j) + C(i,j)", &["dense", "csr"], "csr"),
    ("A(i,j) = B(i,j) * C(i,j)", &["coo", "csr"], "dense"),
    ("y(i) = B(i,j) * x(j)", &["coo", "dense"], "dense"),
    (
        "y(i) = B(i,j) * x(j)",
        &["coo-aos", "sparse-vector"],
        "dense",
    ),
    ("y(i) = B(i,j) * x(j)", &["dia", "dense"], "dense"),
    ("y(i) = B(i,j) * x(j)", &["ell", "hash-vector"], "dense"),
    (
        "a(i) = b(i) + c(i) + d(i)",
        &["sparse-vector", "hash-vector", "dense"],
        "dense",
    ),
    ("A(i,j) = B(i,j,k) * c(k)", &["coo-3", "dense"], "dense"),
    (
        "A(i,j) = B(i,j,k) * c(k)",
        &["csf", "sparse-vector"],
        "dense",
    ),
    ("A(i,j,k) = B(i,j,k) + C(i,j,k)", &["coo-3", "csf"], "dense"),
    (
        "A(i,j) = B(i,k,l) * C(k,j) * D(l,j)",
        &["coo-3", "dense", "dense"],
        "dense",
    ),
    ("a() = B(i,j) * C(i,j)", &["coo", "csr"], "dense"),
];

/// Operand dims for `expr` with every index of extent `n`.
pub fn operand_dims(expr: &str, n: usize) -> Vec<Vec<usize>> {
    let a = sparse_levels::notation::parse(expr).unwrap();
    a.rhs
        .accesses()
        .iter()
        .map(|acc| vec![n; acc.vars.len()])
        .collect()
}

/// Add an entry to every empty row so a format declaring full rows holds.
pub fn fill_rows(list: &Coords) -> Coords {
    let rows: BTreeSet<Idx> = list.entries.iter().map(|e| e.0[0]).collect();
    let mut out = list.clone();
    for i in 0..list.dims[0] as Idx {
        if !rows.contains(&i) {
            out.push(vec![i, i % list.dims[1] as Idx], 1.0);
        }
    }
    out.canonical()
}

/// Evaluate one option case under all four combinations of `prune` and
/// `fuse` and check that the canonical results agree.
pub fn options_agree(case: usize, n: usize, density: f64, seed: u64) -> Result<(), String> {
    let (expr, formats, out) = OPTION_CASES[case];
    let dims = operand_dims(expr, n);
    let a = sparse_levels::notation::parse(expr).unwrap();
    let tensors: Vec<String> = a
        .rhs
        .accesses()
        .iter()
        .map(|acc| acc.tensor.clone())
        .collect();
    let mut operands: BTreeMap<String, Storage> = BTreeMap::new();
    for (k, ((t, f), d)) in tensors.iter().zip(formats.iter()).zip(&dims).enumerate() {
        let mut list = random(d, density, seed.wrapping_mul(7).wrapping_add(k as u64));
        if f.contains("(f") {
            list = fill_rows(&list);
        }
        let fmt = parse_format(f, Some(d.len())).map_err(|e| e.to_string())?;
        let s = Storage::assemble(&fmt, d, &list).map_err(|e| e.to_string())?;
        operands.insert(t.clone(), s);
    }
    let order = a.lhs.vars.len();
    let out_f = parse_format(out, Some(order)).map_err(|e| e.to_string())?;
    let mut results = Vec::new();
    for prune in [true, false] {
        for fuse in [true, false] {
            let k = Kernel::for_operands(expr, &operands, &out_f, PlanOptions { fuse, prune })
                .map_err(|e| format!("{expr} prune={prune} fuse={fuse}: {e}"))?;
            let r = k.run(&operands).map_err(|e| e.to_string())?;
            results.push((
                (prune, fuse),
                r.to_coords().map_err(|e| e.to_string())?.pruned(),
            ));
        }
    }
    let base = &results[0].1;
    for (opt, r) in &results[1..] {
        if !r.approx_eq(base, REL) {
            return Err(format!("{expr} {formats:?}: options {opt:?} disagree"));
        }
    }
    Ok(())
}
