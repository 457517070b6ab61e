use std::sync::Arc;

use super::{CoordList, FormatError, LevelDim, TensorFormat};
use crate::levels::{CrdLayout, LevelKind, LevelStorage};
use crate::scalar::{Idx, Scalar, EMPTY};

/// A tensor stored in some format: one [`LevelStorage`] per level plus the
/// values array indexed by positions of the last level.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorStorage<T> {
    pub format: TensorFormat,
    pub dims: Vec<usize>,
    pub levels: Vec<LevelStorage>,
    pub vals: Vec<T>,
}

type Group = (usize, usize);

struct Entry<T> {
    lc: Vec<Idx>,
    val: T,
}

impl<T: Scalar> TensorStorage<T> {
    /// A scalar (order-0 tensor).
    pub fn scalar(v: T) -> Self {
        TensorStorage {
            format: TensorFormat {
                name: "scalar".into(),
                order: 0,
                levels: Vec::new(),
                level_dims: Vec::new(),
                params: Default::default(),
            },
            dims: Vec::new(),
            levels: Vec::new(),
            vals: vec![v],
        }
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Number of stored values, including explicit zeros and padding.
    pub fn stored(&self) -> usize {
        self.vals.len()
    }

    /// Coordinate extent of storage level `k`.
    pub fn level_extent(&self, k: usize) -> usize {
        let l = &self.levels[k];
        match self.format.level_dims[k] {
            LevelDim::Mode(m) => self.dims[m],
            LevelDim::BlockOuter { mode, block } => self.dims[mode].div_ceil(block),
            LevelDim::BlockInner { block, .. } => block,
            LevelDim::Diagonal | LevelDim::Slot => l.dim,
        }
    }

    /// Number of positions at each level, from the top.
    pub fn level_sizes(&self) -> Vec<usize> {
        let mut n = 1;
        self.levels
            .iter()
            .map(|l| {
                n = l.num_positions(n);
                n
            })
            .collect()
    }

    /// Build storage for `list` in `format`. Duplicates are summed unless a
    /// non-unique level chain can keep them apart, in which case they are
    /// stored as given.
    pub fn assemble(
        format: &TensorFormat,
        dims: &[usize],
        list: &CoordList<T>,
    ) -> Result<Self, FormatError> {
        if format.order != dims.len() {
            return Err(FormatError::OrderMismatch {
                name: format.to_string(),
                expected: format.order,
                got: dims.len(),
            });
        }
        for (c, _) in &list.entries {
            if c.len() != dims.len() {
                return Err(FormatError::Arity {
                    expected: dims.len(),
                    got: c.len(),
                });
            }
            if c.iter().zip(dims).any(|(&x, &d)| x < 0 || x as usize >= d) {
                return Err(FormatError::OutOfBounds {
                    coord: c.clone(),
                    dims: dims.to_vec(),
                });
            }
        }
        if dims.is_empty() {
            let mut s = T::zero();
            for (_, v) in &list.entries {
                s += *v;
            }
            return Ok(Self::scalar(s));
        }
        let s = Builder::new(format, dims, list)?.run()?;
        if s.levels
            .iter()
            .any(|l| l.format.props.full && l.kind() != LevelKind::Dense)
        {
            s.check_full(0, 0, &mut Vec::new())?;
        }
        Ok(s)
    }

    // A non-dense level declared full must hold every coordinate under
    // every parent; the planner prunes lattice points on that promise.
    fn check_full(&self, k: usize, parent: Idx, prefix: &mut Vec<Idx>) -> Result<(), FormatError> {
        if k == self.levels.len() {
            return Ok(());
        }
        let l = &self.levels[k];
        let mut kids = Vec::new();
        if l.kind().value_iterable() {
            let (lo, hi) = l.coord_bounds(prefix)?;
            for i in lo..hi {
                prefix.push(i);
                let (p, found) = l.coord_access(parent, prefix)?;
                prefix.pop();
                if found {
                    kids.push((i, p));
                }
            }
        } else {
            let (lo, hi) = l.pos_bounds(parent)?;
            for p in lo..hi {
                let (i, found) = l.pos_access(p, prefix)?;
                if found {
                    kids.push((i, p));
                }
            }
        }
        if l.format.props.full {
            let mut seen: Vec<Idx> = kids.iter().map(|c| c.0).collect();
            seen.sort_unstable();
            seen.dedup();
            let n = self.level_extent(k);
            if seen.len() != n || !seen.iter().enumerate().all(|(a, &b)| a as Idx == b) {
                return Err(FormatError::Unrepresentable(format!(
                    "level {k} is declared full but a parent holds {} of {n} coordinates",
                    seen.len()
                )));
            }
        }
        for (i, p) in kids {
            prefix.push(i);
            self.check_full(k + 1, p, prefix)?;
            prefix.pop();
        }
        Ok(())
    }

    /// Every stored (coordinate, value) pair, in storage order. Padding and
    /// duplicates are reported as stored.
    pub fn enumerate(&self) -> Result<CoordList<T>, FormatError> {
        let mut out = CoordList::from_entries(self.dims.clone(), Vec::new());
        if self.levels.is_empty() {
            out.entries.push((Vec::new(), self.vals[0]));
            return Ok(out);
        }
        let mut prefix = Vec::with_capacity(self.levels.len());
        self.walk(0, 0, &mut prefix, &mut out.entries)?;
        Ok(out)
    }

    /// Canonical coordinate list of the stored tensor.
    pub fn to_coords(&self) -> Result<CoordList<T>, FormatError> {
        Ok(self.enumerate()?.canonical())
    }

    fn walk(
        &self,
        k: usize,
        parent: Idx,
        prefix: &mut Vec<Idx>,
        out: &mut Vec<(Vec<Idx>, T)>,
    ) -> Result<(), FormatError> {
        if k == self.levels.len() {
            if let Some(c) = self.logical(prefix) {
                out.push((c, self.vals[parent as usize]));
            }
            return Ok(());
        }
        let l = &self.levels[k];
        if l.kind().value_iterable() {
            let (lo, hi) = l.coord_bounds(prefix)?;
            for i in lo..hi {
                prefix.push(i);
                let (p, found) = l.coord_access(parent, prefix)?;
                if found {
                    self.walk(k + 1, p, prefix, out)?;
                }
                prefix.pop();
            }
        } else {
            let (lo, hi) = l.pos_bounds(parent)?;
            for p in lo..hi {
                let (i, found) = l.pos_access(p, prefix)?;
                if found {
                    prefix.push(i);
                    self.walk(k + 1, p, prefix, out)?;
                    prefix.pop();
                }
            }
        }
        Ok(())
    }

    /// Map level coordinates to a logical coordinate; `None` for block padding.
    pub fn logical(&self, lc: &[Idx]) -> Option<Vec<Idx>> {
        let mut c = vec![0; self.dims.len()];
        for (x, d) in lc.iter().zip(&self.format.level_dims) {
            match *d {
                LevelDim::Mode(m) => c[m] = *x,
                LevelDim::BlockOuter { mode, block } => c[mode] += *x * block as Idx,
                LevelDim::BlockInner { mode, .. } => c[mode] += *x,
                LevelDim::Diagonal | LevelDim::Slot => {}
            }
        }
        if c.iter()
            .zip(&self.dims)
            .all(|(&x, &d)| x >= 0 && (x as usize) < d)
        {
            Some(c)
        } else {
            None
        }
    }
}

struct Builder<'a, T> {
    format: &'a TensorFormat,
    dims: &'a [usize],
    entries: Vec<Entry<T>>,
    levels: Vec<LevelStorage>,
}

impl<'a, T: Scalar> Builder<'a, T> {
    fn new(
        format: &'a TensorFormat,
        dims: &'a [usize],
        list: &CoordList<T>,
    ) -> Result<Self, FormatError> {
        let keeps_dups = keeps_duplicates(format);
        let base = if keeps_dups {
            list.clone()
        } else {
            list.canonical()
        };
        let mut entries: Vec<(Vec<Idx>, T)> = base.entries;
        if keeps_dups {
            entries.sort_by(|a, b| a.0.cmp(&b.0));
        }

        // structural coordinates
        let diag_level = format.diagonal_level();
        let diagonals: Vec<Idx> = match (&format.params.diagonals, diag_level) {
            (_, None) => Vec::new(),
            (Some(d), Some(_)) => {
                let found: Vec<Idx> = distinct_diagonals(&entries);
                if let Some(missing) = found.iter().find(|x| !d.contains(x)) {
                    let _ = missing;
                    return Err(FormatError::TooManyDiagonals {
                        found: found.len(),
                        declared: d.len(),
                    });
                }
                d.clone()
            }
            (None, Some(_)) => distinct_diagonals(&entries),
        };
        let has_slot = format.level_dims.contains(&LevelDim::Slot);
        let mut slots = vec![0 as Idx; if has_slot { entries.len() } else { 0 }];
        if has_slot {
            let mut prev_row = -1;
            let mut rank = 0;
            for (e, s) in entries.iter().zip(slots.iter_mut()) {
                if e.0[0] != prev_row {
                    prev_row = e.0[0];
                    rank = 0;
                }
                *s = rank;
                rank += 1;
            }
        }
        let max_slots = slots.iter().map(|&s| s as usize + 1).max().unwrap_or(0);

        let mut out = Vec::with_capacity(entries.len());
        for (n, (c, v)) in entries.into_iter().enumerate() {
            let lc = format
                .level_dims
                .iter()
                .map(|d| match *d {
                    LevelDim::Mode(m) => c[m],
                    LevelDim::BlockOuter { mode, block } => c[mode] / block as Idx,
                    LevelDim::BlockInner { mode, block } => c[mode] % block as Idx,
                    LevelDim::Diagonal => diagonals.binary_search(&(c[1] - c[0])).unwrap() as Idx,
                    LevelDim::Slot => slots[n],
                })
                .collect();
            out.push(Entry { lc, val: v });
        }
        let unordered: Vec<bool> = format
            .levels
            .iter()
            .map(|l| !l.props.ordered && l.kind != LevelKind::Hashed)
            .collect();
        let key = |e: &Entry<T>| -> Vec<Idx> {
            e.lc.iter()
                .zip(&unordered)
                .map(|(&x, &u)| if u { -x } else { x })
                .collect()
        };
        out.sort_by_cached_key(key);

        let offsets = Arc::new(diagonals.clone());
        let mut levels = Vec::with_capacity(format.levels.len());
        for (k, lf) in format.levels.iter().enumerate() {
            let mut l = LevelStorage::new(*lf);
            match lf.kind {
                LevelKind::Dense => {
                    l.dim = match format.level_dims[k] {
                        LevelDim::Mode(m) => dims[m],
                        LevelDim::BlockOuter { mode, block } => dims[mode].div_ceil(block),
                        LevelDim::BlockInner { block, .. } => block,
                        LevelDim::Diagonal => diagonals.len(),
                        LevelDim::Slot => max_slots,
                    }
                }
                LevelKind::Range => {
                    l.dim = dims[0];
                    l.parent_dim = dims[1];
                    l.offset = offsets.clone();
                }
                LevelKind::Offset => {
                    l.segment = dims[0];
                    l.offset = offsets.clone();
                }
                _ => {}
            }
            levels.push(l);
        }
        Ok(Builder {
            format,
            dims,
            entries: out,
            levels,
        })
    }

    fn run(mut self) -> Result<TensorStorage<T>, FormatError> {
        let nlev = self.levels.len();
        let mut groups: Vec<Group> = vec![(0, self.entries.len())];
        for k in 0..nlev {
            groups = self.level(k, &groups)?;
        }
        let mut vals = Vec::with_capacity(groups.len());
        for &(s, e) in &groups {
            let mut v = T::zero();
            for en in &self.entries[s..e] {
                v += en.val;
            }
            vals.push(v);
        }
        if self.format.params.aos {
            interleave(&mut self.levels);
        }
        Ok(TensorStorage {
            format: self.format.clone(),
            dims: self.dims.to_vec(),
            levels: self.levels,
            vals,
        })
    }

    fn level(&mut self, k: usize, parents: &[Group]) -> Result<Vec<Group>, FormatError> {
        let nlev = self.levels.len();
        let lf = self.format.levels[k];
        let mut next: Vec<Group> = Vec::new();
        match lf.kind {
            LevelKind::Dense | LevelKind::Range => {
                let n = self.levels[k].dim;
                next.reserve(parents.len() * n);
                for &g in parents {
                    let runs = runs_of(&self.entries, g, k, k);
                    let mut it = runs.into_iter().peekable();
                    for c in 0..n as Idx {
                        match it.peek() {
                            Some(&(a, b)) if self.entries[a].lc[k] == c => {
                                next.push((a, b));
                                it.next();
                            }
                            _ => next.push((g.1, g.1)),
                        }
                    }
                    if it.peek().is_some() {
                        return Err(FormatError::Unrepresentable(format!(
                            "coordinate outside the bounds of level {k}"
                        )));
                    }
                }
            }
            LevelKind::Compressed => {
                let chain_end = {
                    let mut e = k;
                    while e + 1 < nlev && self.format.levels[e + 1].props.branchless {
                        e += 1;
                    }
                    e
                };
                let per_entry = !lf.props.unique && chain_end == nlev - 1;
                let group_end = if lf.props.unique { k } else { chain_end };
                self.levels[k].append_init(parents.len(), 0)?;
                let mut count: Idx = 0;
                for (p, &g) in parents.iter().enumerate() {
                    let begin = count;
                    let chunks = if per_entry {
                        (g.0..g.1).map(|i| (i, i + 1)).collect()
                    } else {
                        runs_of(&self.entries, g, k, group_end)
                    };
                    for (a, b) in chunks {
                        self.levels[k].append_coord(count, self.entries[a].lc[k])?;
                        next.push((a, b));
                        count += 1;
                    }
                    if count > begin {
                        self.levels[k].append_edges(p as Idx, begin, count)?;
                    }
                }
                self.levels[k].append_finalize(parents.len(), count as usize)?;
            }
            LevelKind::Singleton => {
                let l = &mut self.levels[k];
                l.append_init(parents.len(), parents.len())?;
                for (p, &(s, e)) in parents.iter().enumerate() {
                    let c = if s < e { self.entries[s].lc[k] } else { 0 };
                    if self.entries[s..e].iter().any(|en| en.lc[k] != c) {
                        return Err(FormatError::Unrepresentable(format!(
                            "level {k} is singleton but a parent has several distinct coordinates"
                        )));
                    }
                    l.append_coord(p as Idx, c)?;
                }
                l.append_finalize(parents.len(), parents.len())?;
                next = parents.to_vec();
            }
            LevelKind::Offset => {
                next = parents.to_vec();
            }
            LevelKind::Hashed => {
                let mut max_distinct = 0;
                let all_runs: Vec<Vec<Group>> = parents
                    .iter()
                    .map(|&g| {
                        let r = runs_of(&self.entries, g, k, k);
                        max_distinct = max_distinct.max(r.len());
                        r
                    })
                    .collect();
                let w = self
                    .format
                    .params
                    .hash_width
                    .unwrap_or_else(|| (2 * max_distinct).max(1).next_power_of_two());
                let l = &mut self.levels[k];
                l.width = w;
                let size = l.size(parents.len())?;
                l.insert_init(parents.len(), size)?;
                for (p, runs) in all_runs.iter().enumerate() {
                    for &(a, _) in runs {
                        l.insert_coord(p as Idx, self.entries[a].lc[k])?;
                    }
                }
                l.insert_finalize(parents.len(), size)?;
                next.reserve(size);
                for (p, runs) in all_runs.iter().enumerate() {
                    let end = parents[p].1;
                    for slot in p * w..(p + 1) * w {
                        let c = l.crd[slot];
                        let g = if c == EMPTY {
                            (end, end)
                        } else {
                            let i = runs
                                .binary_search_by_key(&c, |&(a, _)| self.entries[a].lc[k])
                                .expect("inserted coordinate has a run");
                            runs[i]
                        };
                        next.push(g);
                    }
                }
            }
        }
        Ok(next)
    }
}

fn runs_of<T>(entries: &[Entry<T>], (s, e): Group, k: usize, end: usize) -> Vec<Group> {
    let mut out = Vec::new();
    let mut a = s;
    while a < e {
        let mut b = a + 1;
        while b < e && entries[b].lc[k..=end] == entries[a].lc[k..=end] {
            b += 1;
        }
        out.push((a, b));
        a = b;
    }
    out
}

fn distinct_diagonals<T>(entries: &[(Vec<Idx>, T)]) -> Vec<Idx> {
    let mut d: Vec<Idx> = entries.iter().map(|(c, _)| c[1] - c[0]).collect();
    d.sort_unstable();
    d.dedup();
    d
}

/// True when a non-unique level reaches the leaf through branchless levels,
/// so duplicate coordinates can be stored at separate positions.
fn keeps_duplicates(format: &TensorFormat) -> bool {
    format.levels.iter().enumerate().any(|(k, l)| {
        !l.props.unique
            && l.kind == LevelKind::Compressed
            && format.levels[k + 1..].iter().all(|c| c.props.branchless)
    })
}

/// Switch a compressed+singleton chain to one interleaved coordinate array.
fn interleave(levels: &mut [LevelStorage]) {
    let n = levels.len();
    let len = levels[0].crd_len();
    let mut aos = vec![0; len * n];
    for (k, l) in levels.iter().enumerate() {
        for p in 0..len {
            aos[p * n + k] = l.crd_at(p as Idx);
        }
    }
    let shared = Arc::new(aos);
    for (k, l) in levels.iter_mut().enumerate() {
        l.crd = shared.clone();
        l.layout = CrdLayout { stride: n, base: k };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::preset;

    #[test]
    fn declared_full_rows_are_checked() {
        let f = crate::parse_format("{compressed(f,~u),singleton}", Some(2)).unwrap();
        // row 2 of the sample is empty
        assert!(matches!(
            TensorStorage::assemble(&f, &[4, 6], &sample()),
            Err(FormatError::Unrepresentable(_))
        ));
        let mut full = sample();
        full.push(vec![2, 5], 1.0);
        assert!(TensorStorage::assemble(&f, &[4, 6], &full).is_ok());
    }

    // 4x6 matrix: rows 0 and 1 hold two entries each (row 1 at columns 0
    // and 1), row 2 is empty, and the last component is (3,4) = 9.
    fn sample() -> CoordList<f64> {
        CoordList::from_entries(
            vec![4, 6],
            vec![
                (vec![0, 0], 5.0),
                (vec![0, 1], 1.0),
                (vec![1, 0], 7.0),
                (vec![1, 1], 3.0),
                (vec![3, 0], 8.0),
                (vec![3, 3], 4.0),
                (vec![3, 4], 9.0),
            ],
        )
    }

    fn build(name: &str, order: usize, list: &CoordList<f64>) -> TensorStorage<f64> {
        TensorStorage::assemble(&preset(name, order, &[]).unwrap(), &list.dims, list).unwrap()
    }

    #[test]
    fn csr_pos_bounds() {
        let s = build("csr", 2, &sample());
        assert_eq!(s.levels[1].pos_bounds(1).unwrap(), (2, 4));
        assert_eq!(s.levels[1].pos, vec![0, 2, 4, 4, 7]);
        assert_eq!(*s.levels[1].crd, vec![0, 1, 0, 1, 0, 3, 4]);
    }

    #[test]
    fn csr_last_path() {
        let s = build("csr", 2, &sample());
        let e = s.enumerate().unwrap();
        assert_eq!(e.entries.last().unwrap(), &(vec![3, 4], 9.0));
    }

    #[test]
    fn empty_tensor() {
        for name in [
            "csr", "coo", "dcsr", "dia", "ell", "bcsr", "csb", "dense", "csc",
        ] {
            let s = build(name, 2, &CoordList::new(vec![3, 5]));
            assert!(s.to_coords().unwrap().pruned().is_empty(), "{name}");
        }
    }

    #[test]
    fn coo_keeps_duplicates() {
        let list = CoordList::from_entries(vec![4, 5], vec![(vec![2, 3], 1.0), (vec![2, 3], 2.5)]);
        let s = build("coo-soa", 2, &list);
        let raw = s.enumerate().unwrap();
        assert_eq!(raw.len(), 2);
        assert_eq!(raw.canonical().entries, vec![(vec![2, 3], 3.5)]);
        let csr = build("csr", 2, &list);
        assert_eq!(csr.enumerate().unwrap().entries, vec![(vec![2, 3], 3.5)]);
    }

    #[test]
    fn aos_coo_interleaves() {
        let s = build("coo-aos", 2, &sample());
        assert_eq!(s.levels[0].layout, CrdLayout { stride: 2, base: 0 });
        assert!(Arc::ptr_eq(&s.levels[0].crd, &s.levels[1].crd));
        assert_eq!(&s.levels[0].crd[..4], &[0, 0, 0, 1]);
        assert_eq!(s.to_coords().unwrap(), sample().canonical());
    }

    #[test]
    fn dia_layout() {
        let s = build("dia", 2, &sample());
        let diags = distinct_diagonals(&sample().entries);
        assert_eq!(*s.levels[1].offset, diags);
        assert!(Arc::ptr_eq(&s.levels[1].offset, &s.levels[2].offset));
        assert_eq!(s.vals.len(), diags.len() * 4);
        assert_eq!(s.to_coords().unwrap().pruned(), sample().canonical());
    }

    #[test]
    fn dia_fully_banded_count() {
        // tridiagonal 5x5: every in-bounds diagonal slot holds a nonzero
        let mut l = CoordList::new(vec![5, 5]);
        for i in 0..5i64 {
            for j in (i - 1).max(0)..(i + 2).min(5) {
                l.push(vec![i, j], 1.0 + (i * 5 + j) as f64);
            }
        }
        let s = build("dia", 2, &l);
        assert_eq!(s.enumerate().unwrap().len(), l.len());
        assert!(s.enumerate().unwrap().len() < 3 * 5);
    }

    #[test]
    fn dia_pinned_diagonals() {
        let f = preset("dia", 2, &[]).unwrap().with_diagonals(vec![0]);
        let err = TensorStorage::assemble(&f, &[4, 6], &sample()).unwrap_err();
        assert!(matches!(err, FormatError::TooManyDiagonals { .. }));
    }

    #[test]
    fn ell_slots() {
        let s = build("ell", 2, &sample());
        assert_eq!(s.levels[0].dim, 3);
        assert_eq!(s.vals.len(), 3 * 4);
        assert_eq!(s.to_coords().unwrap().pruned(), sample().canonical());
    }

    #[test]
    fn bcsr_blocks() {
        let f = preset("bcsr", 2, &[2, 3]).unwrap();
        let s = TensorStorage::assemble(&f, &[4, 6], &sample()).unwrap();
        // block rows 0 and 1; block (0,0), (1,0), (1,1)
        assert_eq!(s.levels[1].pos, vec![0, 1, 3]);
        assert_eq!(s.vals.len(), 3 * 6);
        assert_eq!(s.to_coords().unwrap().pruned(), sample().canonical());
    }

    #[test]
    fn bcsr_ragged_edge() {
        let f = preset("bcsr", 2, &[3, 4]).unwrap();
        let s = TensorStorage::assemble(&f, &[4, 6], &sample()).unwrap();
        assert_eq!(s.to_coords().unwrap().pruned(), sample().canonical());
    }

    #[test]
    fn csb_blocks_unordered() {
        let s = build("csb", 2, &sample());
        assert_eq!(s.to_coords().unwrap(), sample().canonical());
        let raw = s.enumerate().unwrap();
        assert_ne!(raw.entries, sample().canonical().entries);
    }

    #[test]
    fn hashed_vector() {
        let list = CoordList::from_entries(vec![10], vec![(vec![7], 2.0), (vec![3], 1.0)]);
        let s = build("hash-vector", 1, &list);
        assert_eq!(s.levels[0].width, 4);
        // 3 is inserted first and takes its home slot; 7 collides and wraps
        assert_eq!(s.levels[0].locate(0, &[3]).unwrap(), (3, true));
        assert_eq!(s.levels[0].locate(0, &[7]).unwrap(), (0, true));
        assert!(!s.levels[0].locate(0, &[5]).unwrap().1);
        assert_eq!(s.to_coords().unwrap(), list.canonical());
        let f = preset("hash-vector", 1, &[]).unwrap().with_hash_width(1);
        let err = TensorStorage::assemble(&f, &[10], &list).unwrap_err();
        assert!(matches!(
            err,
            FormatError::Level(crate::levels::LevelError::SegmentFull { .. })
        ));
    }

    #[test]
    fn mode_generic() {
        let list = CoordList::from_entries(
            vec![3, 5, 2],
            vec![
                (vec![0, 1, 1], 1.0),
                (vec![0, 4, 0], 2.0),
                (vec![2, 0, 1], 3.0),
                (vec![0, 0, 0], 4.0),
            ],
        );
        let s = build("mode-generic", 3, &list);
        assert_eq!(*s.levels[0].crd, vec![0, 0, 2]);
        assert_eq!(*s.levels[1].crd, vec![0, 2, 0]);
        assert_eq!(s.vals.len(), 3 * 2 * 2);
        assert_eq!(s.to_coords().unwrap().pruned(), list.canonical());
    }

    #[test]
    fn out_of_bounds() {
        let list = CoordList::from_entries(vec![2, 2], vec![(vec![2, 0], 1.0)]);
        let f = preset("csr", 2, &[]).unwrap();
        assert!(matches!(
            TensorStorage::assemble(&f, &[2, 2], &list),
            Err(FormatError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn singleton_under_dense_rejects_rows() {
        let f = crate::formats::parse_format("{dense,singleton}", None).unwrap();
        let err = TensorStorage::assemble(&f, &[4, 6], &sample()).unwrap_err();
        assert!(matches!(err, FormatError::Unrepresentable(_)));
    }

    #[test]
    fn scalar_storage() {
        let s = TensorStorage::<f64>::assemble(
            &preset("dense", 0, &[]).unwrap(),
            &[],
            &CoordList::from_entries(vec![], vec![(vec![], 2.0), (vec![], 1.5)]),
        )
        .unwrap();
        assert_eq!(s.vals, vec![3.5]);
    }
}
