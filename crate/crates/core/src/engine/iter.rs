//! Runtime iterators over one level, adapted by their conversion directive.

use std::rc::Rc;

use crate::lattice::Directive;
use crate::levels::{LevelError, LevelKind, LevelStorage};
use crate::scalar::Idx;

/// Positions bound to a level.
#[derive(Debug, Clone, PartialEq)]
pub enum PosSet {
    Single(Idx),
    /// Contiguous run `[lo, hi)`.
    Range(Idx, Idx),
    List(Rc<[Idx]>),
}

impl PosSet {
    pub fn for_each(&self, mut f: impl FnMut(Idx)) {
        match self {
            PosSet::Single(p) => f(*p),
            PosSet::Range(lo, hi) => (*lo..*hi).for_each(f),
            PosSet::List(v) => v.iter().copied().for_each(f),
        }
    }

    pub fn single(&self) -> Option<Idx> {
        match self {
            PosSet::Single(p) => Some(*p),
            _ => None,
        }
    }
}

enum Source {
    Value {
        c: Idx,
        hi: Idx,
        parent: Idx,
    },
    Pos {
        p: Idx,
        hi: Idx,
        chained: bool,
    },
    Buf {
        entries: Vec<(Idx, PosSet)>,
        i: usize,
    },
}

pub struct LevelIter {
    src: Source,
    cur: Option<(Idx, PosSet)>,
}

type LResult<T> = Result<T, LevelError>;

/// Positions under a binding for a position-iterated level, or `None` when
/// they are not one contiguous run.
fn child_range(level: &LevelStorage, parent: &PosSet) -> LResult<Option<(Idx, Idx)>> {
    Ok(match parent {
        PosSet::Single(p) => Some(level.pos_bounds(*p)?),
        PosSet::Range(lo, hi) => match level.kind() {
            LevelKind::Compressed => Some((level.pos[*lo as usize], level.pos[*hi as usize])),
            LevelKind::Singleton | LevelKind::Offset => Some((*lo, *hi)),
            _ => None,
        },
        PosSet::List(_) => None,
    })
}

fn collect(
    level: &LevelStorage,
    parent: &PosSet,
    prefix: &mut Vec<Idx>,
) -> LResult<Vec<(Idx, Idx)>> {
    let mut out = Vec::new();
    let mut err = None;
    parent.for_each(|pp| {
        if err.is_some() {
            return;
        }
        let r = (|| -> LResult<()> {
            if level.kind().value_iterable() {
                let (lo, hi) = level.coord_bounds(prefix)?;
                for c in lo..hi {
                    prefix.push(c);
                    let (p, _) = level.coord_access(pp, prefix)?;
                    prefix.pop();
                    out.push((c, p));
                }
            } else {
                let (lo, hi) = level.pos_bounds(pp)?;
                for p in lo..hi {
                    let (c, found) = level.pos_access(p, prefix)?;
                    if found {
                        out.push((c, p));
                    }
                }
            }
            Ok(())
        })();
        if let Err(e) = r {
            err = Some(e);
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn collect_range(
    level: &LevelStorage,
    lo: Idx,
    hi: Idx,
    prefix: &[Idx],
) -> LResult<Vec<(Idx, Idx)>> {
    let mut out = Vec::with_capacity((hi - lo).max(0) as usize);
    for p in lo..hi {
        let (c, found) = level.pos_access(p, prefix)?;
        if found {
            out.push((c, p));
        }
    }
    Ok(out)
}

fn group(mut v: Vec<(Idx, Idx)>, sort: bool) -> Vec<(Idx, PosSet)> {
    if sort {
        v.sort_unstable();
    }
    let mut out: Vec<(Idx, PosSet)> = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let c = v[i].0;
        let mut j = i + 1;
        while j < v.len() && v[j].0 == c {
            j += 1;
        }
        let ps: Rc<[Idx]> = v[i..j].iter().map(|e| e.1).collect();
        out.push((c, PosSet::List(ps)));
        i = j;
    }
    out
}

impl LevelIter {
    /// Iterate `level` under the parent binding. `prefix` holds the level
    /// coordinates of the ancestors.
    pub fn new(
        level: &LevelStorage,
        parent: &PosSet,
        prefix: &mut Vec<Idx>,
        d: Directive,
    ) -> LResult<Self> {
        let src = match (d, parent) {
            (Directive::None | Directive::DedupChained, PosSet::Single(pp))
                if level.kind().value_iterable() =>
            {
                let (lo, hi) = level.coord_bounds(prefix)?;
                Source::Value {
                    c: lo,
                    hi,
                    parent: *pp,
                }
            }
            (Directive::None | Directive::DedupChained, _) if !level.kind().value_iterable() => {
                match child_range(level, parent)? {
                    Some((lo, hi)) => Source::Pos {
                        p: lo,
                        hi,
                        chained: d == Directive::DedupChained,
                    },
                    None => Source::Buf {
                        entries: group(collect(level, parent, prefix)?, true),
                        i: 0,
                    },
                }
            }
            (Directive::ReorderScratch, _) => {
                let mut v = match child_range(level, parent)? {
                    Some((lo, hi)) => collect_range(level, lo, hi, prefix)?,
                    None => collect(level, parent, prefix)?,
                };
                v.sort_unstable();
                Source::Buf {
                    entries: v.into_iter().map(|(c, p)| (c, PosSet::Single(p))).collect(),
                    i: 0,
                }
            }
            _ => {
                let v = match child_range(level, parent)? {
                    Some((lo, hi)) if !level.kind().value_iterable() => {
                        collect_range(level, lo, hi, prefix)?
                    }
                    _ => collect(level, parent, prefix)?,
                };
                Source::Buf {
                    entries: group(v, true),
                    i: 0,
                }
            }
        };
        let mut it = LevelIter { src, cur: None };
        it.fill(level, prefix)?;
        Ok(it)
    }

    #[inline]
    pub fn valid(&self) -> bool {
        self.cur.is_some()
    }

    #[inline]
    pub fn coord(&self) -> Idx {
        self.cur.as_ref().map_or(Idx::MAX, |c| c.0)
    }

    pub fn positions(&self) -> &PosSet {
        &self.cur.as_ref().expect("valid iterator").1
    }

    fn fill(&mut self, level: &LevelStorage, prefix: &mut Vec<Idx>) -> LResult<()> {
        self.cur = match &mut self.src {
            Source::Value { c, hi, parent } => {
                if *c < *hi {
                    prefix.push(*c);
                    let (p, _) = level.coord_access(*parent, prefix)?;
                    prefix.pop();
                    Some((*c, PosSet::Single(p)))
                } else {
                    None
                }
            }
            Source::Pos { p, hi, chained } => {
                let mut found = None;
                while *p < *hi {
                    let (c, ok) = level.pos_access(*p, prefix)?;
                    if ok {
                        found = Some(c);
                        break;
                    }
                    *p += 1;
                }
                match found {
                    None => None,
                    Some(c) if *chained => {
                        let mut e = *p + 1;
                        while e < *hi && level.pos_access(e, prefix)?.0 == c {
                            e += 1;
                        }
                        Some((c, PosSet::Range(*p, e)))
                    }
                    Some(c) => Some((c, PosSet::Single(*p))),
                }
            }
            Source::Buf { entries, i } => entries.get(*i).cloned(),
        };
        Ok(())
    }

    pub fn advance(&mut self, level: &LevelStorage, prefix: &mut Vec<Idx>) -> LResult<()> {
        match &mut self.src {
            Source::Value { c, .. } => *c += 1,
            Source::Pos { p, .. } => {
                *p = match &self.cur {
                    Some((_, PosSet::Range(_, e))) => *e,
                    _ => *p + 1,
                }
            }
            Source::Buf { i, .. } => *i += 1,
        }
        self.fill(level, prefix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::LevelFormat;

    fn drain(level: &LevelStorage, parent: PosSet, d: Directive) -> Vec<(Idx, PosSet)> {
        let mut prefix = Vec::new();
        let mut it = LevelIter::new(level, &parent, &mut prefix, d).unwrap();
        let mut out = Vec::new();
        while it.valid() {
            out.push((it.coord(), it.positions().clone()));
            it.advance(level, &mut prefix).unwrap();
        }
        out
    }

    #[test]
    fn chained_runs_group_duplicates() {
        let f = LevelFormat::compressed()
            .with(crate::levels::Property::Unique, false)
            .unwrap();
        let l = LevelStorage::compressed(f, vec![0, 5], vec![0, 0, 2, 3, 3]);
        let got = drain(&l, PosSet::Single(0), Directive::DedupChained);
        assert_eq!(
            got,
            vec![
                (0, PosSet::Range(0, 2)),
                (2, PosSet::Range(2, 3)),
                (3, PosSet::Range(3, 5))
            ]
        );
    }

    #[test]
    fn hashed_reorder_skips_empty() {
        let l = LevelStorage::hashed(4, vec![-1, 5, 2, -1]);
        let got = drain(&l, PosSet::Single(0), Directive::ReorderScratch);
        assert_eq!(got, vec![(2, PosSet::Single(2)), (5, PosSet::Single(1))]);
    }

    #[test]
    fn gathered_dense_children() {
        let l = LevelStorage::dense(2);
        let got = drain(&l, PosSet::Range(0, 2), Directive::DedupScratch);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0], (0, PosSet::List(vec![0, 2].into())));
        assert_eq!(got[1], (1, PosSet::List(vec![1, 3].into())));
    }
}
