use std::sync::Arc;

use super::{Capability, LevelError, LevelFormat, LevelFunction, LevelKind};
use crate::scalar::{Idx, EMPTY};

/// How a level reads its coordinate out of `crd`: `crd[pos * stride + base]`.
///
/// Struct-of-arrays storage uses stride 1. Array-of-structs COO shares one
/// interleaved array between its levels, each with its own base.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrdLayout {
    pub stride: usize,
    pub base: usize,
}

impl Default for CrdLayout {
    fn default() -> Self {
        CrdLayout { stride: 1, base: 0 }
    }
}

/// Physical storage of one coordinate hierarchy level.
///
/// Which fields are meaningful depends on the kind:
///
/// | kind       | fields                                        |
/// |------------|-----------------------------------------------|
/// | dense      | `dim` (N)                                     |
/// | range      | `dim` (N), `parent_dim` (M), `offset`         |
/// | compressed | `pos`, `crd`                                  |
/// | singleton  | `crd`                                         |
/// | offset     | `offset`, `segment` (N of the range level)    |
/// | hashed     | `width` (W), `crd`                            |
///
/// `crd` and `offset` are reference counted so that two levels of one
/// tensor can share an array (DIA offsets, AoS COO coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStorage {
    pub format: LevelFormat,
    pub dim: usize,
    pub parent_dim: usize,
    pub segment: usize,
    pub width: usize,
    pub pos: Vec<Idx>,
    pub crd: Arc<Vec<Idx>>,
    pub layout: CrdLayout,
    pub offset: Arc<Vec<Idx>>,
    // append bookkeeping: last parent position passed to append_edges
    last_edge_parent: Option<Idx>,
}

type LResult<T> = Result<T, LevelError>;

impl LevelStorage {
    pub fn new(format: LevelFormat) -> Self {
        LevelStorage {
            format,
            dim: 0,
            parent_dim: 0,
            segment: 0,
            width: 0,
            pos: Vec::new(),
            crd: Arc::new(Vec::new()),
            layout: CrdLayout::default(),
            offset: Arc::new(Vec::new()),
            last_edge_parent: None,
        }
    }

    pub fn dense(n: usize) -> Self {
        let mut l = Self::new(LevelFormat::dense());
        l.dim = n;
        l
    }

    pub fn compressed(format: LevelFormat, pos: Vec<Idx>, crd: Vec<Idx>) -> Self {
        let mut l = Self::new(format);
        l.pos = pos;
        l.crd = Arc::new(crd);
        l
    }

    pub fn singleton(format: LevelFormat, crd: Vec<Idx>) -> Self {
        let mut l = Self::new(format);
        l.crd = Arc::new(crd);
        l
    }

    pub fn range(n: usize, m: usize, offset: Arc<Vec<Idx>>) -> Self {
        let mut l = Self::new(LevelFormat::range());
        l.dim = n;
        l.parent_dim = m;
        l.offset = offset;
        l
    }

    pub fn offset(segment: usize, offset: Arc<Vec<Idx>>) -> Self {
        let mut l = Self::new(LevelFormat::offset());
        l.segment = segment;
        l.offset = offset;
        l
    }

    pub fn hashed(width: usize, crd: Vec<Idx>) -> Self {
        let mut l = Self::new(LevelFormat::hashed());
        l.width = width;
        l.crd = Arc::new(crd);
        l
    }

    pub fn kind(&self) -> LevelKind {
        self.format.kind
    }

    fn require(&self, function: LevelFunction) -> LResult<()> {
        let capability = function.capability();
        if self.kind().supports(capability) {
            Ok(())
        } else {
            Err(LevelError::UnsupportedCapability {
                kind: self.kind(),
                function,
                capability,
            })
        }
    }

    /// Number of logical coordinate slots in `crd`.
    pub fn crd_len(&self) -> usize {
        let l = &self.layout;
        if l.stride == 1 {
            self.crd.len()
        } else {
            self.crd.len() / l.stride
        }
    }

    #[inline]
    pub fn crd_at(&self, pos: Idx) -> Idx {
        self.crd[pos as usize * self.layout.stride + self.layout.base]
    }

    // ---- coordinate value iteration ----

    pub fn coord_bounds(&self, prefix: &[Idx]) -> LResult<(Idx, Idx)> {
        self.require(LevelFunction::CoordBounds)?;
        Ok(match self.kind() {
            LevelKind::Dense => (0, self.dim as Idx),
            _ => {
                let d = *prefix.last().unwrap_or(&0) as usize;
                let off = self.offset[d];
                let lo = 0.max(-off);
                let hi = (self.dim as Idx).min(self.parent_dim as Idx - off);
                (lo, hi.max(lo))
            }
        })
    }

    /// `coords` holds the ancestor coordinates followed by `i_k`.
    pub fn coord_access(&self, parent_pos: Idx, coords: &[Idx]) -> LResult<(Idx, bool)> {
        self.require(LevelFunction::CoordAccess)?;
        let i = *coords.last().expect("coord_access needs i_k");
        Ok((parent_pos * self.dim as Idx + i, true))
    }

    // ---- coordinate position iteration ----

    pub fn pos_bounds(&self, parent_pos: Idx) -> LResult<(Idx, Idx)> {
        self.require(LevelFunction::PosBounds)?;
        Ok(match self.kind() {
            LevelKind::Compressed => {
                let p = parent_pos as usize;
                if p + 1 >= self.pos.len() {
                    return Err(LevelError::PositionOutOfRange {
                        pos: parent_pos,
                        len: self.pos.len(),
                    });
                }
                (self.pos[p], self.pos[p + 1])
            }
            LevelKind::Hashed => {
                let w = self.width as Idx;
                (parent_pos * w, (parent_pos + 1) * w)
            }
            _ => (parent_pos, parent_pos + 1),
        })
    }

    pub fn pos_access(&self, pos: Idx, prefix: &[Idx]) -> LResult<(Idx, bool)> {
        self.require(LevelFunction::PosAccess)?;
        Ok(match self.kind() {
            LevelKind::Hashed => {
                let c = self.crd[pos as usize];
                (c, c != EMPTY)
            }
            LevelKind::Offset => {
                let i = *prefix.last().unwrap_or(&0);
                let d = pos as usize / self.segment.max(1);
                (i + self.offset[d], true)
            }
            _ => (self.crd_at(pos), true),
        })
    }

    // ---- locate ----

    pub fn locate(&self, parent_pos: Idx, coords: &[Idx]) -> LResult<(Idx, bool)> {
        self.require(LevelFunction::Locate)?;
        let i = *coords.last().expect("locate needs i_k");
        if self.kind() == LevelKind::Dense {
            return Ok((parent_pos * self.dim as Idx + i, true));
        }
        let w = self.width;
        if w == 0 || i < 0 {
            return Ok((EMPTY, false));
        }
        let base = parent_pos as usize * w;
        let home = i as usize % w;
        for step in 0..w {
            let slot = base + (home + step) % w;
            match self.crd[slot] {
                c if c == i => return Ok((slot as Idx, true)),
                EMPTY => return Ok((EMPTY, false)),
                _ => {}
            }
        }
        Ok((EMPTY, false))
    }

    // ---- insert ----

    pub fn size(&self, parent_size: usize) -> LResult<usize> {
        self.require(LevelFunction::Size)?;
        Ok(match self.kind() {
            LevelKind::Dense => parent_size * self.dim,
            _ => parent_size * self.width,
        })
    }

    pub fn insert_init(&mut self, _parent_size: usize, size: usize) -> LResult<()> {
        self.require(LevelFunction::InsertInit)?;
        if self.kind() == LevelKind::Hashed {
            self.crd = Arc::new(vec![EMPTY; size]);
        }
        Ok(())
    }

    /// Insert `coord` under the parent at `parent_pos`. Dense levels encode
    /// coordinates implicitly, so this is a no-op for them; hashed levels
    /// probe from the home slot and claim the first empty bucket.
    pub fn insert_coord(&mut self, parent_pos: Idx, coord: Idx) -> LResult<()> {
        self.require(LevelFunction::InsertCoord)?;
        if self.kind() == LevelKind::Dense {
            return Ok(());
        }
        let w = self.width;
        let base = parent_pos as usize * w;
        let home = coord as usize % w.max(1);
        let crd = Arc::make_mut(&mut self.crd);
        for step in 0..w {
            let slot = base + (home + step) % w;
            if crd[slot] == coord {
                return Ok(());
            }
            if crd[slot] == EMPTY {
                crd[slot] = coord;
                return Ok(());
            }
        }
        Err(LevelError::SegmentFull {
            segment: parent_pos as usize,
            width: w,
        })
    }

    pub fn insert_finalize(&mut self, _parent_size: usize, _size: usize) -> LResult<()> {
        self.require(LevelFunction::InsertFinalize)
    }

    // ---- append ----

    pub fn append_init(&mut self, parent_size: usize, _size: usize) -> LResult<()> {
        self.require(LevelFunction::AppendInit)?;
        if self.kind() == LevelKind::Compressed {
            self.pos = vec![0; parent_size + 1];
        }
        self.crd = Arc::new(Vec::new());
        self.layout = CrdLayout::default();
        self.last_edge_parent = None;
        Ok(())
    }

    pub fn append_coord(&mut self, pos: Idx, coord: Idx) -> LResult<()> {
        self.require(LevelFunction::AppendCoord)?;
        let crd = Arc::make_mut(&mut self.crd);
        if pos as usize != crd.len() {
            return Err(LevelError::PositionOutOfRange {
                pos,
                len: crd.len(),
            });
        }
        crd.push(coord);
        Ok(())
    }

    /// Attach positions `[begin, end)` to the parent at `parent_pos`.
    /// Callers invoke this once per parent, in ascending parent order.
    pub fn append_edges(&mut self, parent_pos: Idx, begin: Idx, end: Idx) -> LResult<()> {
        self.require(LevelFunction::AppendEdges)?;
        if let Some(last) = self.last_edge_parent {
            if parent_pos <= last {
                return Err(LevelError::OutOfOrderAppend {
                    last,
                    got: parent_pos,
                });
            }
        }
        let first = self.last_edge_parent.map_or(0, |l| l as usize + 1);
        if self.kind() == LevelKind::Compressed {
            let p = parent_pos as usize;
            if p + 1 >= self.pos.len() {
                self.pos.resize(p + 2, 0);
            }
            // parents skipped since the last call own no positions
            for q in first..p {
                self.pos[q + 1] = begin;
            }
            self.pos[p] = begin;
            self.pos[p + 1] = end;
        }
        self.last_edge_parent = Some(parent_pos);
        Ok(())
    }

    pub fn append_finalize(&mut self, parent_size: usize, _size: usize) -> LResult<()> {
        self.require(LevelFunction::AppendFinalize)?;
        if self.kind() == LevelKind::Compressed {
            let end = self.crd_len() as Idx;
            let start = self.last_edge_parent.map_or(0, |l| l as usize + 1);
            self.pos.resize(parent_size + 1, 0);
            for q in start..parent_size {
                self.pos[q + 1] = end;
            }
        }
        Ok(())
    }

    /// Number of positions in this level given the number of parent positions.
    pub fn num_positions(&self, parent_size: usize) -> usize {
        match self.kind() {
            LevelKind::Dense | LevelKind::Range => parent_size * self.dim,
            LevelKind::Hashed => parent_size * self.width,
            LevelKind::Compressed => self.pos.get(parent_size).copied().unwrap_or(0) as usize,
            LevelKind::Singleton | LevelKind::Offset => parent_size,
        }
    }

    /// Invoke a level function with dummy arguments; used by the capability
    /// conformance checks. Returns the capability error if unsupported.
    pub fn probe(&mut self, f: LevelFunction) -> LResult<()> {
        use LevelFunction::*;
        match f {
            CoordBounds => self.coord_bounds(&[0]).map(drop),
            CoordAccess => self.coord_access(0, &[0]).map(drop),
            PosBounds => self.pos_bounds(0).map(drop),
            PosAccess => self.pos_access(0, &[0]).map(drop),
            Locate => self.locate(0, &[0]).map(drop),
            Size => self.size(1).map(drop),
            InsertInit => self.insert_init(1, self.size(1).unwrap_or(0)),
            InsertCoord => self.insert_coord(0, 0),
            InsertFinalize => self.insert_finalize(1, 1),
            AppendInit => self.append_init(1, 0),
            AppendCoord => self.append_coord(0, 0),
            AppendEdges => self.append_edges(0, 0, 1),
            AppendFinalize => self.append_finalize(1, 1),
        }
    }

    pub fn supports(&self, cap: Capability) -> bool {
        self.kind().supports(cap)
    }
}
