//! Output assembly: writes arrive from the loop nest and are stored through
//! the output levels' insert or append functions.

use super::schedule::OutputMode;
use super::EngineError;
use crate::formats::{TensorFormat, TensorStorage};
use crate::levels::{LevelKind, LevelStorage};
use crate::scalar::{Idx, Scalar};

pub(crate) struct Assembler<T> {
    mode: OutputMode,
    format: TensorFormat,
    dims: Vec<usize>,
    levels: Vec<LevelStorage>,
    extents: Vec<usize>,
    vals: Vec<T>,
    lc: Vec<Idx>,
    // append state
    last: Option<Vec<Idx>>,
    ppos: Vec<Idx>,
    count: Vec<usize>,
    open: Vec<Option<(Idx, usize)>>,
    need: Vec<bool>,
}

/// Bucket count of a hashed output level with extent `n`.
pub fn hash_width(format: &TensorFormat, n: usize) -> usize {
    format
        .params
        .hash_width
        .unwrap_or_else(|| n.max(1).next_power_of_two())
}

impl<T: Scalar> Assembler<T> {
    pub fn new(
        mode: OutputMode,
        format: &TensorFormat,
        dims: &[usize],
    ) -> Result<Self, EngineError> {
        let perm: Vec<usize> = format
            .level_dims
            .iter()
            .map(|d| d.mode().expect("simple output format"))
            .collect();
        let extents: Vec<usize> = perm.iter().map(|&m| dims[m]).collect();
        let n = extents.len();
        let mut levels = Vec::with_capacity(n);
        let mut vals = Vec::new();
        match mode {
            OutputMode::Scalar => vals.push(T::zero()),
            OutputMode::Insert => {
                let mut size = 1usize;
                for (k, lf) in format.levels.iter().enumerate() {
                    let mut l = match lf.kind {
                        LevelKind::Dense => LevelStorage::dense(extents[k]),
                        _ => LevelStorage::hashed(hash_width(format, extents[k]), Vec::new()),
                    };
                    l.format = *lf;
                    let next = l.size(size)?;
                    l.insert_init(size, next)?;
                    size = next;
                    levels.push(l);
                }
                vals = vec![T::zero(); size];
            }
            OutputMode::Append => {
                for (k, lf) in format.levels.iter().enumerate() {
                    let mut l = match lf.kind {
                        LevelKind::Dense => LevelStorage::dense(extents[k]),
                        _ => {
                            let mut l = LevelStorage::new(*lf);
                            l.append_init(usize::from(k == 0), 0)?;
                            l
                        }
                    };
                    l.format = *lf;
                    levels.push(l);
                }
            }
        }
        Ok(Assembler {
            mode,
            format: format.clone(),
            dims: dims.to_vec(),
            levels,
            extents,
            vals,
            lc: vec![0; n],
            last: None,
            ppos: vec![0; n],
            count: vec![0; n],
            open: vec![None; n],
            need: vec![false; n],
        })
    }

    /// Add `v` at the output coordinate given in level order.
    pub fn write(&mut self, lc: &[Idx], v: T) -> Result<(), EngineError> {
        self.lc.copy_from_slice(lc);
        match self.mode {
            OutputMode::Scalar => {
                self.vals[0] += v;
                Ok(())
            }
            OutputMode::Insert => self.insert(v),
            OutputMode::Append => self.append(v),
        }
    }

    fn insert(&mut self, v: T) -> Result<(), EngineError> {
        let mut p: Idx = 0;
        for k in 0..self.levels.len() {
            let l = &mut self.levels[k];
            l.insert_coord(p, self.lc[k])?;
            let (q, found) = l.locate(p, &self.lc[..=k])?;
            debug_assert!(found);
            p = q;
        }
        self.vals[p as usize] += v;
        Ok(())
    }

    fn append(&mut self, v: T) -> Result<(), EngineError> {
        let n = self.levels.len();
        let first_diff = match &self.last {
            None => 0,
            Some(last) => (0..n).find(|&k| last[k] != self.lc[k]).unwrap_or(n),
        };
        if first_diff == n {
            let p = self.ppos[n - 1] as usize;
            self.vals[p] += v;
            return Ok(());
        }
        for k in (0..n).rev() {
            self.need[k] = k >= first_diff
                || (k + 1 < n
                    && self.levels[k + 1].kind() == LevelKind::Singleton
                    && self.need[k + 1]);
        }
        for k in 0..n {
            if !self.need[k] {
                continue;
            }
            let parent = if k == 0 { 0 } else { self.ppos[k - 1] };
            let c = self.lc[k];
            match self.levels[k].kind() {
                LevelKind::Dense => self.ppos[k] = parent * self.extents[k] as Idx + c,
                LevelKind::Compressed => {
                    match self.open[k] {
                        Some((op, _)) if op == parent => {}
                        Some((op, begin)) => {
                            self.levels[k].append_edges(op, begin as Idx, self.count[k] as Idx)?;
                            self.open[k] = Some((parent, self.count[k]));
                        }
                        None => self.open[k] = Some((parent, self.count[k])),
                    }
                    let p = self.count[k] as Idx;
                    self.levels[k].append_coord(p, c)?;
                    self.ppos[k] = p;
                    self.count[k] += 1;
                }
                _ => {
                    self.levels[k].append_coord(parent, c)?;
                    self.ppos[k] = parent;
                    self.count[k] += 1;
                }
            }
        }
        let p = self.ppos[n - 1] as usize;
        if self.vals.len() <= p {
            self.vals.resize(p + 1, T::zero());
        }
        self.vals[p] += v;
        self.last = Some(self.lc.clone());
        Ok(())
    }

    pub fn finish(mut self) -> Result<TensorStorage<T>, EngineError> {
        if self.mode == OutputMode::Append {
            let mut parent_size = 1usize;
            for k in 0..self.levels.len() {
                let size = match self.levels[k].kind() {
                    LevelKind::Dense => parent_size * self.extents[k],
                    LevelKind::Compressed => {
                        if let Some((op, begin)) = self.open[k] {
                            self.levels[k].append_edges(op, begin as Idx, self.count[k] as Idx)?;
                        }
                        self.levels[k].append_finalize(parent_size, self.count[k])?;
                        self.count[k]
                    }
                    _ => {
                        self.levels[k].append_finalize(parent_size, self.count[k])?;
                        self.count[k]
                    }
                };
                parent_size = size;
            }
            self.vals.resize(parent_size, T::zero());
        }
        if self.mode == OutputMode::Scalar {
            return Ok(TensorStorage::scalar(self.vals[0]));
        }
        Ok(TensorStorage {
            format: self.format,
            dims: self.dims,
            levels: self.levels,
            vals: self.vals,
        })
    }
}
