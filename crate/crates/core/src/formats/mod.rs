//! Whole-tensor formats composed from level formats.

mod coords;
mod parse;
mod storage;

pub use coords::CoordList;
pub use parse::parse_format;
pub use storage::TensorStorage;

use std::fmt;

use thiserror::Error;

use crate::levels::{Capability, LevelError, LevelFormat, LevelKind, Property};
use crate::scalar::Idx;

/// Which coordinate a storage level encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LevelDim {
    /// The full coordinate of logical mode `m`.
    Mode(usize),
    /// `coord / block` of mode `m`.
    BlockOuter { mode: usize, block: usize },
    /// `coord % block` of mode `m`.
    BlockInner { mode: usize, block: usize },
    /// Index into the stored diagonal list (DIA).
    Diagonal,
    /// Slot number within a row (ELL).
    Slot,
}

impl LevelDim {
    pub fn mode(&self) -> Option<usize> {
        match *self {
            LevelDim::Mode(m)
            | LevelDim::BlockOuter { mode: m, .. }
            | LevelDim::BlockInner { mode: m, .. } => Some(m),
            _ => None,
        }
    }

    pub fn is_structural(&self) -> bool {
        !matches!(self, LevelDim::Mode(_))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("unknown format preset `{0}`")]
    UnknownPreset(String),
    #[error("format `{name}` is defined for order {expected}, tensor has order {got}")]
    OrderMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("inconsistent blocking parameters: {0}")]
    BadBlocking(String),
    #[error("format parse error at column {col}: {msg}")]
    Parse { col: usize, msg: String },
    #[error("invalid format: {0}")]
    Invalid(String),
    #[error("coordinate {coord:?} outside dimensions {dims:?}")]
    OutOfBounds { coord: Vec<Idx>, dims: Vec<usize> },
    #[error("expected {expected} coordinates per entry, found {got}")]
    Arity { expected: usize, got: usize },
    #[error("data has {found} distinct diagonals but only {declared} are declared")]
    TooManyDiagonals { found: usize, declared: usize },
    #[error("format cannot represent the data: {0}")]
    Unrepresentable(String),
    #[error(transparent)]
    Level(#[from] LevelError),
}

/// Tunables consumed at assembly time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FormatParams {
    /// Hashed segment width; derived from the data when unset.
    pub hash_width: Option<usize>,
    /// Array-of-structs coordinate layout for COO.
    pub aos: bool,
    /// Pinned DIA diagonal offsets (column minus row), sorted.
    pub diagonals: Option<Vec<Idx>>,
}

/// An ordered list of level formats plus the coordinate each level encodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFormat {
    pub name: String,
    pub order: usize,
    pub levels: Vec<LevelFormat>,
    pub level_dims: Vec<LevelDim>,
    pub params: FormatParams,
}

impl TensorFormat {
    /// A plain composition: level `k` stores logical mode `mode_ordering[k]`.
    pub fn compose(
        levels: Vec<LevelFormat>,
        mode_ordering: Vec<usize>,
    ) -> Result<Self, FormatError> {
        if levels.len() != mode_ordering.len() {
            return Err(FormatError::Invalid(format!(
                "{} levels but mode ordering of length {}",
                levels.len(),
                mode_ordering.len()
            )));
        }
        let mut seen = mode_ordering.clone();
        seen.sort_unstable();
        if seen != (0..levels.len()).collect::<Vec<_>>() {
            return Err(FormatError::Invalid(format!(
                "mode ordering {mode_ordering:?} is not a permutation"
            )));
        }
        let f = TensorFormat {
            name: String::new(),
            order: levels.len(),
            level_dims: mode_ordering.into_iter().map(LevelDim::Mode).collect(),
            levels,
            params: FormatParams::default(),
        };
        f.check()?;
        Ok(f)
    }

    fn check(&self) -> Result<(), FormatError> {
        for (k, l) in self.levels.iter().enumerate() {
            if !(l.supports(Capability::ValueIteration)
                || l.supports(Capability::PositionIteration))
            {
                return Err(FormatError::Invalid(format!(
                    "level {k} cannot be iterated"
                )));
            }
            if matches!(l.kind, LevelKind::Range | LevelKind::Offset)
                && self.diagonal_level().is_none()
            {
                return Err(FormatError::Invalid(format!(
                    "{} level {k} needs an enclosing diagonal level",
                    l.kind
                )));
            }
        }
        Ok(())
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Logical modes in storage order (first level that mentions each mode).
    pub fn mode_ordering(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for d in &self.level_dims {
            if let Some(m) = d.mode() {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        out
    }

    /// True when every level stores one full logical coordinate.
    pub fn is_simple(&self) -> bool {
        self.level_dims
            .iter()
            .all(|d| matches!(d, LevelDim::Mode(_)))
    }

    pub fn diagonal_level(&self) -> Option<usize> {
        self.level_dims
            .iter()
            .position(|d| *d == LevelDim::Diagonal)
    }

    /// Every level supports insert or append.
    pub fn assembly_capable(&self) -> bool {
        self.levels
            .iter()
            .all(|l| l.supports(Capability::Insert) || l.supports(Capability::Append))
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_hash_width(mut self, w: usize) -> Self {
        self.params.hash_width = Some(w);
        self
    }

    pub fn with_diagonals(mut self, mut diags: Vec<Idx>) -> Self {
        diags.sort_unstable();
        diags.dedup();
        self.params.diagonals = Some(diags);
        self
    }

    /// Canonical textual composition, e.g. `{dense,compressed}@(1,0)`.
    pub fn composition_string(&self) -> String {
        let lv: Vec<String> = self.levels.iter().map(|l| l.to_string()).collect();
        let mut s = format!("{{{}}}", lv.join(","));
        if self.is_simple() {
            let ord = self.mode_ordering();
            if ord != (0..self.order).collect::<Vec<_>>() {
                let o: Vec<String> = ord.iter().map(|m| m.to_string()).collect();
                s.push_str(&format!("@({})", o.join(",")));
            }
        }
        s
    }
}

impl fmt::Display for TensorFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.name.is_empty() {
            f.write_str(&self.composition_string())
        } else {
            f.write_str(&self.name)
        }
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "dense",
    "sparse-vector",
    "hash-vector",
    "coo",
    "coo-soa",
    "coo-aos",
    "csr",
    "csc",
    "dcsr",
    "bcsr",
    "ell",
    "dia",
    "csb",
    "csf",
    "coo-3",
    "mode-generic",
];

fn lf(kind: LevelKind) -> LevelFormat {
    LevelFormat::new(kind)
}

fn non_unique(kind: LevelKind) -> LevelFormat {
    lf(kind).set(Property::Unique, false)
}

/// Build a preset format for a tensor of the given order. `blocks` holds
/// block sizes for blocked presets (BCSR, CSB: two; mode-generic: one);
/// missing sizes default to 2.
pub fn preset(name: &str, order: usize, blocks: &[usize]) -> Result<TensorFormat, FormatError> {
    use LevelDim::*;
    use LevelKind::*;
    let lname = name.to_ascii_lowercase();
    let want = |expected: usize| -> Result<(), FormatError> {
        if order == expected {
            Ok(())
        } else {
            Err(FormatError::OrderMismatch {
                name: lname.clone(),
                expected,
                got: order,
            })
        }
    };
    let block = |i: usize| -> Result<usize, FormatError> {
        let b = blocks.get(i).copied().unwrap_or(2);
        if b == 0 {
            Err(FormatError::BadBlocking(format!("block size {i} is zero")))
        } else {
            Ok(b)
        }
    };
    let expect_blocks = |n: usize| -> Result<(), FormatError> {
        if blocks.len() > n {
            Err(FormatError::BadBlocking(format!(
                "`{lname}` takes at most {n} block sizes, got {}",
                blocks.len()
            )))
        } else {
            Ok(())
        }
    };
    if !matches!(lname.as_str(), "bcsr" | "csb" | "mode-generic") && !blocks.is_empty() {
        return Err(FormatError::BadBlocking(format!(
            "`{lname}` takes no block sizes"
        )));
    }
    let modes = |n: usize| (0..n).map(Mode).collect::<Vec<_>>();
    let (levels, dims, params): (Vec<LevelFormat>, Vec<LevelDim>, FormatParams) =
        match lname.as_str() {
            "dense" => (
                vec![lf(Dense); order],
                modes(order),
                FormatParams::default(),
            ),
            "sparse-vector" => {
                want(1)?;
                (vec![lf(Compressed)], modes(1), FormatParams::default())
            }
            "hash-vector" => {
                want(1)?;
                (vec![lf(Hashed)], modes(1), FormatParams::default())
            }
            "coo" | "coo-soa" | "coo-aos" | "coo-3" => {
                if lname == "coo-3" {
                    want(3)?;
                }
                if order < 2 {
                    return Err(FormatError::OrderMismatch {
                        name: lname.clone(),
                        expected: 2,
                        got: order,
                    });
                }
                let mut levels = vec![non_unique(Compressed)];
                for _ in 1..order - 1 {
                    levels.push(non_unique(Singleton));
                }
                levels.push(lf(Singleton));
                let params = FormatParams {
                    aos: lname == "coo-aos",
                    ..Default::default()
                };
                (levels, modes(order), params)
            }
            "csr" => {
                want(2)?;
                (
                    vec![lf(Dense), lf(Compressed)],
                    modes(2),
                    FormatParams::default(),
                )
            }
            "csc" => {
                want(2)?;
                (
                    vec![lf(Dense), lf(Compressed)],
                    vec![Mode(1), Mode(0)],
                    FormatParams::default(),
                )
            }
            "dcsr" => {
                want(2)?;
                (
                    vec![lf(Compressed), lf(Compressed)],
                    modes(2),
                    FormatParams::default(),
                )
            }
            "csf" => {
                if order == 0 {
                    return Err(FormatError::OrderMismatch {
                        name: lname.clone(),
                        expected: 3,
                        got: 0,
                    });
                }
                (
                    vec![lf(Compressed); order],
                    modes(order),
                    FormatParams::default(),
                )
            }
            "bcsr" => {
                want(2)?;
                expect_blocks(2)?;
                let (b0, b1) = (block(0)?, block(1)?);
                (
                    vec![lf(Dense), lf(Compressed), lf(Dense), lf(Dense)],
                    vec![
                        BlockOuter { mode: 0, block: b0 },
                        BlockOuter { mode: 1, block: b1 },
                        BlockInner { mode: 0, block: b0 },
                        BlockInner { mode: 1, block: b1 },
                    ],
                    FormatParams::default(),
                )
            }
            "csb" => {
                want(2)?;
                expect_blocks(2)?;
                let (b0, b1) = (block(0)?, block(1)?);
                (
                    vec![
                        lf(Dense),
                        lf(Dense),
                        lf(Compressed)
                            .set(Property::Ordered, false)
                            .set(Property::Unique, false),
                        lf(Singleton).set(Property::Ordered, false),
                    ],
                    vec![
                        BlockOuter { mode: 0, block: b0 },
                        BlockOuter { mode: 1, block: b1 },
                        BlockInner { mode: 0, block: b0 },
                        BlockInner { mode: 1, block: b1 },
                    ],
                    FormatParams::default(),
                )
            }
            "ell" => {
                want(2)?;
                (
                    vec![lf(Dense), lf(Dense), lf(Singleton)],
                    vec![Slot, Mode(0), Mode(1)],
                    FormatParams::default(),
                )
            }
            "dia" => {
                want(2)?;
                (
                    vec![lf(Dense), lf(Range), lf(Offset)],
                    vec![Diagonal, Mode(0), Mode(1)],
                    FormatParams::default(),
                )
            }
            "mode-generic" => {
                want(3)?;
                expect_blocks(1)?;
                let b = block(0)?;
                (
                    vec![non_unique(Compressed), lf(Singleton), lf(Dense), lf(Dense)],
                    vec![
                        Mode(0),
                        BlockOuter { mode: 1, block: b },
                        BlockInner { mode: 1, block: b },
                        Mode(2),
                    ],
                    FormatParams::default(),
                )
            }
            _ => return Err(FormatError::UnknownPreset(name.to_string())),
        };
    let f = TensorFormat {
        name: lname.clone(),
        order,
        levels,
        level_dims: dims,
        params,
    };
    f.check()?;
    Ok(f)
}
