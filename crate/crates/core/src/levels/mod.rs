//! Per-dimension level formats.
//!
//! A tensor is stored as a coordinate hierarchy with one level per stored
//! dimension. Each level is one of six [`LevelKind`]s; what a kind can do is
//! described by its [`Capability`] set and the invariants it guarantees by a
//! [`PropertySet`]. Everything above this module manipulates storage only
//! through the level functions on [`LevelStorage`].

mod storage;

pub use storage::{CrdLayout, LevelStorage};

use std::fmt;

use thiserror::Error;

use crate::scalar::Idx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LevelKind {
    Dense,
    Range,
    Compressed,
    Singleton,
    Offset,
    Hashed,
}

impl LevelKind {
    pub const ALL: [LevelKind; 6] = [
        LevelKind::Dense,
        LevelKind::Range,
        LevelKind::Compressed,
        LevelKind::Singleton,
        LevelKind::Offset,
        LevelKind::Hashed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LevelKind::Dense => "dense",
            LevelKind::Range => "range",
            LevelKind::Compressed => "compressed",
            LevelKind::Singleton => "singleton",
            LevelKind::Offset => "offset",
            LevelKind::Hashed => "hashed",
        }
    }

    pub fn from_name(name: &str) -> Option<LevelKind> {
        LevelKind::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn supports(self, cap: Capability) -> bool {
        use Capability::*;
        use LevelKind::*;
        matches!(
            (self, cap),
            (Dense, ValueIteration | Locate | Insert)
                | (Range, ValueIteration)
                | (Compressed, PositionIteration | Append)
                | (Singleton, PositionIteration | Append)
                | (Offset, PositionIteration)
                | (Hashed, PositionIteration | Locate | Insert)
        )
    }

    pub fn capabilities(self) -> Vec<Capability> {
        Capability::ALL
            .into_iter()
            .filter(|c| self.supports(*c))
            .collect()
    }

    pub fn value_iterable(self) -> bool {
        self.supports(Capability::ValueIteration)
    }

    pub fn position_iterable(self) -> bool {
        self.supports(Capability::PositionIteration)
    }

    pub fn has_locate(self) -> bool {
        self.supports(Capability::Locate)
    }

    pub fn has_insert(self) -> bool {
        self.supports(Capability::Insert)
    }

    pub fn has_append(self) -> bool {
        self.supports(Capability::Append)
    }

    /// Fixed value of each property for this kind; `None` means configurable.
    pub fn fixed(self, prop: Property) -> Option<bool> {
        use LevelKind::*;
        use Property::*;
        match (self, prop) {
            (Dense, Full) => Some(true),
            (Dense, Branchless) => Some(false),
            (Dense, Compact) => Some(true),
            (Range, Full | Branchless | Compact) => Some(false),
            (Compressed, Branchless) => Some(false),
            (Compressed, Compact) => Some(true),
            (Singleton, Branchless | Compact) => Some(true),
            (Offset, Full) => Some(false),
            (Offset, Branchless) => Some(true),
            (Offset, Compact) => Some(false),
            (Hashed, Ordered | Branchless | Compact) => Some(false),
            _ => None,
        }
    }

    /// Defaults for configurable properties: ordered and unique unless the
    /// kind forbids it, not full unless the kind forces it.
    pub fn default_properties(self) -> PropertySet {
        let pick = |p: Property, default: bool| self.fixed(p).unwrap_or(default);
        PropertySet {
            full: pick(Property::Full, false),
            ordered: pick(Property::Ordered, true),
            unique: pick(Property::Unique, true),
            branchless: pick(Property::Branchless, false),
            compact: pick(Property::Compact, false),
        }
    }
}

impl fmt::Display for LevelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Capability {
    ValueIteration,
    PositionIteration,
    Locate,
    Insert,
    Append,
}

impl Capability {
    pub const ALL: [Capability; 5] = [
        Capability::ValueIteration,
        Capability::PositionIteration,
        Capability::Locate,
        Capability::Insert,
        Capability::Append,
    ];
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Capability::ValueIteration => "coordinate value iteration",
            Capability::PositionIteration => "coordinate position iteration",
            Capability::Locate => "locate",
            Capability::Insert => "insert",
            Capability::Append => "append",
        };
        f.write_str(s)
    }
}

/// The individual level functions, grouped by the capability they implement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LevelFunction {
    CoordBounds,
    CoordAccess,
    PosBounds,
    PosAccess,
    Locate,
    Size,
    InsertInit,
    InsertCoord,
    InsertFinalize,
    AppendInit,
    AppendCoord,
    AppendEdges,
    AppendFinalize,
}

impl LevelFunction {
    pub const ALL: [LevelFunction; 13] = [
        LevelFunction::CoordBounds,
        LevelFunction::CoordAccess,
        LevelFunction::PosBounds,
        LevelFunction::PosAccess,
        LevelFunction::Locate,
        LevelFunction::Size,
        LevelFunction::InsertInit,
        LevelFunction::InsertCoord,
        LevelFunction::InsertFinalize,
        LevelFunction::AppendInit,
        LevelFunction::AppendCoord,
        LevelFunction::AppendEdges,
        LevelFunction::AppendFinalize,
    ];

    pub fn capability(self) -> Capability {
        use LevelFunction::*;
        match self {
            CoordBounds | CoordAccess => Capability::ValueIteration,
            PosBounds | PosAccess => Capability::PositionIteration,
            Locate => Capability::Locate,
            Size | InsertInit | InsertCoord | InsertFinalize => Capability::Insert,
            AppendInit | AppendCoord | AppendEdges | AppendFinalize => Capability::Append,
        }
    }

    pub fn name(self) -> &'static str {
        use LevelFunction::*;
        match self {
            CoordBounds => "coord_bounds",
            CoordAccess => "coord_access",
            PosBounds => "pos_bounds",
            PosAccess => "pos_access",
            Locate => "locate",
            Size => "size",
            InsertInit => "insert_init",
            InsertCoord => "insert_coord",
            InsertFinalize => "insert_finalize",
            AppendInit => "append_init",
            AppendCoord => "append_coord",
            AppendEdges => "append_edges",
            AppendFinalize => "append_finalize",
        }
    }
}

impl fmt::Display for LevelFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Property {
    Full,
    Ordered,
    Unique,
    Branchless,
    Compact,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Property::Full => "full",
            Property::Ordered => "ordered",
            Property::Unique => "unique",
            Property::Branchless => "branchless",
            Property::Compact => "compact",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PropertySet {
    pub full: bool,
    pub ordered: bool,
    pub unique: bool,
    pub branchless: bool,
    pub compact: bool,
}

impl PropertySet {
    pub fn get(&self, p: Property) -> bool {
        match p {
            Property::Full => self.full,
            Property::Ordered => self.ordered,
            Property::Unique => self.unique,
            Property::Branchless => self.branchless,
            Property::Compact => self.compact,
        }
    }

    fn set(&mut self, p: Property, v: bool) {
        match p {
            Property::Full => self.full = v,
            Property::Ordered => self.ordered = v,
            Property::Unique => self.unique = v,
            Property::Branchless => self.branchless = v,
            Property::Compact => self.compact = v,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LevelError {
    #[error("{kind} level does not support {function} ({capability})")]
    UnsupportedCapability {
        kind: LevelKind,
        function: LevelFunction,
        capability: Capability,
    },
    #[error("{kind} level is never {property}={value}; the property is fixed")]
    FixedProperty {
        kind: LevelKind,
        property: Property,
        value: bool,
    },
    #[error("hashed segment {segment} is full (W = {width}); choose a larger width")]
    SegmentFull { segment: usize, width: usize },
    #[error("append out of order: parent position {got} after {last}")]
    OutOfOrderAppend { last: Idx, got: Idx },
    #[error("position {pos} outside level storage of length {len}")]
    PositionOutOfRange { pos: Idx, len: usize },
}

/// A level kind together with its configured properties: the unit of format
/// composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LevelFormat {
    pub kind: LevelKind,
    pub props: PropertySet,
}

impl LevelFormat {
    pub fn new(kind: LevelKind) -> Self {
        LevelFormat {
            kind,
            props: kind.default_properties(),
        }
    }

    pub fn dense() -> Self {
        Self::new(LevelKind::Dense)
    }
    pub fn range() -> Self {
        Self::new(LevelKind::Range)
    }
    pub fn compressed() -> Self {
        Self::new(LevelKind::Compressed)
    }
    pub fn singleton() -> Self {
        Self::new(LevelKind::Singleton)
    }
    pub fn offset() -> Self {
        Self::new(LevelKind::Offset)
    }
    pub fn hashed() -> Self {
        Self::new(LevelKind::Hashed)
    }

    /// Configure a property. Fails when the kind fixes it to the other value.
    pub fn with(mut self, prop: Property, value: bool) -> Result<Self, LevelError> {
        match self.kind.fixed(prop) {
            Some(fixed) if fixed != value => Err(LevelError::FixedProperty {
                kind: self.kind,
                property: prop,
                value,
            }),
            _ => {
                self.props.set(prop, value);
                Ok(self)
            }
        }
    }

    /// Infallible variant for presets, where the flags are known to be legal.
    pub(crate) fn set(self, prop: Property, value: bool) -> Self {
        self.with(prop, value)
            .expect("preset uses a fixed property")
    }

    pub fn supports(&self, cap: Capability) -> bool {
        self.kind.supports(cap)
    }
}

impl fmt::Display for LevelFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        let defaults = self.kind.default_properties();
        let mut flags = Vec::new();
        for (p, tag) in [
            (Property::Full, "f"),
            (Property::Ordered, "o"),
            (Property::Unique, "u"),
        ] {
            if self.props.get(p) != defaults.get(p) {
                flags.push(if self.props.get(p) {
                    tag.to_string()
                } else {
                    format!("~{tag}")
                });
            }
        }
        if !flags.is_empty() {
            write!(f, "({})", flags.join(","))?;
        }
        Ok(())
    }
}
