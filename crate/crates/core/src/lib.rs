//! Sparse tensor algebra built from composable level formats.

pub mod bench;
pub mod codegen;
pub mod engine;
pub mod formats;
pub mod graph;
pub mod io;
pub mod lattice;
pub mod levels;
pub mod notation;
pub mod scalar;

pub use engine::{convert, evaluate, EngineError, Kernel, PlanOptions};
pub use formats::{parse_format, preset, CoordList, LevelDim, TensorFormat, TensorStorage};
pub use levels::{LevelFormat, LevelKind, LevelStorage};
pub use scalar::{rel_close, Idx, Scalar};

pub type Storage = TensorStorage<f64>;
pub type StorageF32 = TensorStorage<f32>;
pub type Coords = CoordList<f64>;
pub type CoordsF32 = CoordList<f32>;

/// Any error raised by the library, tagged with the stage it came from.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format: {0}")]
    Format(#[from] formats::FormatError),
    #[error("expression: {0}")]
    Notation(#[from] notation::NotationError),
    #[error("level: {0}")]
    Level(#[from] levels::LevelError),
    #[error("io: {0}")]
    Io(#[from] io::IoError),
    #[error("kernel: {0}")]
    Engine(#[from] engine::EngineError),
    #[error("codegen: {0}")]
    Codegen(#[from] codegen::CodegenError),
}
