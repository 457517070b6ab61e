//! Kernel planning and execution.

mod exec;
pub mod iter;
mod output;
pub mod schedule;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::formats::{FormatError, TensorFormat, TensorStorage};
use crate::graph::{GraphError, TensorInfo};
use crate::lattice::LatticeError;
use crate::levels::LevelError;
use crate::notation::{self, Checked, NotationError};
use crate::scalar::Scalar;

pub use output::hash_width;
pub use schedule::{BindKind, Node, OutputMode, PlanOptions, Schedule};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Notation(#[from] NotationError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("unsupported output: {0}")]
    UnsupportedOutput(String),
    #[error("no tensor bound to `{0}`")]
    MissingInput(String),
    #[error("tensor `{tensor}` does not match the planned kernel: {msg}")]
    InputMismatch { tensor: String, msg: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    /// Loop iterations executed, over all loops.
    pub visits: u64,
}

/// A planned kernel for one assignment and one set of operand formats.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub checked: Checked,
    pub inputs: BTreeMap<String, TensorInfo>,
    pub out_format: TensorFormat,
    pub schedule: Schedule,
}

impl Kernel {
    /// Plan `text` (e.g. `y(i) = A(i,j) * x(j)`). The output's dimensions
    /// are taken from the index extents.
    pub fn new(
        text: &str,
        inputs: &BTreeMap<String, TensorInfo>,
        out_format: &TensorFormat,
        opts: PlanOptions,
    ) -> Result<Kernel, EngineError> {
        let a = notation::parse(text)?;
        let mut dims: BTreeMap<String, Vec<usize>> = inputs
            .iter()
            .map(|(k, v)| (k.clone(), v.dims.clone()))
            .collect();
        if !dims.contains_key(&a.lhs.tensor) {
            let mut out = Vec::new();
            for v in &a.lhs.vars {
                let e = a
                    .all_accesses()
                    .into_iter()
                    .skip(1)
                    .find_map(|acc| {
                        let k = acc.vars.iter().position(|x| x == v)?;
                        dims.get(&acc.tensor).and_then(|d| d.get(k).copied())
                    })
                    .ok_or_else(|| NotationError::LhsOnly(v.clone()))?;
                out.push(e);
            }
            dims.insert(a.lhs.tensor.clone(), out);
        }
        let checked = notation::validate(&a, &dims)?;
        let schedule = Schedule::build(&checked, inputs, out_format, opts)?;
        Ok(Kernel {
            checked,
            inputs: inputs.clone(),
            out_format: out_format.clone(),
            schedule,
        })
    }

    /// Plan a kernel for the formats and shapes of concrete operands.
    pub fn for_operands<T: Scalar>(
        text: &str,
        operands: &BTreeMap<String, TensorStorage<T>>,
        out_format: &TensorFormat,
        opts: PlanOptions,
    ) -> Result<Kernel, EngineError> {
        let infos = operands
            .iter()
            .map(|(k, v)| (k.clone(), TensorInfo::from_storage(v)))
            .collect();
        Kernel::new(text, &infos, out_format, opts)
    }

    pub fn output_dims(&self) -> &[usize] {
        &self.schedule.out_dims
    }

    pub fn run<T: Scalar>(
        &self,
        operands: &BTreeMap<String, TensorStorage<T>>,
    ) -> Result<TensorStorage<T>, EngineError> {
        Ok(self.run_with_stats(operands)?.0)
    }

    pub fn run_with_stats<T: Scalar>(
        &self,
        operands: &BTreeMap<String, TensorStorage<T>>,
    ) -> Result<(TensorStorage<T>, RunStats), EngineError> {
        let refs = operands.iter().map(|(k, v)| (k.clone(), v)).collect();
        self.run_refs(&refs)
    }

    /// Like [`Kernel::run_with_stats`] over borrowed operands.
    pub fn run_refs<T: Scalar>(
        &self,
        operands: &BTreeMap<String, &TensorStorage<T>>,
    ) -> Result<(TensorStorage<T>, RunStats), EngineError> {
        let s = &self.schedule;
        let mut tensors = vec![None];
        for p in &s.graph.paths[1..] {
            let t = operands
                .get(&p.tensor)
                .ok_or_else(|| EngineError::MissingInput(p.tensor.clone()))?;
            let info = &self.inputs[&p.tensor];
            if t.format.levels != info.format.levels
                || t.format.level_dims != info.format.level_dims
            {
                return Err(EngineError::InputMismatch {
                    tensor: p.tensor.clone(),
                    msg: format!("format `{}` but planned for `{}`", t.format, info.format),
                });
            }
            if t.dims != info.dims {
                return Err(EngineError::InputMismatch {
                    tensor: p.tensor.clone(),
                    msg: format!("dims {:?} but planned for {:?}", t.dims, info.dims),
                });
            }
            tensors.push(Some(*t));
        }
        let out = output::Assembler::new(s.output, &self.out_format, &s.out_dims)?;
        let (t, visits) = exec::Exec::new(s, tensors, out).run()?;
        Ok((t, RunStats { visits }))
    }
}

/// Plan and run in one step with default options.
pub fn evaluate<T: Scalar>(
    text: &str,
    operands: &BTreeMap<String, TensorStorage<T>>,
    out_format: &TensorFormat,
) -> Result<TensorStorage<T>, EngineError> {
    Kernel::for_operands(text, operands, out_format, PlanOptions::default())?.run(operands)
}

/// Store `src` in format `dst`. Destinations that can be written by a
/// kernel are filled by the identity kernel `A(i0,..) = B(i0,..)`; the
/// others (and orderings the identity cannot schedule) go through a sorted
/// coordinate list.
pub fn convert<T: Scalar>(
    src: &TensorStorage<T>,
    dst: &TensorFormat,
) -> Result<TensorStorage<T>, EngineError> {
    if dst.order != src.order() {
        return Err(FormatError::OrderMismatch {
            name: dst.name.clone(),
            expected: dst.order,
            got: src.order(),
        }
        .into());
    }
    if src.order() > 0 && dst.is_simple() {
        let vars: Vec<String> = (0..src.order()).map(|k| format!("i{k}")).collect();
        let text = format!("A({v}) = B({v})", v = vars.join(","));
        let mut infos = BTreeMap::new();
        infos.insert("B".to_string(), TensorInfo::from_storage(src));
        match Kernel::new(&text, &infos, dst, PlanOptions::default()) {
            Ok(k) => {
                let mut ops = BTreeMap::new();
                ops.insert("B".to_string(), src);
                return Ok(k.run_refs(&ops)?.0);
            }
            Err(
                EngineError::Graph(_)
                | EngineError::Unsupported(_)
                | EngineError::UnsupportedOutput(_)
                | EngineError::Lattice(_),
            ) => {}
            Err(e) => return Err(e),
        }
    }
    let list = src.to_coords()?.canonical();
    Ok(TensorStorage::assemble(dst, &src.dims, &list)?)
}
