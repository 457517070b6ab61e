//! C code generation: the schedule is lowered to a loop IR with abstract
//! level-function calls, the calls are inlined per level kind, and the
//! result is printed as a C99 function plus an optional standalone driver.

pub mod emit;
pub mod inline;
pub mod ir;
pub mod lower;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

use crate::engine::{hash_width, EngineError, Kernel as Planned, OutputMode};
use crate::formats::{TensorFormat, TensorStorage};
use crate::levels::{LevelKind, LevelStorage};
use crate::scalar::{Idx, Scalar};
use lower::{Field, Source};

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cannot generate code: {0}")]
    Unsupported(String),
    #[error("no C compiler found (set SPARSE_LEVELS_CC)")]
    NoCompiler,
    #[error("C compilation failed:\n{0}")]
    Compile(String),
    #[error("generated kernel failed: {0}")]
    Run(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Width of the emitted `idx_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IdxType {
    #[default]
    I32,
    I64,
}

impl IdxType {
    pub fn c_type(self) -> &'static str {
        match self {
            IdxType::I32 => "int32_t",
            IdxType::I64 => "int64_t",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CodegenOptions {
    pub name: String,
    pub idx: IdxType,
}

impl Default for CodegenOptions {
    fn default() -> Self {
        CodegenOptions {
            name: "kernel".into(),
            idx: IdxType::I32,
        }
    }
}

/// Generated code for one planned kernel.
#[derive(Debug, Clone)]
pub struct Generated {
    /// IR before level functions are inlined.
    pub lowered: ir::Kernel,
    /// IR after inlining.
    pub kernel: ir::Kernel,
    /// Prelude and kernel function.
    pub source: String,
    /// `main` reading a parameter file; append to `source` to build a program.
    pub driver: String,
    sources: Vec<Source>,
    out_name: String,
    out_format: TensorFormat,
    out_dims: Vec<usize>,
    out_mode: OutputMode,
}

pub fn generate<T: Scalar>(k: &Planned, opts: &CodegenOptions) -> Result<Generated, CodegenError> {
    let s = &k.schedule;
    let lowered = lower::lower(s, &opts.name)?;
    let body = inline::inline(lowered.kernel.body.clone())?;
    let kernel = ir::Kernel {
        body,
        ..lowered.kernel.clone()
    };
    let levels = lowered.out_levels.len();
    let source = emit::emit_kernel(&kernel, opts.idx, T::C_TYPE, levels)?;
    let driver = emit::emit_driver(&kernel, levels, T::C_SCANF, T::C_PRINTF);
    Ok(Generated {
        lowered: lowered.kernel,
        kernel,
        source,
        driver,
        sources: lowered.sources,
        out_name: s.graph.paths[0].tensor.clone(),
        out_format: k.out_format.clone(),
        out_dims: s.out_dims.clone(),
        out_mode: s.output,
    })
}

impl Generated {
    /// Loop structure of the kernel, one line per loop.
    pub fn skeleton(&self) -> String {
        ir::skeleton(&self.kernel.body)
    }

    fn out_extent(&self, k: usize) -> usize {
        let m = self.out_format.level_dims[k]
            .mode()
            .expect("simple output format");
        self.out_dims[m]
    }

    /// The driver's input file for these operands.
    pub fn data_file<T: Scalar>(
        &self,
        operands: &BTreeMap<String, &TensorStorage<T>>,
    ) -> Result<String, CodegenError> {
        let mut out = String::new();
        for src in &self.sources {
            if src.tensor == self.out_name && !operands.contains_key(&src.tensor) {
                let n = self.out_extent(src.level);
                let v = match src.field {
                    Field::Dim => n,
                    Field::Width => hash_width(&self.out_format, n),
                    _ => {
                        return Err(CodegenError::Unsupported(format!(
                            "output field {:?}",
                            src.field
                        )))
                    }
                };
                let _ = writeln!(out, "{v}");
                continue;
            }
            let t = operands
                .get(&src.tensor)
                .ok_or_else(|| EngineError::MissingInput(src.tensor.clone()))?;
            let idx_list = |out: &mut String, a: &[Idx]| {
                let _ = write!(out, "{}", a.len());
                for x in a {
                    let _ = write!(out, " {x}");
                }
                out.push('\n');
            };
            if src.field == Field::Vals {
                let _ = write!(out, "{}", t.vals.len());
                for v in &t.vals {
                    let _ = write!(out, " {:e}", v.to_f64_lossy());
                }
                out.push('\n');
                continue;
            }
            let l = &t.levels[src.level];
            match src.field {
                Field::Pos => idx_list(&mut out, &l.pos),
                Field::Crd => idx_list(&mut out, &l.crd),
                Field::Offset => idx_list(&mut out, &l.offset),
                Field::Dim => writeln!(out, "{}", l.dim).unwrap_or(()),
                Field::ParentDim => writeln!(out, "{}", l.parent_dim).unwrap_or(()),
                Field::Segment => writeln!(out, "{}", l.segment).unwrap_or(()),
                Field::Width => writeln!(out, "{}", l.width).unwrap_or(()),
                Field::Stride => writeln!(out, "{}", l.layout.stride).unwrap_or(()),
                Field::Base => writeln!(out, "{}", l.layout.base).unwrap_or(()),
                Field::Vals => unreachable!(),
            }
        }
        Ok(out)
    }

    /// Rebuild the output tensor from the driver's printed arrays.
    pub fn parse_output<T: Scalar>(&self, text: &str) -> Result<TensorStorage<T>, CodegenError> {
        let bad = |m: &str| CodegenError::Run(format!("malformed kernel output: {m}"));
        let mut lines = text.lines();
        let mut next = |tag: &str| -> Result<Vec<String>, CodegenError> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(tag) {
                return Err(bad(&format!("expected `{tag}`")));
            }
            let n: usize = it
                .next()
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| bad("length"))?;
            let v: Vec<String> = it.map(str::to_string).collect();
            if v.len() != n {
                return Err(bad("length mismatch"));
            }
            Ok(v)
        };
        let ints = |v: Vec<String>| -> Result<Vec<Idx>, CodegenError> {
            v.iter().map(|x| x.parse().map_err(|_| bad(x))).collect()
        };
        let nlev = self.out_format.levels.len();
        let mut levels = Vec::with_capacity(nlev);
        for k in 0..nlev {
            let pos = ints(next("pos")?)?;
            let crd = ints(next("crd")?)?;
            let lf = self.out_format.levels[k];
            let n = self.out_extent(k);
            let mut l = match lf.kind {
                LevelKind::Dense => LevelStorage::dense(n),
                LevelKind::Compressed => LevelStorage::compressed(lf, pos, crd),
                LevelKind::Singleton => LevelStorage::singleton(lf, crd),
                LevelKind::Hashed => LevelStorage::hashed(hash_width(&self.out_format, n), crd),
                k => {
                    return Err(CodegenError::Unsupported(format!(
                        "{} output level",
                        k.name()
                    )))
                }
            };
            l.format = lf;
            levels.push(l);
        }
        let vals: Vec<T> = next("vals")?
            .iter()
            .map(|x| x.parse::<f64>().map(T::from_f64_lossy).map_err(|_| bad(x)))
            .collect::<Result<_, _>>()?;
        if self.out_mode == OutputMode::Scalar {
            return Ok(TensorStorage::scalar(
                vals.first().copied().unwrap_or_else(T::zero),
            ));
        }
        Ok(TensorStorage {
            format: self.out_format.clone(),
            dims: self.out_dims.clone(),
            levels,
            vals,
        })
    }

    /// Build the kernel and driver with the available C compiler.
    pub fn compile(&self) -> Result<Compiled, CodegenError> {
        let cc = find_compiler().ok_or(CodegenError::NoCompiler)?;
        let dir = tempfile::tempdir()?;
        let src = dir.path().join("kernel.c");
        std::fs::write(&src, format!("{}{}", self.source, self.driver))?;
        let exe = dir.path().join("kernel");
        let out = Command::new(&cc)
            .args(["-O2", "-std=c99", "-o"])
            .arg(&exe)
            .arg(&src)
            .arg("-lm")
            .output()?;
        if !out.status.success() {
            return Err(CodegenError::Compile(
                String::from_utf8_lossy(&out.stderr).into_owned(),
            ));
        }
        Ok(Compiled { dir, exe })
    }
}

/// A compiled kernel program.
pub struct Compiled {
    dir: tempfile::TempDir,
    exe: PathBuf,
}

impl Compiled {
    pub fn path(&self) -> &Path {
        &self.exe
    }

    pub fn run<T: Scalar>(
        &self,
        g: &Generated,
        operands: &BTreeMap<String, &TensorStorage<T>>,
    ) -> Result<TensorStorage<T>, CodegenError> {
        let data = self.dir.path().join("input.txt");
        std::fs::write(&data, g.data_file(operands)?)?;
        let out = Command::new(&self.exe).arg(&data).output()?;
        if !out.status.success() {
            return Err(CodegenError::Run(format!(
                "exit status {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr)
            )));
        }
        g.parse_output(&String::from_utf8_lossy(&out.stdout))
    }
}

/// `SPARSE_LEVELS_CC` if set, else the first of `cc`, `gcc`, `clang` that runs.
pub fn find_compiler() -> Option<String> {
    if let Ok(cc) = std::env::var("SPARSE_LEVELS_CC") {
        if !cc.trim().is_empty() {
            return Some(cc);
        }
    }
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| {
            Command::new(c)
                .arg("--version")
                .output()
                .map(|o| o.status.success())
                .unwrap_or(false)
        })
        .map(str::to_string)
}

/// Generate, compile and run `k` on `operands`.
pub fn compile_and_run<T: Scalar>(
    k: &Planned,
    operands: &BTreeMap<String, &TensorStorage<T>>,
    opts: &CodegenOptions,
) -> Result<TensorStorage<T>, CodegenError> {
    let g = generate::<T>(k, opts)?;
    g.compile()?.run(&g, operands)
}
