//! `sparse-levels`: compute, convert, generate code for, inspect and time
//! sparse tensor kernels.
//!
//! Exit status: 0 on success, 1 on runtime failures, 2 on usage or parse
//! errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use sparse_levels::bench::{self, parse_synth, Scenario};
use sparse_levels::codegen::{self, CodegenError, CodegenOptions, IdxType};
use sparse_levels::engine::{EngineError, Kernel, PlanOptions};
use sparse_levels::formats::FormatError;
use sparse_levels::graph::TensorInfo;
use sparse_levels::io::{self, synth, IoError};
use sparse_levels::notation;
use sparse_levels::{convert, parse_format, Coords, Storage};

#[derive(Parser)]
#[command(
    name = "sparse-levels",
    version,
    about = "Sparse tensor algebra over per-level storage formats"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct Operands {
    /// Tensor format, NAME=SPEC (preset like `csr` or a composition like
    /// `{dense,compressed}`); unlisted tensors are dense
    #[arg(long = "format", value_name = "NAME=SPEC")]
    formats: Vec<String>,
    /// Read a tensor from a .mtx or .tns file
    #[arg(long = "input", value_name = "NAME=PATH")]
    inputs: Vec<String>,
    /// Generate a tensor: banded:N:K, random:DIMS:DENSITY, hypersparse:NxM:FRACTION
    #[arg(long = "synth", value_name = "NAME=SPEC")]
    synths: Vec<String>,
    /// Tensor dimensions, e.g. A=30x40 (.tns inputs, or planning without data)
    #[arg(long = "dims", value_name = "NAME=DIMS")]
    dims: Vec<String>,
    /// Seed for generated tensors
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Interp,
    Codegen,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate an assignment such as "y(i) = A(i,j) * x(j)"
    Compute {
        expr: String,
        #[command(flatten)]
        ops: Operands,
        /// Result file (.mtx or .tns); printed as .tns text when absent
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "interp")]
        mode: Mode,
    },
    /// Emit a C kernel for an assignment
    Codegen {
        expr: String,
        #[command(flatten)]
        ops: Operands,
        /// Output file; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also emit a `main` that reads parameters from a file
        #[arg(long)]
        driver: bool,
        #[arg(long, default_value = "kernel")]
        name: String,
        /// Use 64-bit coordinates and positions
        #[arg(long)]
        idx64: bool,
    },
    /// Re-store a tensor file in another format and write it back out
    Convert {
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        input: PathBuf,
        output: PathBuf,
        /// Print the converted level arrays
        #[arg(long)]
        show: bool,
    },
    /// Print planning internals for an assignment
    #[command(group(ArgGroup::new("what").required(true).args(["lattice", "graph", "ir"])))]
    Dump {
        expr: String,
        #[command(flatten)]
        ops: Operands,
        #[arg(long)]
        lattice: bool,
        #[arg(long)]
        graph: bool,
        /// Loop IR with level-function calls
        #[arg(long)]
        ir: bool,
        /// With --ir: after inlining the level functions
        #[arg(long)]
        inlined: bool,
    },
    /// Time format alternatives; prints a TSV table
    Bench {
        /// coo-vs-csr-spmv, dia-vs-csr-spmv or vector-formats
        scenario: String,
        #[arg(long, conflicts_with = "synth")]
        input: Option<PathBuf>,
        /// banded:N:K, random:NxM:DENSITY or hypersparse:NxM:FRACTION
        #[arg(long)]
        synth: Option<String>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
}

enum Fail {
    Usage(String),
    Runtime(String),
}

type Res<T> = Result<T, Fail>;

impl From<FormatError> for Fail {
    fn from(e: FormatError) -> Self {
        Fail::Usage(format!("format: {e}"))
    }
}

impl From<notation::NotationError> for Fail {
    fn from(e: notation::NotationError) -> Self {
        Fail::Usage(format!("expression: {e}"))
    }
}

impl From<IoError> for Fail {
    fn from(e: IoError) -> Self {
        Fail::Runtime(format!("io: {e}"))
    }
}

impl From<EngineError> for Fail {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Notation(e) => e.into(),
            EngineError::Format(e) => e.into(),
            e => Fail::Runtime(format!("kernel: {e}")),
        }
    }
}

impl From<CodegenError> for Fail {
    fn from(e: CodegenError) -> Self {
        match e {
            CodegenError::Engine(e) => e.into(),
            e => Fail::Runtime(format!("codegen: {e}")),
        }
    }
}

fn split_kv<'a>(s: &'a str, what: &str) -> Res<(&'a str, &'a str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| Fail::Usage(format!("{what} expects NAME=VALUE, got `{s}`")))
}

fn parse_dims(s: &str) -> Res<Vec<usize>> {
    s.split('x')
        .map(|d| d.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Fail::Usage(format!("bad dimensions `{s}` (expected e.g. 30x40)")))
}

fn read_tensor(path: &Path, dims: Option<&[usize]>) -> Res<Coords> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mtx") => Ok(io::read_mtx(path)?),
        Some("tns") => Ok(io::read_tns(path, dims)?),
        _ => Err(Fail::Usage(format!(
            "{}: expected a .mtx or .tns file",
            path.display()
        ))),
    }
}

fn write_tensor(path: &Path, list: &Coords) -> Res<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mtx") => Ok(io::write_mtx(list, path)?),
        Some("tns") => {
            io::write_tns(list, path)?;
            let mut side = path.as_os_str().to_owned();
            side.push(".dims");
            Ok(io::write_dims_sidecar(&list.dims, Path::new(&side))?)
        }
        _ => Err(Fail::Usage(format!(
            "{}: expected a .mtx or .tns file",
            path.display()
        ))),
    }
}

/// Everything known about the tensors of one assignment.
struct Bound {
    text: String,
    assignment: notation::Assignment,
    formats: BTreeMap<String, String>,
    data: BTreeMap<String, Coords>,
    dims: BTreeMap<String, Vec<usize>>,
}

impl Bound {
    fn new(expr: &str, ops: &Operands, need_data: bool) -> Res<Bound> {
        let assignment = notation::parse(expr)?;
        let names: Vec<String> = assignment
            .all_accesses()
            .iter()
            .map(|a| a.tensor.clone())
            .collect();
        let known = |n: &str, flag: &str| -> Res<()> {
            if names.iter().any(|m| m == n) {
                Ok(())
            } else {
                Err(Fail::Usage(format!(
                    "{flag} names `{n}`, which the expression does not use"
                )))
            }
        };
        let mut formats = BTreeMap::new();
        for f in &ops.formats {
            let (n, s) = split_kv(f, "--format")?;
            known(n, "--format")?;
            formats.insert(n.to_string(), s.to_string());
        }
        let mut dims = BTreeMap::new();
        for d in &ops.dims {
            let (n, s) = split_kv(d, "--dims")?;
            known(n, "--dims")?;
            dims.insert(n.to_string(), parse_dims(s)?);
        }
        let mut data = BTreeMap::new();
        for i in &ops.inputs {
            let (n, p) = split_kv(i, "--input")?;
            known(n, "--input")?;
            let l = read_tensor(Path::new(p), dims.get(n).map(Vec::as_slice))?;
            data.insert(n.to_string(), l);
        }
        for (k, s) in ops.synths.iter().enumerate() {
            let (n, spec) = split_kv(s, "--synth")?;
            known(n, "--synth")?;
            let (kind, d) = parse_synth(spec).map_err(Fail::Usage)?;
            data.insert(n.to_string(), synth(kind, &d, ops.seed + k as u64));
        }
        for (n, l) in &data {
            dims.insert(n.clone(), l.dims.clone());
        }
        let out = assignment.lhs.tensor.clone();
        for n in names.iter().skip(1) {
            if *n == out {
                continue;
            }
            if need_data && !data.contains_key(n) {
                return Err(Fail::Usage(format!(
                    "no data for `{n}`: give --input or --synth"
                )));
            }
            if !dims.contains_key(n) {
                return Err(Fail::Usage(format!(
                    "no dimensions for `{n}`: give --input, --synth or --dims"
                )));
            }
        }
        Ok(Bound {
            text: expr.to_string(),
            assignment,
            formats,
            data,
            dims,
        })
    }

    fn format_of(&self, name: &str, order: usize) -> Res<sparse_levels::TensorFormat> {
        let spec = self
            .formats
            .get(name)
            .map(String::as_str)
            .unwrap_or("dense");
        Ok(parse_format(spec, Some(order))?)
    }

    fn out_format(&self) -> Res<sparse_levels::TensorFormat> {
        let lhs = &self.assignment.lhs;
        self.format_of(&lhs.tensor, lhs.vars.len())
    }

    fn operands(&self) -> Res<BTreeMap<String, Storage>> {
        let mut m = BTreeMap::new();
        for (n, l) in &self.data {
            let f = self.format_of(n, l.order())?;
            m.insert(n.clone(), Storage::assemble(&f, &l.dims, l)?);
        }
        Ok(m)
    }

    fn kernel(&self) -> Res<Kernel> {
        let out = self.assignment.lhs.tensor.clone();
        let mut infos = BTreeMap::new();
        for (n, d) in &self.dims {
            if *n != out {
                infos.insert(
                    n.clone(),
                    TensorInfo::from_format(&self.format_of(n, d.len())?, d),
                );
            }
        }
        Ok(Kernel::new(
            &self.text,
            &infos,
            &self.out_format()?,
            PlanOptions::default(),
        )?)
    }
}

fn compute(expr: &str, ops: &Operands, output: Option<&Path>, mode: Mode) -> Res<()> {
    let b = Bound::new(expr, ops, true)?;
    let operands = b.operands()?;
    let k = Kernel::for_operands(&b.text, &operands, &b.out_format()?, PlanOptions::default())?;
    let result = match mode {
        Mode::Interp => k.run(&operands)?,
        Mode::Codegen => {
            let refs = operands.iter().map(|(n, s)| (n.clone(), s)).collect();
            codegen::compile_and_run(&k, &refs, &CodegenOptions::default())?
        }
    };
    let list = result.to_coords()?.canonical();
    match output {
        Some(p) => write_tensor(p, &list),
        None => {
            print!("{}", io::write_tns_string(&list));
            Ok(())
        }
    }
}

fn emit(
    expr: &str,
    ops: &Operands,
    out: Option<&Path>,
    driver: bool,
    name: &str,
    idx64: bool,
) -> Res<()> {
    let b = Bound::new(expr, ops, false)?;
    let k = b.kernel()?;
    let opts = CodegenOptions {
        name: name.to_string(),
        idx: if idx64 { IdxType::I64 } else { IdxType::I32 },
    };
    let g = codegen::generate::<f64>(&k, &opts)?;
    let mut text = g.source.clone();
    if driver {
        text.push_str(&g.driver);
    }
    match out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Fail::Runtime(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn convert_file(from: &str, to: &str, input: &Path, output: &Path, show: bool) -> Res<()> {
    let list = read_tensor(input, None)?;
    let src_f = parse_format(from, Some(list.order()))?;
    let dst_f = parse_format(to, Some(list.order()))?;
    let src = Storage::assemble(&src_f, &list.dims, &list)?;
    let dst = convert(&src, &dst_f)?;
    if show {
        for (k, l) in dst.levels.iter().enumerate() {
            println!("level {} {}", k + 1, l.kind().name());
            if !l.pos.is_empty() {
                println!("  pos {:?}", l.pos);
            }
            if !l.crd.is_empty() {
                println!("  crd {:?}", l.crd);
            }
        }
        println!("vals {:?}", dst.vals);
    }
    write_tensor(output, &dst.to_coords()?.canonical())
}

fn dump(
    expr: &str,
    ops: &Operands,
    lattice: bool,
    graph: bool,
    ir: bool,
    inlined: bool,
) -> Res<()> {
    let b = Bound::new(expr, ops, false)?;
    let k = b.kernel()?;
    if graph {
        print!("{}", k.schedule.graph.dump());
    }
    if lattice {
        print!("{}", k.schedule.dump_lattices());
    }
    if ir {
        let g = codegen::generate::<f64>(&k, &CodegenOptions::default())?;
        print!("{}", if inlined { &g.kernel } else { &g.lowered });
    }
    Ok(())
}

fn run_bench(scenario: &str, input: Option<&Path>, spec: Option<&str>, reps: usize) -> Res<()> {
    let sc: Scenario = scenario.parse().map_err(Fail::Usage)?;
    let (name, list) = match (input, spec) {
        (Some(p), _) => (p.display().to_string(), read_tensor(p, None)?),
        (None, Some(s)) => {
            let (kind, d) = parse_synth(s).map_err(Fail::Usage)?;
            (s.to_string(), synth(kind, &d, 1))
        }
        (None, None) => (
            "banded:100000:5".to_string(),
            synth(io::Synth::Banded(5), &[100_000, 100_000], 1),
        ),
    };
    if list.order() != 2 {
        return Err(Fail::Usage(format!("{name}: benchmarks take matrices")));
    }
    print!("{}", bench::run(sc, &name, &list, reps)?.to_tsv());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.cmd {
        Cmd::Compute {
            expr,
            ops,
            output,
            mode,
        } => compute(expr, ops, output.as_deref(), *mode),
        Cmd::Codegen {
            expr,
            ops,
            out,
            driver,
            name,
            idx64,
        } => emit(expr, ops, out.as_deref(), *driver, name, *idx64),
        Cmd::Convert {
            from,
            to,
            input,
            output,
            show,
        } => convert_file(from, to, input, output, *show),
        Cmd::Dump {
            expr,
            ops,
            lattice,
            graph,
            ir,
            inlined,
        } => dump(expr, ops, *lattice, *graph, *ir, *inlined),
        Cmd::Bench {
            scenario,
            input,
            synth,
            reps,
        } => run_bench(scenario, input.as_deref(), synth.as_deref(), *reps),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Fail::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
