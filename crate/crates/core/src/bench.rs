//! Timing harness for the format comparisons reported by `bench`.
//!
//! Times are medians over repetitions. Before each timed call a large
//! scratch buffer is written to push the operands out of cache; this only
//! approximates a cold cache.

use std::collections::BTreeMap;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use crate::engine::{convert, EngineError, Kernel, PlanOptions};
use crate::formats::{parse_format, CoordList, FormatError, TensorStorage};
use crate::io::{synth, Synth};

type Mat = TensorStorage<f64>;

const SPMV: &str = "y(i) = A(i,j) * x(j)";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    CooVsCsrSpmv,
    DiaVsCsrSpmv,
    VectorFormats,
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "coo-vs-csr-spmv" => Ok(Scenario::CooVsCsrSpmv),
            "dia-vs-csr-spmv" => Ok(Scenario::DiaVsCsrSpmv),
            "vector-formats" => Ok(Scenario::VectorFormats),
            _ => Err(format!(
                "unknown scenario `{s}` (expected coo-vs-csr-spmv, dia-vs-csr-spmv or vector-formats)"
            )),
        }
    }
}

/// Parse a synthetic tensor description: `banded:N:K` (N by N, K
/// diagonals), `random:DIMS:DENSITY` or `hypersparse:NxM:FRACTION`, with
/// DIMS written like `30x40` or `8x8x8`.
pub fn parse_synth(s: &str) -> Result<(Synth, Vec<usize>), String> {
    let bad = || {
        format!(
            "bad synthetic spec `{s}` (banded:N:K, random:DIMS:DENSITY, hypersparse:NxM:FRACTION)"
        )
    };
    let parts: Vec<&str> = s.split(':').collect();
    let dims = |t: &str| -> Result<Vec<usize>, String> {
        t.split('x')
            .map(|d| d.parse::<usize>().map_err(|_| bad()))
            .collect()
    };
    let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
    match parts[..] {
        ["banded", n, k] => {
            let n: usize = n.parse().map_err(|_| bad())?;
            Ok((Synth::Banded(k.parse().map_err(|_| bad())?), vec![n, n]))
        }
        ["random", d, p] => Ok((Synth::Random(num(p)?), dims(d)?)),
        ["hypersparse", d, p] => {
            let d = dims(d)?;
            if d.len() != 2 {
                return Err(bad());
            }
            Ok((Synth::Hypersparse(num(p)?), d))
        }
        _ => Err(bad()),
    }
}

/// A TSV table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    pub fn to_tsv(&self) -> String {
        let mut s = self.header.join("\t");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join("\t"));
            s.push('\n');
        }
        s
    }
}

struct Flusher(Vec<u8>);

impl Flusher {
    fn new() -> Self {
        Flusher(vec![0; 32 << 20])
    }

    fn flush(&mut self) {
        for b in self.0.iter_mut().step_by(64) {
            *b = b.wrapping_add(1);
        }
        black_box(&self.0);
    }
}

/// Median wall time in seconds of `f` over `reps` cold-ish runs.
fn time<R>(reps: usize, fl: &mut Flusher, mut f: impl FnMut() -> R) -> f64 {
    let mut ts = Vec::with_capacity(reps.max(1));
    for _ in 0..reps.max(1) {
        fl.flush();
        let t = Instant::now();
        black_box(f());
        ts.push(t.elapsed().as_secs_f64());
    }
    ts.sort_by(f64::total_cmp);
    ts[ts.len() / 2]
}

fn fmt_s(t: f64) -> String {
    format!("{t:.6}")
}

fn assemble(spec: &str, list: &CoordList<f64>) -> Result<Mat, FormatError> {
    let f = parse_format(spec, Some(list.order()))?;
    TensorStorage::assemble(&f, &list.dims, list)
}

fn spmv_kernel(a: &Mat, x: &Mat) -> Result<(Kernel, BTreeMap<String, Mat>), EngineError> {
    let ops = BTreeMap::from([("A".to_string(), a.clone()), ("x".to_string(), x.clone())]);
    let out = parse_format("dense", Some(1))?;
    Ok((
        Kernel::for_operands(SPMV, &ops, &out, PlanOptions::default())?,
        ops,
    ))
}

fn ones(n: usize) -> Result<Mat, FormatError> {
    let list = CoordList::from_dense(vec![n], &vec![1.0; n]);
    assemble("dense", &list)
}

/// Timings for one matrix: COO SpMV against converting to CSR first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConversionTradeoff {
    pub nnz: usize,
    pub coo_spmv: f64,
    pub convert: f64,
    pub csr_spmv: f64,
}

impl ConversionTradeoff {
    /// Smallest number of SpMVs for which converting to CSR pays off, or
    /// `None` when CSR SpMV is not faster than COO SpMV.
    pub fn break_even(&self) -> Option<u64> {
        let gain = self.coo_spmv - self.csr_spmv;
        (gain > 0.0).then(|| (self.convert / gain).floor() as u64 + 1)
    }
}

pub fn conversion_tradeoff(
    list: &CoordList<f64>,
    reps: usize,
) -> Result<ConversionTradeoff, EngineError> {
    let mut fl = Flusher::new();
    let coo = assemble("coo", list)?;
    let x = ones(list.dims[1])?;
    let csr_f = parse_format("csr", Some(2))?;
    let (k_coo, ops_coo) = spmv_kernel(&coo, &x)?;
    let csr = convert(&coo, &csr_f)?;
    let (k_csr, ops_csr) = spmv_kernel(&csr, &x)?;
    let coo_spmv = time(reps, &mut fl, || k_coo.run(&ops_coo).map(|r| r.vals.len()));
    let convert_t = time(reps, &mut fl, || {
        convert(&coo, &csr_f).map(|r| r.vals.len())
    });
    let csr_spmv = time(reps, &mut fl, || k_csr.run(&ops_csr).map(|r| r.vals.len()));
    Ok(ConversionTradeoff {
        nnz: list.len(),
        coo_spmv,
        convert: convert_t,
        csr_spmv,
    })
}

/// Run a scenario on one matrix.
pub fn run(
    scenario: Scenario,
    name: &str,
    list: &CoordList<f64>,
    reps: usize,
) -> Result<Report, EngineError> {
    let mut r = Report::default();
    let nnz = list.len().to_string();
    let hdr = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    match scenario {
        Scenario::CooVsCsrSpmv => {
            let t = conversion_tradeoff(list, reps)?;
            r.header = hdr(&[
                "matrix",
                "nnz",
                "coo_spmv_s",
                "coo_to_csr_s",
                "csr_spmv_s",
                "convert_plus_csr_s",
                "break_even",
            ]);
            r.rows.push(vec![
                name.into(),
                nnz,
                fmt_s(t.coo_spmv),
                fmt_s(t.convert),
                fmt_s(t.csr_spmv),
                fmt_s(t.convert + t.csr_spmv),
                t.break_even().map_or("never".into(), |n| n.to_string()),
            ]);
        }
        Scenario::DiaVsCsrSpmv => {
            let mut fl = Flusher::new();
            let x = ones(list.dims[1])?;
            let (k_dia, ops_dia) = spmv_kernel(&assemble("dia", list)?, &x)?;
            let (k_csr, ops_csr) = spmv_kernel(&assemble("csr", list)?, &x)?;
            let dia = time(reps, &mut fl, || k_dia.run(&ops_dia).map(|r| r.vals.len()));
            let csr = time(reps, &mut fl, || k_csr.run(&ops_csr).map(|r| r.vals.len()));
            r.header = hdr(&["matrix", "nnz", "dia_spmv_s", "csr_spmv_s", "dia_over_csr"]);
            r.rows.push(vec![
                name.into(),
                nnz,
                fmt_s(dia),
                fmt_s(csr),
                format!("{:.3}", dia / csr),
            ]);
        }
        Scenario::VectorFormats => {
            let mut fl = Flusher::new();
            let a = assemble("csr", list)?;
            r.header = hdr(&["matrix", "nnz", "x_format", "x_density", "x_nnz", "spmv_s"]);
            for density in [0.01, 0.1, 0.5] {
                let xl: CoordList<f64> = synth(Synth::Random(density), &list.dims[1..], 7);
                for spec in ["dense", "sparse-vector", "hash-vector"] {
                    let (k, ops) = spmv_kernel(&a, &assemble(spec, &xl)?)?;
                    let t = time(reps, &mut fl, || k.run(&ops).map(|r| r.vals.len()));
                    r.rows.push(vec![
                        name.into(),
                        nnz.clone(),
                        spec.into(),
                        density.to_string(),
                        xl.len().to_string(),
                        fmt_s(t),
                    ]);
                }
            }
        }
    }
    Ok(r)
}
