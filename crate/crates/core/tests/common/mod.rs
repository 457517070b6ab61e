#![allow(dead_code)]

pub mod props;

use std::collections::BTreeMap;

use sparse_levels::engine::{Kernel, PlanOptions};
use sparse_levels::io::{oracle_eval, synth, DenseTensor, Synth};
use sparse_levels::notation::{parse, validate};
use sparse_levels::{parse_format, Coords, Storage};

pub const REL: f64 = 1e-12;

pub struct Case<'a> {
    pub expr: &'a str,
    pub ops: Vec<(&'a str, &'a str, Coords)>,
    pub out: &'a str,
}

pub fn random(dims: &[usize], density: f64, seed: u64) -> Coords {
    synth(Synth::Random(density), dims, seed)
}

pub fn assemble(spec: &str, list: &Coords) -> Storage {
    let f = parse_format(spec, Some(list.order())).unwrap_or_else(|e| panic!("{spec}: {e}"));
    Storage::assemble(&f, &list.dims, list).unwrap_or_else(|e| panic!("{spec}: {e}"))
}

/// Oracle result for `expr` over the given coordinate lists.
pub fn oracle(expr: &str, ops: &[(&str, &str, Coords)], out_dims: &[usize]) -> Coords {
    let a = parse(expr).unwrap();
    let mut dims: BTreeMap<String, Vec<usize>> = ops
        .iter()
        .map(|(n, _, l)| (n.to_string(), l.dims.clone()))
        .collect();
    dims.insert(a.lhs.tensor.clone(), out_dims.to_vec());
    let checked = validate(&a, &dims).unwrap();
    let bind = ops
        .iter()
        .map(|(n, _, l)| (n.to_string(), DenseTensor::from_coords(l)))
        .collect();
    oracle_eval(&checked, &bind).to_coords()
}

/// Run the engine and compare with the oracle. Returns the visit count.
pub fn check_with(case: &Case, opts: PlanOptions) -> Result<u64, String> {
    let operands: BTreeMap<String, Storage> = case
        .ops
        .iter()
        .map(|(n, f, l)| (n.to_string(), assemble(f, l)))
        .collect();
    let order = parse(case.expr).unwrap().lhs.vars.len();
    let out_f = parse_format(case.out, Some(order)).map_err(|e| e.to_string())?;
    let k = Kernel::for_operands(case.expr, &operands, &out_f, opts).map_err(|e| e.to_string())?;
    let (got, stats) = k.run_with_stats(&operands).map_err(|e| e.to_string())?;
    let got = got.to_coords().map_err(|e| e.to_string())?.canonical();
    let want = oracle(case.expr, &case.ops, k.output_dims());
    if got.approx_eq(&want, REL) {
        Ok(stats.visits)
    } else {
        Err(format!(
            "{} with {:?} -> {}: engine {:?} oracle {:?}",
            case.expr,
            case.ops.iter().map(|o| (o.0, o.1)).collect::<Vec<_>>(),
            case.out,
            got.pruned().entries,
            want.pruned().entries
        ))
    }
}

pub fn check(case: &Case) -> Result<u64, String> {
    check_with(case, PlanOptions::default())
}

/// Generate C for the case, compile it and compare with the engine and the
/// oracle. `Ok(false)` when no C compiler is available.
pub fn check_codegen(case: &Case) -> Result<bool, String> {
    use sparse_levels::codegen::{find_compiler, generate, CodegenOptions};
    if find_compiler().is_none() {
        return Ok(false);
    }
    let operands: BTreeMap<String, Storage> = case
        .ops
        .iter()
        .map(|(n, f, l)| (n.to_string(), assemble(f, l)))
        .collect();
    let refs: BTreeMap<String, &Storage> = operands.iter().map(|(k, v)| (k.clone(), v)).collect();
    let order = parse(case.expr).unwrap().lhs.vars.len();
    let out_f = parse_format(case.out, Some(order)).map_err(|e| e.to_string())?;
    let k = Kernel::for_operands(case.expr, &operands, &out_f, PlanOptions::default())
        .map_err(|e| e.to_string())?;
    let engine = k.run(&operands).map_err(|e| e.to_string())?;
    let g = generate::<f64>(&k, &CodegenOptions::default()).map_err(|e| e.to_string())?;
    let prog = g.compile().map_err(|e| format!("{e}\n{}", g.source))?;
    let got = prog
        .run(&g, &refs)
        .map_err(|e| format!("{e}\n{}", g.source))?;
    let show = |s: &Storage| {
        s.to_coords()
            .map(|c| c.canonical())
            .map_err(|e| e.to_string())
    };
    let (got_c, eng_c) = (show(&got)?, show(&engine)?);
    let want = oracle(case.expr, &case.ops, k.output_dims());
    if got_c.approx_eq(&eng_c, REL) && got_c.approx_eq(&want, REL) {
        Ok(true)
    } else {
        Err(format!(
            "{} with {:?} -> {}: compiled {:?} engine {:?}\n{}",
            case.expr,
            case.ops.iter().map(|o| (o.0, o.1)).collect::<Vec<_>>(),
            case.out,
            got_c.pruned().entries,
            eng_c.pruned().entries,
            g.source
        ))
    }
}

/// The elementwise product `A(i,j) = B(i,j) * C(i,j)` with a dense output,
/// planned for the given operand formats.
pub fn elementwise_kernel(b: &str, c: &str, dims: &[usize]) -> Kernel {
    use sparse_levels::graph::TensorInfo;
    let inputs: BTreeMap<String, TensorInfo> = [("B", b), ("C", c)]
        .iter()
        .map(|(n, f)| {
            (
                n.to_string(),
                TensorInfo::from_format(&parse_format(f, Some(2)).unwrap(), dims),
            )
        })
        .collect();
    Kernel::new(
        "A(i,j) = B(i,j) * C(i,j)",
        &inputs,
        &parse_format("dense", Some(2)).unwrap(),
        PlanOptions::default(),
    )
    .unwrap()
}

/// (fixture name, B format, C format) for the loop-shape goldens.
pub const SKELETON_CASES: &[(&str, &str, &str)] = &[
    ("coo_dense", "coo", "dense"),
    ("csr_dense", "csr", "dense"),
    ("csr_coo", "csr", "coo"),
];

pub fn skeleton_fixture(name: &str) -> String {
    let p = format!(
        "{}/tests/fixtures/skeletons/{name}.txt",
        env!("CARGO_MANIFEST_DIR")
    );
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{p}: {e}"))
}
