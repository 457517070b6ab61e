//! One pass/fail line per acceptance criterion. Run with
//! `cargo test --test acceptance -- --nocapture` to see the summary.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use common::props;
use common::{check, check_codegen, elementwise_kernel, skeleton_fixture, Case, SKELETON_CASES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_levels::codegen::{find_compiler, generate, CodegenOptions};
use sparse_levels::engine::{Kernel, PlanOptions};
use sparse_levels::graph::TensorInfo;
use sparse_levels::io::{read_mtx, read_tns, split_duplicates, synth, write_mtx, write_tns, Synth};
use sparse_levels::{bench, parse_format, Coords, Idx};

const INSTANCES: u64 = 100;
const C1_BUDGET: Duration = Duration::from_secs(300);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---- criterion 1 ----

/// A kernel and one operand format per right-hand-side access.
struct Combo {
    kernel: &'static str,
    expr: &'static str,
    formats: Vec<&'static str>,
    /// Largest index extent; order-3 kernels use a smaller cap so the dense
    /// oracle stays cheap.
    max_dim: usize,
    duplicates: bool,
}

const VECS: &[&str] = &["dense", "sparse-vector", "hash-vector"];
const MATS: &[&str] = &[
    "csr", "csc", "dcsr", "coo-soa", "coo-aos", "dia", "ell", "bcsr:2x2",
];
const T3: &[&str] = &["csf", "coo-3", "mode-generic"];

fn combos() -> Vec<Combo> {
    let mut out = Vec::new();
    let mut add = |kernel, expr, formats: Vec<&'static str>, max_dim, duplicates| {
        out.push(Combo {
            kernel,
            expr,
            formats,
            max_dim,
            duplicates,
        })
    };
    for m in MATS {
        for v in VECS {
            add("SpMV", "y(i) = A(i,j) * x(j)", vec![m, v], 32, false);
        }
        add(
            "SpDM",
            "A(i,j) = B(i,k) * C(k,j)",
            vec![m, "dense"],
            32,
            false,
        );
        for n in ["dense", "csr", "coo"] {
            add("add", "A(i,j) = B(i,j) + C(i,j)", vec![m, n], 32, false);
            add("mul", "A(i,j) = B(i,j) * C(i,j)", vec![m, n], 32, false);
        }
    }
    // the three motivating elementwise cases with the operand order flipped
    add(
        "mul",
        "A(i,j) = B(i,j) * C(i,j)",
        vec!["coo", "dense"],
        32,
        false,
    );
    for a in VECS {
        for b in VECS {
            add("add", "z(i) = x(i) + y(i)", vec![a, b], 32, false);
            add("mul", "z(i) = x(i) * y(i)", vec![a, b], 32, false);
        }
    }
    for t in T3 {
        for v in VECS {
            add("TTV", "A(i,j) = B(i,j,k) * c(k)", vec![t, v], 16, false);
        }
        add(
            "TTM",
            "A(i,j,k) = B(i,j,l) * C(k,l)",
            vec![t, "dense"],
            16,
            false,
        );
        add(
            "MTTKRP",
            "A(i,j) = B(i,k,l) * C(k,j) * D(l,j)",
            vec![t, "dense", "dense"],
            16,
            false,
        );
        for u in T3 {
            // a blocked mode can only be merged with a partner that locates
            if (*t == "mode-generic") == (*u == "mode-generic") {
                add(
                    "PLUS3",
                    "A(i,j,k) = B(i,j,k) + C(i,j,k)",
                    vec![t, u],
                    16,
                    false,
                );
            }
            add(
                "INNERPROD",
                "a() = B(i,j,k) * C(i,j,k)",
                vec![t, u],
                16,
                false,
            );
        }
        add(
            "PLUS3",
            "A(i,j,k) = B(i,j,k) + C(i,j,k)",
            vec![t, "dense"],
            16,
            false,
        );
    }
    for m in ["coo-soa", "coo-aos", "coo"] {
        add("SpMV", "y(i) = A(i,j) * x(j)", vec![m, "dense"], 32, true);
        add("add", "A(i,j) = B(i,j) + C(i,j)", vec!["csr", m], 32, true);
        add(
            "mul",
            "A(i,j) = B(i,j) * C(i,j)",
            vec![m, "dense"],
            32,
            true,
        );
    }
    add(
        "TTV",
        "A(i,j) = B(i,j,k) * c(k)",
        vec!["coo-3", "dense"],
        16,
        true,
    );
    out
}

fn instance(c: &Combo, seed: u64) -> Case<'static> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = sparse_levels::notation::parse(c.expr).unwrap();
    let mut extent: BTreeMap<String, usize> = BTreeMap::new();
    for v in a.vars() {
        extent.insert(v, rng.gen_range(1..=c.max_dim));
    }
    let ops = a
        .rhs
        .accesses()
        .iter()
        .zip(&c.formats)
        .map(|(acc, &f)| {
            let dims: Vec<usize> = acc.vars.iter().map(|v| extent[v]).collect();
            let density = rng.gen_range(0.01..=0.5);
            let mut list = synth(Synth::Random(density), &dims, rng.gen());
            if c.duplicates && f.starts_with("coo") {
                list = split_duplicates(&list, 0.5, rng.gen());
            }
            let name: &'static str = Box::leak(acc.tensor.clone().into_boxed_str());
            (name, f, list)
        })
        .collect();
    Case {
        expr: c.expr,
        ops,
        out: "dense",
    }
}

fn is_planner_rejection(e: &str) -> bool {
    e.contains("cycle") || e.contains("unsupported") || e.contains("locate")
}

fn c1() -> Outcome {
    let start = Instant::now();
    let combos = combos();
    let (mut ran, mut failures, mut skipped) = (0u64, Vec::new(), Vec::new());
    let mut covered: BTreeSet<&str> = BTreeSet::new();
    for c in &combos {
        let mut ok = true;
        for seed in 0..INSTANCES {
            match check(&instance(c, seed)) {
                Ok(_) => ran += 1,
                Err(e) if seed == 0 && is_planner_rejection(&e) => {
                    let why: String = e
                        .split(": ")
                        .last()
                        .unwrap_or("")
                        .chars()
                        .take(90)
                        .collect();
                    skipped.push(format!("{} {:?}: {why}", c.kernel, c.formats));
                    ok = false;
                    break;
                }
                Err(e) => {
                    failures.push(e);
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            covered.extend(c.formats.iter().copied());
        }
    }
    let elapsed = start.elapsed();
    let required: Vec<&str> = VECS.iter().chain(MATS).chain(T3).copied().collect();
    let missing: Vec<&str> = required
        .into_iter()
        .filter(|f| !covered.contains(f))
        .collect();
    for s in &skipped {
        println!("    not planned: {s}");
    }
    for f in failures.iter().take(3) {
        println!("    mismatch: {f}");
    }
    outcome(
        failures.is_empty() && missing.is_empty() && elapsed < C1_BUDGET,
        format!(
            "{} combos, {ran} instances matched the oracle, {} not planned, {} mismatched, \
             uncovered formats {missing:?}, {:.1}s",
            combos.len(),
            skipped.len(),
            failures.len(),
            elapsed.as_secs_f64()
        ),
    )
}

// ---- criterion 2 ----

fn c2() -> Outcome {
    let dims = [4, 6];
    let info = |f: &str| TensorInfo::from_format(&parse_format(f, Some(2)).unwrap(), &dims);
    let inputs: BTreeMap<String, TensorInfo> = [
        ("B".to_string(), info("csr")),
        ("C".to_string(), info("{compressed(f,~u),singleton}")),
    ]
    .into_iter()
    .collect();
    let k = match Kernel::new(
        "A(i,j) = B(i,j) + C(i,j)",
        &inputs,
        &parse_format("dense", Some(2)).unwrap(),
        PlanOptions::default(),
    ) {
        Ok(k) => k,
        Err(e) => return outcome(false, e.to_string()),
    };
    let dump = k.schedule.dump_lattices();
    let points = |var: &str| -> Option<usize> {
        dump.lines()
            .map(str::trim)
            .find(|l| l.starts_with(&format!("loop {var}:")))
            .and_then(|l| l.split_whitespace().nth(2))
            .and_then(|n| n.parse().ok())
    };
    let (i, j) = (points("i"), points("j"));
    outcome(
        i == Some(1) && j == Some(3),
        format!("i-lattice {i:?} point(s), j-lattice {j:?} point(s)"),
    )
}

// ---- criterion 3 ----

fn c3() -> Outcome {
    let mut bad = Vec::new();
    for (name, b, c) in SKELETON_CASES {
        let k = elementwise_kernel(b, c, &[5, 6]);
        match generate::<f64>(&k, &CodegenOptions::default()) {
            Ok(g) if g.skeleton() == skeleton_fixture(name) => {}
            Ok(g) => bad.push(format!("{name}:\n{}", g.skeleton())),
            Err(e) => bad.push(format!("{name}: {e}")),
        }
    }
    if !bad.is_empty() {
        return outcome(false, format!("skeleton mismatch: {}", bad.join("; ")));
    }
    if find_compiler().is_none() {
        return outcome(
            true,
            "3 skeletons match; no C compiler, compiled check skipped",
        );
    }
    let (mut compiled, mut skipped, mut failures) = (0, 0, Vec::new());
    for c in combos() {
        let fig1 = c.kernel == "mul"
            && c.expr.starts_with("A(")
            && matches!(
                c.formats[..],
                ["coo", "dense"] | ["csr", "dense"] | ["csr", "coo"]
            );
        let seeds = if fig1 { 3 } else { 1 };
        for seed in 0..seeds {
            match check_codegen(&instance(&c, seed)) {
                Ok(_) => compiled += 1,
                Err(e) if is_planner_rejection(&e) => {
                    skipped += 1;
                    break;
                }
                Err(e) => {
                    failures.push(e.lines().next().unwrap_or("").to_string());
                    break;
                }
            }
        }
    }
    for f in failures.iter().take(3) {
        println!("    compiled mismatch: {f}");
    }
    outcome(
        failures.is_empty(),
        format!(
            "3 skeletons match; {compiled} compiled instances match engine and oracle, \
             {skipped} combos not planned, {} failed",
            failures.len()
        ),
    )
}

// ---- criterion 4 ----

fn c4() -> Outcome {
    let mut worst = 0.0f64;
    let mut violations = 0;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.gen_range(1..=32);
        let x: Coords = synth(Synth::Random(rng.gen_range(0.01..=0.5)), &[n], rng.gen());
        let y: Coords = synth(Synth::Random(rng.gen_range(0.01..=0.5)), &[n], rng.gen());
        let partner = if seed % 2 == 0 {
            "dense"
        } else {
            "hash-vector"
        };
        let case = Case {
            expr: "a() = x(i) * y(i)",
            ops: vec![("x", "sparse-vector", x.clone()), ("y", partner, y)],
            out: "dense",
        };
        match check(&case) {
            Ok(visits) => {
                if visits > x.len() as u64 {
                    violations += 1;
                }
                if !x.is_empty() {
                    worst = worst.max(visits as f64 / x.len() as f64);
                }
            }
            Err(e) => return outcome(false, e),
        }
    }
    outcome(
        violations == 0,
        format!("{INSTANCES} instances, {violations} over nnz(x), max visits/nnz(x) = {worst:.2}"),
    )
}

// ---- criterion 5 ----

fn c5() -> Outcome {
    let n = 200_002;
    let list: Coords = synth(Synth::Banded(5), &[n, n], 5);
    match bench::conversion_tradeoff(&list, 3) {
        Ok(t) => outcome(
            t.convert + t.csr_spmv > t.coo_spmv,
            format!(
                "nnz {}: COO SpMV {:.4}s, convert {:.4}s, CSR SpMV {:.4}s, break-even after {} SpMV(s)",
                t.nnz,
                t.coo_spmv,
                t.convert,
                t.csr_spmv,
                t.break_even().map_or("never".to_string(), |b| b.to_string())
            ),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

// ---- criterion 6 ----

fn c6() -> Outcome {
    let mut errors: Vec<String> = Vec::new();
    let caps = props::capability_conformance().unwrap_or_else(|e| {
        errors.push(e);
        0
    });
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let presets = props::preset_orders();
    let mut round_trips = 0;
    for &(name, order) in &presets {
        for _ in 0..200 {
            let dims: Vec<usize> = (0..order).map(|_| rng.gen_range(1..=12)).collect();
            let list: Coords = synth(Synth::Random(rng.gen_range(0.01..=0.5)), &dims, rng.gen());
            match props::preset_round_trip(name, &list) {
                Ok(()) => round_trips += 1,
                Err(e) => errors.push(e),
            }
        }
    }

    let mut appends = 0;
    let mut inserts = 0;
    for _ in 0..100 {
        let rows: Vec<Vec<Idx>> = (0..rng.gen_range(0..10))
            .map(|_| {
                let mut r: Vec<Idx> = (0..rng.gen_range(0..8))
                    .map(|_| rng.gen_range(0..20))
                    .collect();
                r.sort();
                r
            })
            .collect();
        match props::append_round_trip(&rows) {
            Ok(()) => appends += 1,
            Err(e) => errors.push(e),
        }
        let sets: Vec<BTreeSet<Idx>> = (0..rng.gen_range(1..6))
            .map(|_| {
                (0..rng.gen_range(0..8))
                    .map(|_| rng.gen_range(0..16))
                    .collect()
            })
            .collect();
        match props::insert_round_trip(&sets, 8, 16) {
            Ok(()) => inserts += 1,
            Err(e) => errors.push(e),
        }
    }

    let mut options = 0;
    for case in 0..props::OPTION_CASES.len() {
        for seed in 0..20 {
            let n = rng.gen_range(1..=8);
            match props::options_agree(case, n, rng.gen_range(0.01..=0.5), seed) {
                Ok(()) => options += 1,
                Err(e) => errors.push(e),
            }
        }
    }
    for e in errors.iter().take(3) {
        println!("    property violation: {e}");
    }
    outcome(
        errors.is_empty(),
        format!(
            "{caps} kind-by-function capability checks, {round_trips} preset round trips \
             with level properties over {} presets, {appends} append and {inserts} insert \
             round trips, {options} prune/fuse comparisons",
            presets.len()
        ),
    )
}

// ---- criterion 7 ----

fn c7() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut errors = Vec::new();
    for t in 0..50 {
        let dims = vec![rng.gen_range(1..=32), rng.gen_range(1..=32)];
        let list: Coords = synth(Synth::Random(rng.gen_range(0.01..=0.5)), &dims, rng.gen());
        let p = dir.path().join(format!("m{t}.mtx"));
        let q = dir.path().join(format!("m{t}b.mtx"));
        let first = write_mtx(&list, &p).and_then(|_| read_mtx::<f64>(&p));
        let again = first.as_ref().map_err(|e| e.to_string()).and_then(|a| {
            write_mtx(a, &q)
                .and_then(|_| read_mtx::<f64>(&q))
                .map_err(|e| e.to_string())
        });
        match (first, again) {
            (Ok(a), Ok(b)) if a == b && a.canonical() == list => {}
            (a, b) => errors.push(format!("mtx {t}: {:?} / {:?}", a.err(), b.err())),
        }
    }
    for t in 0..50 {
        let order = rng.gen_range(1..=4);
        let dims: Vec<usize> = (0..order).map(|_| rng.gen_range(1..=12)).collect();
        let list: Coords = synth(Synth::Random(rng.gen_range(0.01..=0.5)), &dims, rng.gen());
        let p = dir.path().join(format!("t{t}.tns"));
        let q = dir.path().join(format!("t{t}b.tns"));
        let first = write_tns(&list, &p).and_then(|_| read_tns::<f64>(&p, Some(&dims)));
        let again = first.as_ref().map_err(|e| e.to_string()).and_then(|a| {
            write_tns(a, &q)
                .and_then(|_| read_tns::<f64>(&q, Some(&dims)))
                .map_err(|e| e.to_string())
        });
        match (first, again) {
            (Ok(a), Ok(b)) if a == b && a.canonical() == list => {}
            (a, b) => errors.push(format!("tns {t}: {:?} / {:?}", a.err(), b.err())),
        }
    }
    for e in errors.iter().take(3) {
        println!("    {e}");
    }
    outcome(
        errors.is_empty(),
        format!(
            "50 .mtx and 50 .tns tensors, {} round trips differ",
            errors.len()
        ),
    )
}

#[test]
fn acceptance_criteria() {
    // run sequentially so the timing criterion is not disturbed
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 7] = [
        ("oracle equivalence", c1),
        ("pruned lattices", c2),
        ("loop skeletons", c3),
        ("locate visit bound", c4),
        ("conversion trade-off", c5),
        ("property suites", c6),
        ("file round trips", c7),
    ];
    let mut failed = Vec::new();
    for (n, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {tag} {name}: {}", n + 1, o.detail);
        if !o.pass {
            failed.push(n + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
