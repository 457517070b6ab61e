mod common;

use common::{check_codegen, random, Case};
use sparse_levels::io::split_duplicates;

const MATS: &[&str] = &[
    "csr", "csc", "dcsr", "coo", "coo-aos", "dia", "ell", "bcsr:2x2", "dense",
];
const VECS: &[&str] = &["dense", "sparse-vector", "hash-vector"];
const T3: &[&str] = &["csf", "coo-3", "mode-generic", "dense"];

/// Planning failures the engine also reports are skipped; anything else fails.
fn run(c: &Case) {
    match check_codegen(c) {
        Ok(_) => {}
        Err(e) if e.contains("cycle") || e.contains("unsupported") || e.contains("locate") => {
            eprintln!("SKIP {}", e.lines().next().unwrap_or(""))
        }
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn spmv() {
    for (s, m) in MATS.iter().enumerate() {
        for v in VECS {
            for out in ["dense", "sparse-vector"] {
                run(&Case {
                    expr: "y(i) = A(i,j) * x(j)",
                    ops: vec![
                        ("A", m, random(&[7, 9], 0.3, s as u64)),
                        ("x", v, random(&[9], 0.5, 3)),
                    ],
                    out,
                });
            }
        }
    }
}

#[test]
fn add_mul_and_outputs() {
    for m in MATS {
        for n in ["csr", "coo", "dense", "dcsr"] {
            for out in [
                "dense",
                "csr",
                "coo",
                "dcsr",
                "{dense,hashed}",
                "{hashed,hashed}",
            ] {
                for e in ["A(i,j) = B(i,j) + C(i,j)", "A(i,j) = B(i,j) * C(i,j)"] {
                    run(&Case {
                        expr: e,
                        ops: vec![
                            ("B", m, random(&[6, 5], 0.3, 1)),
                            ("C", n, random(&[6, 5], 0.4, 2)),
                        ],
                        out,
                    });
                }
            }
        }
    }
}

#[test]
fn spdm_and_third_order() {
    for m in MATS {
        run(&Case {
            expr: "A(i,j) = B(i,k) * C(k,j)",
            ops: vec![
                ("B", m, random(&[6, 7], 0.3, 4)),
                ("C", "dense", random(&[7, 5], 0.6, 9)),
            ],
            out: "dense",
        });
    }
    for (s, t) in T3.iter().enumerate() {
        let b = random(&[5, 6, 4], 0.2, 10 + s as u64);
        for v in VECS {
            run(&Case {
                expr: "A(i,j) = B(i,j,k) * c(k)",
                ops: vec![("B", t, b.clone()), ("c", v, random(&[4], 0.5, 3))],
                out: "dense",
            });
        }
        run(&Case {
            expr: "A(i,j,k) = B(i,j,l) * C(k,l)",
            ops: vec![("B", t, b.clone()), ("C", "dense", random(&[3, 4], 0.7, 4))],
            out: "dense",
        });
        for u in T3 {
            run(&Case {
                expr: "A(i,j,k) = B(i,j,k) + C(i,j,k)",
                ops: vec![("B", t, b.clone()), ("C", u, random(&[5, 6, 4], 0.3, 5))],
                out: "dense",
            });
            run(&Case {
                expr: "a() = B(i,j,k) * C(i,j,k)",
                ops: vec![("B", t, b.clone()), ("C", u, random(&[5, 6, 4], 0.3, 6))],
                out: "dense",
            });
        }
        run(&Case {
            expr: "A(i,j) = B(i,k,l) * C(k,j) * D(l,j)",
            ops: vec![
                ("B", t, b.clone()),
                ("C", "dense", random(&[6, 3], 0.8, 7)),
                ("D", "dense", random(&[4, 3], 0.8, 8)),
            ],
            out: "dense",
        });
    }
}

#[test]
fn duplicates() {
    for seed in 0..5u64 {
        let a = split_duplicates(&random(&[8, 9], 0.3, seed), 0.5, seed);
        let b = random(&[8, 9], 0.3, seed + 50);
        let x = random(&[9], 0.6, seed + 100);
        let t = split_duplicates(&random(&[4, 5, 6], 0.2, seed), 0.5, seed + 1);
        for c in [
            Case {
                expr: "y(i) = A(i,j) * x(j)",
                ops: vec![("A", "coo", a.clone()), ("x", "dense", x.clone())],
                out: "dense",
            },
            Case {
                expr: "y(i) = A(i,j) * x(j)",
                ops: vec![
                    ("A", "coo-aos", a.clone()),
                    ("x", "sparse-vector", x.clone()),
                ],
                out: "sparse-vector",
            },
            Case {
                expr: "C(i,j) = A(i,j) * B(i,j)",
                ops: vec![("A", "coo", a.clone()), ("B", "csr", b.clone())],
                out: "csr",
            },
            Case {
                expr: "C(i,j) = B(i,j) + A(i,j)",
                ops: vec![("B", "csr", b.clone()), ("A", "coo", a.clone())],
                out: "coo",
            },
            Case {
                expr: "C(i,j) = A(i,j) + A(i,j)",
                ops: vec![("A", "coo", a.clone())],
                out: "dcsr",
            },
            Case {
                expr: "C(i,j) = T(i,j,k) * x(k)",
                ops: vec![
                    ("T", "coo-3", t.clone()),
                    ("x", "dense", random(&[6], 0.6, seed)),
                ],
                out: "csr",
            },
        ] {
            run(&c);
        }
    }
}

#[test]
fn loop_skeletons_match_goldens() {
    use sparse_levels::codegen::{generate, CodegenOptions};
    for (name, b, c) in common::SKELETON_CASES {
        let k = common::elementwise_kernel(b, c, &[5, 6]);
        let g = generate::<f64>(&k, &CodegenOptions::default()).unwrap();
        assert_eq!(
            g.skeleton(),
            common::skeleton_fixture(name),
            "{name}\n{}",
            g.kernel
        );
        // deterministic text
        let again = generate::<f64>(&k, &CodegenOptions::default()).unwrap();
        assert_eq!(g.source, again.source);
        assert_eq!(
            sparse_levels::codegen::ir::count_level_calls(&g.kernel.body),
            0
        );
    }
}

#[test]
fn elementwise_goldens_compile_and_match() {
    for (_, b, c) in common::SKELETON_CASES {
        for seed in 0..3 {
            let case = Case {
                expr: "A(i,j) = B(i,j) * C(i,j)",
                ops: vec![
                    (
                        "B",
                        b,
                        split_duplicates(&random(&[9, 8], 0.3, seed), 0.3, seed),
                    ),
                    (
                        "C",
                        c,
                        split_duplicates(&random(&[9, 8], 0.5, seed + 7), 0.3, seed),
                    ),
                ],
                out: "dense",
            };
            check_codegen(&case).unwrap();
        }
    }
}

#[test]
fn f32_kernels() {
    use sparse_levels::codegen::{compile_and_run, find_compiler, CodegenOptions, IdxType};
    if find_compiler().is_none() {
        return;
    }
    let a = common::random(&[6, 7], 0.4, 1);
    let x = common::random(&[7], 0.6, 2);
    let to32 = |s: &sparse_levels::Storage| {
        let c = s.to_coords().unwrap();
        let entries = c
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), *v as f32))
            .collect();
        sparse_levels::CoordList::<f32>::from_entries(c.dims.clone(), entries)
    };
    let am = to32(&common::assemble("csr", &a));
    let xm = to32(&common::assemble("dense", &x));
    let fa = sparse_levels::parse_format("csr", Some(2)).unwrap();
    let fx = sparse_levels::parse_format("dense", Some(1)).unwrap();
    let ops = std::collections::BTreeMap::from([
        (
            "A".to_string(),
            sparse_levels::TensorStorage::assemble(&fa, &[6, 7], &am).unwrap(),
        ),
        (
            "x".to_string(),
            sparse_levels::TensorStorage::assemble(&fx, &[7], &xm).unwrap(),
        ),
    ]);
    let out = sparse_levels::parse_format("dense", Some(1)).unwrap();
    let k =
        sparse_levels::Kernel::for_operands("y(i) = A(i,j) * x(j)", &ops, &out, Default::default())
            .unwrap();
    let want = k.run(&ops).unwrap();
    let refs = ops.iter().map(|(k, v)| (k.clone(), v)).collect();
    let opts = CodegenOptions {
        idx: IdxType::I64,
        ..Default::default()
    };
    let got = compile_and_run(&k, &refs, &opts).unwrap();
    for (g, w) in got.vals.iter().zip(&want.vals) {
        assert!((g - w).abs() <= 1e-5 * w.abs().max(1.0), "{g} {w}");
    }
}
