mod common;

use common::{assemble, random};
use sparse_levels::engine::convert;
use sparse_levels::io::split_duplicates;
use sparse_levels::parse_format;

const MATS: &[&str] = &[
    "dense",
    "csr",
    "csc",
    "dcsr",
    "coo",
    "coo-aos",
    "dia",
    "ell",
    "bcsr:2x3",
    "csb:2x2",
    "{dense,hashed}",
    "{hashed,hashed}",
];

#[test]
fn matrix_conversions_preserve_values() {
    for seed in 0..4u64 {
        let list = split_duplicates(&random(&[7, 8], 0.25, seed), 0.3, seed);
        let want = list.canonical().pruned();
        for from in MATS {
            let src = assemble(from, &list);
            for to in MATS {
                let f = parse_format(to, Some(2)).unwrap();
                let got = convert(&src, &f).unwrap_or_else(|e| panic!("{from} -> {to}: {e}"));
                assert_eq!(got.format.levels, f.levels, "{from} -> {to}");
                let back = got.to_coords().unwrap().canonical().pruned();
                assert!(back.approx_eq(&want, 1e-12), "{from} -> {to}");
            }
        }
    }
}

#[test]
fn third_order_conversions() {
    let list = random(&[4, 6, 5], 0.2, 3);
    let want = list.canonical().pruned();
    for from in ["csf", "coo-3", "mode-generic:3", "dense"] {
        let src = assemble(from, &list);
        for to in [
            "csf",
            "coo-3",
            "mode-generic:2",
            "dense",
            "{dense,hashed,compressed}",
        ] {
            let f = parse_format(to, Some(3)).unwrap();
            let got = convert(&src, &f).unwrap_or_else(|e| panic!("{from} -> {to}: {e}"));
            assert!(
                got.to_coords()
                    .unwrap()
                    .canonical()
                    .pruned()
                    .approx_eq(&want, 1e-12),
                "{from} -> {to}"
            );
        }
    }
}
