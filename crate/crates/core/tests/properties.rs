mod common;

use std::collections::BTreeSet;

use common::props::*;
use common::random;
use proptest::prelude::*;
use sparse_levels::io::{split_duplicates, synth, Synth};
use sparse_levels::{Coords, Idx};

#[test]
fn every_level_function_respects_capabilities() {
    assert_eq!(capability_conformance(), Ok(78));
}

#[test]
fn every_preset_is_tested() {
    let names: BTreeSet<&str> = preset_orders().iter().map(|p| p.0).collect();
    assert_eq!(names.len(), sparse_levels::formats::PRESETS.len());
}

fn sorted_rows() -> impl Strategy<Value = Vec<Vec<Idx>>> {
    prop::collection::vec(prop::collection::vec(0..20 as Idx, 0..8), 0..10).prop_map(|rows| {
        rows.into_iter()
            .map(|mut r| {
                r.sort();
                r
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn append_then_iterate(rows in sorted_rows()) {
        prop_assert_eq!(append_round_trip(&rows), Ok(()));
    }

    #[test]
    fn insert_then_locate(
        sets in prop::collection::vec(prop::collection::btree_set(0..16 as Idx, 0..8), 1..6),
    ) {
        // width 8 holds every set, so no segment overflows
        prop_assert_eq!(insert_round_trip(&sets, 8, 16), Ok(()));
    }

    #[test]
    fn presets_round_trip(
        which in 0usize..64,
        n in 1usize..9,
        m in 1usize..9,
        density in 0.01f64..0.6,
        seed in any::<u64>(),
    ) {
        let cases = preset_orders();
        let (name, order) = cases[which % cases.len()];
        let dims = [n, m, (n + m) / 2][..order].to_vec();
        let list: Coords = random(&dims, density, seed);
        prop_assert_eq!(preset_round_trip(name, &list), Ok(()));
    }

    #[test]
    fn duplicates_round_trip(
        seed in any::<u64>(),
        name in prop::sample::select(vec!["coo", "coo-soa", "coo-aos"]),
    ) {
        let list: Coords = synth(Synth::Random(0.3), &[6, 7], seed);
        let dup = split_duplicates(&list, 0.5, seed ^ 1);
        prop_assert_eq!(preset_round_trip(name, &dup), Ok(()));
    }

    #[test]
    fn plan_options_do_not_change_results(
        case in 0..OPTION_CASES.len(),
        n in 1usize..8,
        density in 0.01f64..0.5,
        seed in any::<u64>(),
    ) {
        prop_assert_eq!(options_agree(case, n, density, seed), Ok(()));
    }
}
