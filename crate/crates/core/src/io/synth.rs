use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formats::CoordList;
use crate::io::oracle::strides;
use crate::scalar::{Idx, Scalar};

/// Synthetic sparsity patterns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Synth {
    /// `k` densely filled diagonals around the main diagonal.
    Banded(usize),
    /// Each component nonzero with the given probability.
    Random(f64),
    /// Only this fraction of rows holds entries (1 to 4 each).
    Hypersparse(f64),
}

fn value<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = rng.gen_range(-1.0..1.0);
        if v != 0.0 {
            return v;
        }
    }
}

/// Generate a canonical coordinate list, deterministic under `seed`.
pub fn synth<T: Scalar>(kind: Synth, dims: &[usize], seed: u64) -> CoordList<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list = CoordList::new(dims.to_vec());
    match kind {
        Synth::Banded(k) => {
            assert_eq!(dims.len(), 2, "banded matrices only");
            let lo = -((k as Idx - 1) / 2);
            let (n, m) = (dims[0] as Idx, dims[1] as Idx);
            for i in 0..n {
                for d in lo..lo + k as Idx {
                    let j = i + d;
                    if (0..m).contains(&j) {
                        list.entries
                            .push((vec![i, j], T::from_f64_lossy(value(&mut rng))));
                    }
                }
            }
        }
        Synth::Random(density) => {
            let cells: usize = dims.iter().product();
            let st = strides(dims);
            let count = ((cells as f64) * density.clamp(0.0, 1.0)).round() as usize;
            let mut lin: Vec<usize> = if cells <= 1 << 24 {
                sample(&mut rng, cells, count.min(cells)).into_vec()
            } else {
                let mut seen = HashSet::with_capacity(count);
                while seen.len() < count {
                    seen.insert(rng.gen_range(0..cells));
                }
                seen.into_iter().collect()
            };
            lin.sort_unstable();
            for l in lin {
                let c = st
                    .iter()
                    .zip(dims)
                    .map(|(&s, &d)| ((l / s) % d) as Idx)
                    .collect();
                list.entries.push((c, T::from_f64_lossy(value(&mut rng))));
            }
        }
        Synth::Hypersparse(fill) => {
            let rows = dims[0];
            let rest = &dims[1..];
            let rest_cells: usize = rest.iter().product();
            let st = strides(rest);
            let nrows = ((rows as f64) * fill.clamp(0.0, 1.0)).round() as usize;
            let mut chosen = sample(&mut rng, rows, nrows.min(rows)).into_vec();
            chosen.sort_unstable();
            for r in chosen {
                let per = rng.gen_range(1..=4usize).min(rest_cells);
                let mut cols = sample(&mut rng, rest_cells, per).into_vec();
                cols.sort_unstable();
                for l in cols {
                    let mut c = vec![r as Idx];
                    c.extend(st.iter().zip(rest).map(|(&s, &d)| ((l / s) % d) as Idx));
                    list.entries.push((c, T::from_f64_lossy(value(&mut rng))));
                }
            }
        }
    }
    list.canonical = true;
    list
}

/// Split some entries into two duplicates whose values sum to the
/// original, shuffling the result. Used to exercise non-unique levels.
pub fn split_duplicates<T: Scalar>(list: &CoordList<T>, fraction: f64, seed: u64) -> CoordList<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(list.len() * 2);
    for (c, v) in &list.entries {
        if rng.gen_bool(fraction.clamp(0.0, 1.0)) {
            let part = T::from_f64_lossy(rng.gen_range(0.25..0.75));
            let a = *v * part;
            out.push((c.clone(), a));
            out.push((c.clone(), *v - a));
        } else {
            out.push((c.clone(), *v));
        }
    }
    // keep coordinates sorted so ordered non-unique levels stay valid
    out.sort_by(|a, b| a.0.cmp(&b.0));
    CoordList::from_entries(list.dims.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_main_diagonal() {
        let l: CoordList<f64> = synth(Synth::Banded(1), &[4, 4], 1);
        let coords: Vec<_> = l.entries.iter().map(|e| e.0.clone()).collect();
        assert_eq!(coords, vec![vec![0, 0], vec![1, 1], vec![2, 2], vec![3, 3]]);
    }

    #[test]
    fn banded_five_on_large() {
        let n = 40_000;
        let l: CoordList<f64> = synth(Synth::Banded(5), &[n, n], 3);
        // two entries lost at each end of the two outer diagonals
        assert_eq!(l.len(), 5 * n - 6);
        assert!((l.len() as f64 - 199_200.0).abs() / 199_200.0 < 0.01);
    }

    #[test]
    fn random_is_deterministic() {
        let a: CoordList<f64> = synth(Synth::Random(0.25), &[10, 10], 42);
        let b: CoordList<f64> = synth(Synth::Random(0.25), &[10, 10], 42);
        assert_eq!(a, b);
        assert_eq!(a.len(), 25);
        assert_eq!(a, a.canonical());
    }

    #[test]
    fn hypersparse_rows() {
        let l: CoordList<f64> = synth(Synth::Hypersparse(0.1), &[100, 50], 7);
        let mut rows: Vec<_> = l.entries.iter().map(|e| e.0[0]).collect();
        rows.dedup();
        assert_eq!(rows.len(), 10);
        assert_eq!(l, l.canonical());
    }

    #[test]
    fn duplicates_sum_back() {
        let l: CoordList<f64> = synth(Synth::Random(0.3), &[6, 6], 5);
        let d = split_duplicates(&l, 0.5, 9);
        assert!(d.len() > l.len());
        assert!(d.canonical().approx_eq(&l, 1e-12));
    }
}
