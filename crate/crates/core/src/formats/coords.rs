use crate::scalar::{Idx, Scalar};

/// A coordinate/value list: the interchange form between formats, file
/// readers and the reference evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordList<T> {
    pub dims: Vec<usize>,
    pub entries: Vec<(Vec<Idx>, T)>,
    /// Sorted lexicographically with duplicates summed.
    pub canonical: bool,
}

impl<T: Scalar> CoordList<T> {
    pub fn new(dims: Vec<usize>) -> Self {
        CoordList {
            dims,
            entries: Vec::new(),
            canonical: true,
        }
    }

    pub fn from_entries(dims: Vec<usize>, entries: Vec<(Vec<Idx>, T)>) -> Self {
        CoordList {
            dims,
            entries,
            canonical: false,
        }
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, coord: Vec<Idx>, value: T) {
        self.canonical = false;
        self.entries.push((coord, value));
    }

    /// Sort lexicographically and sum duplicates. Stable with respect to the
    /// order in which duplicates are summed.
    pub fn canonical(&self) -> Self {
        if self.canonical {
            return self.clone();
        }
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(Vec<Idx>, T)> = Vec::with_capacity(entries.len());
        for (c, v) in entries {
            match out.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => out.push((c, v)),
            }
        }
        CoordList {
            dims: self.dims.clone(),
            entries: out,
            canonical: true,
        }
    }

    /// Canonical form without explicitly stored zeros. Padded formats store
    /// zeros that a sparse result would omit, so comparisons use this form.
    pub fn pruned(&self) -> Self {
        let mut c = self.canonical();
        c.entries.retain(|(_, v)| *v != T::zero());
        c
    }

    pub fn in_bounds(&self) -> Result<(), (Vec<Idx>, usize)> {
        for (c, _) in &self.entries {
            if c.len() != self.dims.len() {
                return Err((c.clone(), c.len()));
            }
            if c.iter()
                .zip(&self.dims)
                .any(|(&x, &d)| x < 0 || x as usize >= d)
            {
                return Err((c.clone(), self.dims.len()));
            }
        }
        Ok(())
    }

    /// Values of a dense row-major array.
    pub fn to_dense(&self) -> Vec<T> {
        let n: usize = self.dims.iter().product();
        let mut out = vec![T::zero(); n];
        for (c, v) in &self.entries {
            out[linear_index(c, &self.dims)] += *v;
        }
        out
    }

    pub fn from_dense(dims: Vec<usize>, vals: &[T]) -> Self {
        let mut list = CoordList::new(dims.clone());
        for (lin, &v) in vals.iter().enumerate() {
            if v != T::zero() {
                list.entries.push((delinearize(lin, &dims), v));
            }
        }
        list
    }

    /// Compare two lists after pruning, using relative tolerance per entry.
    pub fn approx_eq(&self, other: &Self, rel: f64) -> bool {
        if self.dims != other.dims {
            return false;
        }
        let a = self.canonical();
        let b = other.canonical();
        let (mut i, mut j) = (0, 0);
        let zero = T::zero();
        loop {
            let ca = a.entries.get(i);
            let cb = b.entries.get(j);
            let (va, vb) = match (ca, cb) {
                (None, None) => return true,
                (Some((x, v)), Some((y, w))) if x == y => {
                    i += 1;
                    j += 1;
                    (*v, *w)
                }
                (Some((x, v)), Some((y, _))) if x < y => {
                    i += 1;
                    (*v, zero)
                }
                (Some((_, v)), None) => {
                    i += 1;
                    (*v, zero)
                }
                (_, Some((_, w))) => {
                    j += 1;
                    (zero, *w)
                }
            };
            if !crate::scalar::rel_close(va, vb, rel) {
                return false;
            }
        }
    }
}

pub(crate) fn linear_index(c: &[Idx], dims: &[usize]) -> usize {
    let mut lin = 0usize;
    for (&x, &d) in c.iter().zip(dims) {
        lin = lin * d + x as usize;
    }
    lin
}

pub(crate) fn delinearize(mut lin: usize, dims: &[usize]) -> Vec<Idx> {
    let mut c = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        c[k] = (lin % dims[k]) as Idx;
        lin /= dims[k];
    }
    c
}
