use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{fmt_value, read_file, write_file, IoError};
use crate::formats::CoordList;
use crate::scalar::{Idx, Scalar};

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".dims");
    PathBuf::from(s)
}

/// Read a FROSTT `.tns` file. Dimensions come from `dims` if given, else
/// from a `<path>.dims` sidecar if present, else from per-column maxima.
pub fn read_tns<T: Scalar>(path: &Path, dims: Option<&[usize]>) -> Result<CoordList<T>, IoError> {
    let text = read_file(path)?;
    let side = sidecar(path);
    let owned;
    let dims = match dims {
        Some(d) => Some(d),
        None if side.exists() => {
            let s = read_file(&side)?;
            owned = s
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| IoError::Malformed {
                    line: 1,
                    msg: format!("{}: {e}", side.display()),
                })?;
            Some(owned.as_slice())
        }
        None => None,
    };
    read_tns_str(&text, dims)
}

pub fn read_tns_str<T: Scalar>(
    text: &str,
    dims: Option<&[usize]>,
) -> Result<CoordList<T>, IoError> {
    let mut entries: Vec<(Vec<Idx>, T)> = Vec::new();
    let mut arity: Option<usize> = dims.map(|d| d.len());
    let mut maxima: Vec<usize> = Vec::new();
    for (n, l) in text.lines().enumerate() {
        let line = n + 1;
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        let order = toks.len() - 1;
        match arity {
            Some(a) if a != order => {
                return Err(IoError::Malformed {
                    line,
                    msg: format!("expected {a} coordinates, found {order}"),
                })
            }
            _ => arity = Some(order),
        }
        let mut c = Vec::with_capacity(order);
        for tok in &toks[..order] {
            let x: Idx = tok.parse().map_err(|_| IoError::Malformed {
                line,
                msg: format!("bad index `{tok}`"),
            })?;
            if x < 1 {
                return Err(IoError::Malformed {
                    line,
                    msg: format!("index `{x}` is not 1-based"),
                });
            }
            c.push(x - 1);
        }
        if let Some(d) = dims {
            if c.iter().zip(d).any(|(&x, &e)| x as usize >= e) {
                return Err(IoError::OutOfBounds {
                    line,
                    coord: c,
                    dims: d.to_vec(),
                });
            }
        }
        if maxima.len() < order {
            maxima.resize(order, 0);
        }
        for (m, &x) in maxima.iter_mut().zip(&c) {
            *m = (*m).max(x as usize + 1);
        }
        let v: f64 = toks[order].parse().map_err(|_| IoError::Malformed {
            line,
            msg: format!("bad value `{}`", toks[order]),
        })?;
        entries.push((c, T::from_f64_lossy(v)));
    }
    let dims = match dims {
        Some(d) => d.to_vec(),
        None => maxima,
    };
    Ok(CoordList::from_entries(dims, entries))
}

pub fn write_tns_string<T: Scalar>(list: &CoordList<T>) -> String {
    let mut s = String::with_capacity(24 * (list.order() + 1) * list.len());
    for (c, v) in &list.entries {
        for x in c {
            let _ = write!(s, "{} ", x + 1);
        }
        let _ = writeln!(s, "{}", fmt_value(*v));
    }
    s
}

pub fn write_tns<T: Scalar>(list: &CoordList<T>, path: &Path) -> Result<(), IoError> {
    write_file(path, &write_tns_string(list))
}

/// Record dimensions next to a `.tns` file so that trailing empty slices
/// survive a round trip.
pub fn write_dims_sidecar(dims: &[usize], path: &Path) -> Result<(), IoError> {
    let s: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    write_file(&sidecar(path), &(s.join(" ") + "\n"))
}
