use std::fmt::Write as _;
use std::path::Path;

use super::{fmt_value, read_file, write_file, IoError};
use crate::formats::CoordList;
use crate::scalar::{Idx, Scalar};

/// Read a Matrix Market coordinate file. Duplicates are kept in file order.
pub fn read_mtx<T: Scalar>(path: &Path) -> Result<CoordList<T>, IoError> {
    read_mtx_str(&read_file(path)?)
}

pub fn read_mtx_str<T: Scalar>(text: &str) -> Result<CoordList<T>, IoError> {
    let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
    let (_, header) = lines.next().ok_or(IoError::Malformed {
        line: 1,
        msg: "empty file".into(),
    })?;
    let h: Vec<String> = header
        .split_whitespace()
        .map(|s| s.to_ascii_lowercase())
        .collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(IoError::Malformed {
            line: 1,
            msg: "expected `%%MatrixMarket matrix coordinate <field> <symmetry>`".into(),
        });
    }
    if h[2] != "coordinate" {
        return Err(IoError::Unsupported(format!(
            "`{}` storage (only coordinate)",
            h[2]
        )));
    }
    let pattern = match h[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" => true,
        f => return Err(IoError::Unsupported(format!("`{f}` field"))),
    };
    if h[4] != "general" {
        return Err(IoError::Unsupported(format!(
            "`{}` symmetry (only general matrices are read)",
            h[4]
        )));
    }
    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body.next().ok_or(IoError::Malformed {
        line: 2,
        msg: "missing size line".into(),
    })?;
    let sz: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| IoError::Malformed {
            line: size_line,
            msg: format!("bad size line: {e}"),
        })?;
    if sz.len() != 3 {
        return Err(IoError::Malformed {
            line: size_line,
            msg: "size line needs rows, columns and entry count".into(),
        });
    }
    let dims = vec![sz[0], sz[1]];
    let mut list = CoordList::from_entries(dims.clone(), Vec::with_capacity(sz[2]));
    for (line, l) in body {
        let toks: Vec<&str> = l.split_whitespace().collect();
        let want = if pattern { 2 } else { 3 };
        if toks.len() != want {
            return Err(IoError::Malformed {
                line,
                msg: format!("expected {want} fields, found {}", toks.len()),
            });
        }
        let mut c = Vec::with_capacity(2);
        for t in &toks[..2] {
            let x: Idx = t.parse().map_err(|_| IoError::Malformed {
                line,
                msg: format!("bad index `{t}`"),
            })?;
            c.push(x - 1);
        }
        if c.iter().zip(&dims).any(|(&x, &d)| x < 0 || x as usize >= d) {
            return Err(IoError::OutOfBounds {
                line,
                coord: c,
                dims,
            });
        }
        let v = if pattern {
            1.0
        } else {
            toks[2].parse::<f64>().map_err(|_| IoError::Malformed {
                line,
                msg: format!("bad value `{}`", toks[2]),
            })?
        };
        list.entries.push((c, T::from_f64_lossy(v)));
    }
    if list.entries.len() != sz[2] {
        return Err(IoError::Malformed {
            line: size_line,
            msg: format!("declared {} entries, found {}", sz[2], list.entries.len()),
        });
    }
    Ok(list)
}

pub fn write_mtx_string<T: Scalar>(list: &CoordList<T>) -> Result<String, IoError> {
    if list.order() != 2 {
        return Err(IoError::Unsupported(format!(
            "Matrix Market holds matrices; tensor has order {}",
            list.order()
        )));
    }
    let mut s = String::with_capacity(32 * (list.len() + 2));
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", list.dims[0], list.dims[1], list.len());
    for (c, v) in &list.entries {
        let _ = writeln!(s, "{} {} {}", c[0] + 1, c[1] + 1, fmt_value(*v));
    }
    Ok(s)
}

pub fn write_mtx<T: Scalar>(list: &CoordList<T>, path: &Path) -> Result<(), IoError> {
    write_file(path, &write_mtx_string(list)?)
}
