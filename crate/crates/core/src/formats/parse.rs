use super::{preset, FormatError, TensorFormat};
use crate::levels::{LevelFormat, LevelKind, Property};

/// Parse a format spec: either a preset name (optionally `name:AxB` for
/// block sizes, or `hash-vector:W` for the segment width) or a level
/// composition such as `{dense,compressed(~u)}@(1,0)`.
///
/// `order` is required for presets whose order is not fixed by the name;
/// compositions carry their own order and are checked against it if given.
pub fn parse_format(spec: &str, order: Option<usize>) -> Result<TensorFormat, FormatError> {
    let s = spec.trim();
    if s.starts_with('{') {
        let f = parse_composition(s)?;
        if let Some(o) = order {
            if o != f.order {
                return Err(FormatError::OrderMismatch {
                    name: s.to_string(),
                    expected: f.order,
                    got: o,
                });
            }
        }
        return Ok(f);
    }
    let (name, params) = match s.split_once(':') {
        Some((n, p)) => (n, Some(p)),
        None => (s, None),
    };
    let name_lc = name.to_ascii_lowercase();
    let nums = match params {
        Some(p) => p
            .split('x')
            .map(|t| {
                t.trim().parse::<usize>().map_err(|_| FormatError::Parse {
                    col: name.len() + 2,
                    msg: format!("bad numeric parameter `{t}`"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };
    let order = match order {
        Some(o) => o,
        None => match name_lc.as_str() {
            "sparse-vector" | "hash-vector" => 1,
            "coo-3" | "mode-generic" | "csf" => 3,
            _ => 2,
        },
    };
    if name_lc == "hash-vector" {
        let f = preset(&name_lc, order, &[])?;
        return match nums.as_slice() {
            [] => Ok(f),
            [w] if *w > 0 => Ok(f.with_hash_width(*w)),
            _ => Err(FormatError::BadBlocking(
                "hash-vector takes one positive width".into(),
            )),
        };
    }
    preset(&name_lc, order, &nums)
}

struct Cursor<'a> {
    src: &'a str,
    at: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FormatError> {
        Err(FormatError::Parse {
            col: self.at + 1,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.src[self.at..].starts_with(char::is_whitespace) {
            self.at += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.src[self.at..].starts_with(c) {
            self.at += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), FormatError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn word(&mut self) -> &'a str {
        self.skip_ws();
        let rest = &self.src[self.at..];
        let n = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'))
            .unwrap_or(rest.len());
        self.at += n;
        &rest[..n]
    }

    fn done(&mut self) -> bool {
        self.skip_ws();
        self.at == self.src.len()
    }
}

fn parse_composition(s: &str) -> Result<TensorFormat, FormatError> {
    let mut cur = Cursor { src: s, at: 0 };
    cur.expect('{')?;
    let mut levels = Vec::new();
    loop {
        let start = cur.at;
        let name = cur.word();
        let Some(kind) = LevelKind::from_name(name) else {
            cur.at = start;
            return cur.err(format!("unknown level format `{name}`"));
        };
        let mut level = LevelFormat::new(kind);
        if cur.eat('(') {
            loop {
                let neg = cur.eat('~') || cur.eat('!');
                let fstart = cur.at;
                let prop = match cur.word() {
                    "f" | "full" => Property::Full,
                    "o" | "ordered" => Property::Ordered,
                    "u" | "unique" => Property::Unique,
                    other => {
                        cur.at = fstart;
                        return cur.err(format!("unknown property flag `{other}`"));
                    }
                };
                level = level.with(prop, !neg).map_err(|e| FormatError::Parse {
                    col: fstart + 1,
                    msg: e.to_string(),
                })?;
                if cur.eat(')') {
                    break;
                }
                cur.expect(',')?;
            }
        }
        levels.push(level);
        if cur.eat('}') {
            break;
        }
        cur.expect(',')?;
    }
    let mut ordering: Vec<usize> = (0..levels.len()).collect();
    if cur.eat('@') {
        cur.expect('(')?;
        ordering.clear();
        loop {
            let w = cur.word();
            match w.parse::<usize>() {
                Ok(m) => ordering.push(m),
                Err(_) => return cur.err(format!("expected a mode number, found `{w}`")),
            }
            if cur.eat(')') {
                break;
            }
            cur.expect(',')?;
        }
    }
    if !cur.done() {
        return cur.err("trailing characters");
    }
    TensorFormat::compose(levels, ordering)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::LevelDim;

    #[test]
    fn composition_with_flags_and_ordering() {
        let f = parse_format("{compressed(~u),singleton}@(1,0)", None).unwrap();
        assert_eq!(f.levels[0].kind, LevelKind::Compressed);
        assert!(!f.levels[0].props.unique);
        assert_eq!(f.level_dims, vec![LevelDim::Mode(1), LevelDim::Mode(0)]);
        assert_eq!(f.composition_string(), "{compressed(~u),singleton}@(1,0)");
    }

    #[test]
    fn composition_matches_preset() {
        let a = parse_format("{dense,compressed}", None).unwrap();
        let b = parse_format("csr", None).unwrap();
        assert_eq!(a.levels, b.levels);
        assert_eq!(a.level_dims, b.level_dims);
    }

    #[test]
    fn presets_with_params() {
        let f = parse_format("bcsr:4x2", None).unwrap();
        assert_eq!(f.level_dims[0], LevelDim::BlockOuter { mode: 0, block: 4 });
        assert_eq!(f.level_dims[3], LevelDim::BlockInner { mode: 1, block: 2 });
        let h = parse_format("hash-vector:8", None).unwrap();
        assert_eq!(h.params.hash_width, Some(8));
        assert_eq!(parse_format("CSR", None).unwrap().name, "csr");
    }

    #[test]
    fn errors_carry_columns() {
        match parse_format("{dense,sparse}", None) {
            Err(FormatError::Parse { col, .. }) => assert_eq!(col, 8),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_format("{singleton(~b)}", None),
            Err(FormatError::Parse { .. })
        ));
        assert!(matches!(
            parse_format("{hashed(o)}", None),
            Err(FormatError::Parse { .. })
        ));
        assert!(matches!(
            parse_format("{dense,dense}@(0,0)", None),
            Err(FormatError::Invalid(_))
        ));
        assert!(matches!(
            parse_format("{dense}x", None),
            Err(FormatError::Parse { .. })
        ));
        assert!(matches!(
            parse_format("{dense}", Some(2)),
            Err(FormatError::OrderMismatch { .. })
        ));
    }

    #[test]
    fn display_round_trip() {
        for s in [
            "{dense,compressed}",
            "{compressed(~u),singleton(~u),singleton}",
            "{dense,hashed}@(1,0)",
            "{compressed(f),dense}",
        ] {
            let f = parse_format(s, None).unwrap();
            assert_eq!(f.composition_string(), s);
            assert_eq!(parse_format(&f.composition_string(), None).unwrap(), f);
        }
    }
}
