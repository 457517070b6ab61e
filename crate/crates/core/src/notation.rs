//! Index notation: parsing, printing and validation.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Byte range in the source text. Spans are diagnostics only and do not
/// take part in equality.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Access {
    pub tensor: String,
    pub vars: Vec<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IndexExpr {
    Access(Access),
    Add(Box<IndexExpr>, Box<IndexExpr>),
    Mul(Box<IndexExpr>, Box<IndexExpr>),
    Literal(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub lhs: Access,
    pub rhs: IndexExpr,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NotationError {
    #[error("syntax error at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("tensor `{0}` is not bound")]
    Unbound(String),
    #[error("`{tensor}` has order {expected} but is accessed with {got} index variables")]
    Arity {
        tensor: String,
        expected: usize,
        got: usize,
    },
    #[error("dimension mismatch for index variable `{var}`: {a} vs {b}")]
    DimMismatch { var: String, a: usize, b: usize },
    #[error("index variable `{0}` appears on the left-hand side only")]
    LhsOnly(String),
    #[error("index variable `{var}` is repeated in the access of `{tensor}`")]
    RepeatedVar { tensor: String, var: String },
    #[error("output tensor `{0}` is also read on the right-hand side")]
    OutputRead(String),
}

impl IndexExpr {
    pub fn add(a: IndexExpr, b: IndexExpr) -> Self {
        IndexExpr::Add(Box::new(a), Box::new(b))
    }

    pub fn mul(a: IndexExpr, b: IndexExpr) -> Self {
        IndexExpr::Mul(Box::new(a), Box::new(b))
    }

    /// Accesses in left-to-right order.
    pub fn accesses(&self) -> Vec<&Access> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Access>) {
        match self {
            IndexExpr::Access(a) => out.push(a),
            IndexExpr::Add(l, r) | IndexExpr::Mul(l, r) => {
                l.collect(out);
                r.collect(out);
            }
            IndexExpr::Literal(_) => {}
        }
    }

    pub fn uses_var(&self, v: &str) -> bool {
        self.accesses()
            .iter()
            .any(|a| a.vars.iter().any(|x| x == v))
    }
}

impl Assignment {
    /// All accesses: the output first, then the right-hand side in order.
    pub fn all_accesses(&self) -> Vec<&Access> {
        let mut v = vec![&self.lhs];
        v.extend(self.rhs.accesses());
        v
    }

    /// Index variables in order of first appearance, output first.
    pub fn vars(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for a in self.all_accesses() {
            for v in &a.vars {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
        out
    }

    /// Variables summed over: used on the right but not on the left.
    pub fn reduction_vars(&self) -> Vec<String> {
        self.vars()
            .into_iter()
            .filter(|v| !self.lhs.vars.contains(v))
            .collect()
    }
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.tensor, self.vars.join(","))
    }
}

impl fmt::Display for IndexExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexExpr::Access(a) => write!(f, "{a}"),
            IndexExpr::Literal(v) => write!(f, "{v:?}"),
            IndexExpr::Add(l, r) => write!(f, "{l} + {r}"),
            IndexExpr::Mul(l, r) => {
                let wrap = |e: &IndexExpr| match e {
                    IndexExpr::Add(..) => format!("({e})"),
                    _ => e.to_string(),
                };
                // a right operand that is itself a product needs parentheses
                // to keep the tree shape through a reparse
                let rs = match **r {
                    IndexExpr::Mul(..) => format!("({r})"),
                    _ => wrap(r),
                };
                write!(f, "{} * {}", wrap(l), rs)
            }
        }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.lhs, self.rhs)
    }
}

struct Parser<'a> {
    src: &'a str,
    at: usize,
}

type PResult<T> = Result<T, NotationError>;

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(NotationError::Syntax {
            col: self.at + 1,
            msg: msg.into(),
        })
    }

    fn ws(&mut self) {
        while self.src[self.at..].starts_with(char::is_whitespace) {
            self.at += self.src[self.at..].chars().next().unwrap().len_utf8();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.ws();
        self.src[self.at..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.at += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> PResult<()> {
        if self.eat(c) {
            Ok(())
        } else {
            match self.peek() {
                Some(x) => self.err(format!("expected `{c}`, found `{x}`")),
                None => self.err(format!("expected `{c}`, found end of input")),
            }
        }
    }

    fn ident(&mut self) -> PResult<String> {
        self.ws();
        let rest = &self.src[self.at..];
        let mut n = 0;
        for (i, c) in rest.char_indices() {
            let ok = if i == 0 {
                c.is_ascii_alphabetic() || c == '_'
            } else {
                c.is_ascii_alphanumeric() || c == '_'
            };
            if !ok {
                break;
            }
            n = i + c.len_utf8();
        }
        if n == 0 {
            return self.err("expected an identifier");
        }
        self.at += n;
        Ok(rest[..n].to_string())
    }

    fn access(&mut self) -> PResult<Access> {
        self.ws();
        let start = self.at;
        let tensor = self.ident()?;
        self.expect('(')?;
        let mut vars = Vec::new();
        if !self.eat(')') {
            loop {
                vars.push(self.ident()?);
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
            }
        }
        Ok(Access {
            tensor,
            vars,
            span: Span {
                start,
                end: self.at,
            },
        })
    }

    fn number(&mut self) -> PResult<f64> {
        self.ws();
        let rest = &self.src[self.at..];
        let mut n = 0;
        let bytes = rest.as_bytes();
        while n < bytes.len() {
            let c = bytes[n] as char;
            let exp_sign = (c == '-' || c == '+') && n > 0 && matches!(bytes[n - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                n += 1;
            } else {
                break;
            }
        }
        match rest[..n].parse::<f64>() {
            Ok(v) => {
                self.at += n;
                Ok(v)
            }
            Err(_) => self.err(format!("malformed number `{}`", &rest[..n])),
        }
    }

    fn expr(&mut self) -> PResult<IndexExpr> {
        let mut e = self.term()?;
        loop {
            if self.eat('+') {
                e = IndexExpr::add(e, self.term()?);
            } else if self.eat('-') {
                let t = self.term()?;
                e = IndexExpr::add(e, IndexExpr::mul(IndexExpr::Literal(-1.0), t));
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> PResult<IndexExpr> {
        let mut e = self.factor()?;
        while self.eat('*') {
            e = IndexExpr::mul(e, self.factor()?);
        }
        Ok(e)
    }

    fn factor(&mut self) -> PResult<IndexExpr> {
        match self.peek() {
            Some('(') => {
                self.at += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some('-') => {
                self.at += 1;
                match self.factor()? {
                    IndexExpr::Literal(v) => Ok(IndexExpr::Literal(-v)),
                    f => Ok(IndexExpr::mul(IndexExpr::Literal(-1.0), f)),
                }
            }
            Some(c) if c.is_ascii_digit() || c == '.' => Ok(IndexExpr::Literal(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => Ok(IndexExpr::Access(self.access()?)),
            Some(c) => self.err(format!("unexpected `{c}`")),
            None => self.err("unexpected end of input"),
        }
    }
}

/// Parse `lhs(vars) = rhs`.
pub fn parse(text: &str) -> Result<Assignment, NotationError> {
    let mut p = Parser { src: text, at: 0 };
    let lhs = p.access()?;
    p.expect('=')?;
    let rhs = p.expr()?;
    if let Some(c) = p.peek() {
        return p.err(format!("unexpected `{c}` after expression"));
    }
    Ok(Assignment { lhs, rhs })
}

/// A validated assignment with resolved index variable extents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checked {
    pub assignment: Assignment,
    /// Extent of each index variable.
    pub extents: BTreeMap<String, usize>,
    pub reductions: Vec<String>,
}

/// Check arities, extents and variable usage against tensor dimensions.
pub fn validate(
    a: &Assignment,
    dims: &BTreeMap<String, Vec<usize>>,
) -> Result<Checked, NotationError> {
    let mut extents: BTreeMap<String, usize> = BTreeMap::new();
    for (k, acc) in a.all_accesses().into_iter().enumerate() {
        if k > 0 && acc.tensor == a.lhs.tensor {
            return Err(NotationError::OutputRead(acc.tensor.clone()));
        }
        let d = dims
            .get(&acc.tensor)
            .ok_or_else(|| NotationError::Unbound(acc.tensor.clone()))?;
        if d.len() != acc.vars.len() {
            return Err(NotationError::Arity {
                tensor: acc.tensor.clone(),
                expected: d.len(),
                got: acc.vars.len(),
            });
        }
        for (i, v) in acc.vars.iter().enumerate() {
            if acc.vars[..i].contains(v) {
                return Err(NotationError::RepeatedVar {
                    tensor: acc.tensor.clone(),
                    var: v.clone(),
                });
            }
            match extents.get(v) {
                Some(&e) if e != d[i] => {
                    return Err(NotationError::DimMismatch {
                        var: v.clone(),
                        a: e,
                        b: d[i],
                    })
                }
                _ => {
                    extents.insert(v.clone(), d[i]);
                }
            }
        }
    }
    for v in &a.lhs.vars {
        if !a.rhs.uses_var(v) {
            return Err(NotationError::LhsOnly(v.clone()));
        }
    }
    Ok(Checked {
        assignment: a.clone(),
        extents,
        reductions: a.reduction_vars(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(t: &str, vars: &[&str]) -> IndexExpr {
        IndexExpr::Access(Access {
            tensor: t.into(),
            vars: vars.iter().map(|s| s.to_string()).collect(),
            span: Span::default(),
        })
    }

    fn dims(pairs: &[(&str, &[usize])]) -> BTreeMap<String, Vec<usize>> {
        pairs
            .iter()
            .map(|(n, d)| (n.to_string(), d.to_vec()))
            .collect()
    }

    #[test]
    fn spmv() {
        let a = parse("y(i) = A(i,j) * x(j)").unwrap();
        assert_eq!(a.lhs.tensor, "y");
        assert_eq!(
            a.rhs,
            IndexExpr::mul(acc("A", &["i", "j"]), acc("x", &["j"]))
        );
        assert_eq!(a.reduction_vars(), vec!["j"]);
    }

    #[test]
    fn matrix_add() {
        let a = parse("A(i,j) = B(i,j) + C(i,j)").unwrap();
        assert_eq!(
            a.rhs,
            IndexExpr::add(acc("B", &["i", "j"]), acc("C", &["i", "j"]))
        );
        assert!(a.reduction_vars().is_empty());
    }

    #[test]
    fn inner_product() {
        let a = parse("alpha() = B(i,j,k) * C(i,j,k)").unwrap();
        assert!(a.lhs.vars.is_empty());
        assert_eq!(a.reduction_vars(), vec!["i", "j", "k"]);
    }

    #[test]
    fn subtraction_desugars() {
        let a = parse("A(i) = B(i) - C(i)").unwrap();
        let b = parse("A(i) = B(i) + (-1)*C(i)").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn literals_and_precedence() {
        let a = parse("A(i) = 2.5 * (B(i) + C(i)) * 1e-3").unwrap();
        let want = IndexExpr::mul(
            IndexExpr::mul(
                IndexExpr::Literal(2.5),
                IndexExpr::add(acc("B", &["i"]), acc("C", &["i"])),
            ),
            IndexExpr::Literal(1e-3),
        );
        assert_eq!(a.rhs, want);
    }

    #[test]
    fn spans_point_at_accesses() {
        let a = parse("y(i) = A(i,j) * x(j)").unwrap();
        let accs = a.rhs.accesses();
        assert_eq!((accs[0].span.start, accs[0].span.end), (7, 13));
    }

    #[test]
    fn syntax_errors() {
        for (text, col) in [
            ("y(i) = ", 8),
            ("y(i) A(i)", 6),
            ("y(i) = A(i,)", 12),
            ("y(i) = A(i) x", 13),
        ] {
            match parse(text) {
                Err(NotationError::Syntax { col: c, .. }) => assert_eq!(c, col, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn print_parse_identity() {
        for s in [
            "y(i) = A(i,j) * x(j)",
            "A(i,j) = B(i,j) + C(i,j)",
            "A(i) = B(i) - 2.0 * (C(i) + D(i))",
            "A(i,j) = B(i,k,l) * C(k,j) * D(l,j)",
            "a() = B(i) * (C(i) * D(i))",
            "a() = -3.5",
        ] {
            let e = parse(s).unwrap();
            assert_eq!(parse(&e.to_string()).unwrap(), e, "{s} -> {e}");
        }
    }

    #[test]
    fn validate_ok() {
        let a = parse("y(i) = A(i,j) * x(j)").unwrap();
        let c = validate(&a, &dims(&[("y", &[4]), ("A", &[4, 6]), ("x", &[6])])).unwrap();
        assert_eq!(c.extents["j"], 6);
    }

    #[test]
    fn validate_errors() {
        let a = parse("y(i) = A(i,j) * x(j)").unwrap();
        let e = validate(&a, &dims(&[("y", &[4]), ("A", &[4, 6]), ("x", &[5])])).unwrap_err();
        assert!(matches!(e, NotationError::DimMismatch { ref var, .. } if var == "j"));
        let e = validate(&a, &dims(&[("y", &[4]), ("A", &[4, 6])])).unwrap_err();
        assert_eq!(e, NotationError::Unbound("x".into()));
        let e = validate(&a, &dims(&[("y", &[4]), ("A", &[4]), ("x", &[6])])).unwrap_err();
        assert!(matches!(e, NotationError::Arity { .. }));
        let b = parse("y(i,k) = A(i,j) * x(j)").unwrap();
        let e = validate(&b, &dims(&[("y", &[4, 2]), ("A", &[4, 6]), ("x", &[6])])).unwrap_err();
        assert_eq!(e, NotationError::LhsOnly("k".into()));
        let c = parse("y(i) = A(i,i)").unwrap();
        assert!(matches!(
            validate(&c, &dims(&[("y", &[4]), ("A", &[4, 4])])),
            Err(NotationError::RepeatedVar { .. })
        ));
    }

    #[test]
    fn mttkrp_reductions() {
        let a = parse("A(i,j) = B(i,k,l)*C(k,j)*D(l,j)").unwrap();
        let c = validate(
            &a,
            &dims(&[
                ("A", &[3, 4]),
                ("B", &[3, 5, 6]),
                ("C", &[5, 4]),
                ("D", &[6, 4]),
            ]),
        )
        .unwrap();
        assert_eq!(c.reductions, vec!["k", "l"]);
    }
}
