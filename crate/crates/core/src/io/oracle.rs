use std::collections::BTreeMap;

use crate::formats::CoordList;
use crate::notation::{Checked, IndexExpr};
use crate::scalar::Scalar;

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<T> {
    pub dims: Vec<usize>,
    pub vals: Vec<T>,
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

impl<T: Scalar> DenseTensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        DenseTensor {
            dims: dims.to_vec(),
            vals: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn from_coords(list: &CoordList<T>) -> Self {
        DenseTensor {
            dims: list.dims.clone(),
            vals: list.to_dense(),
        }
    }

    pub fn to_coords(&self) -> CoordList<T> {
        CoordList::from_dense(self.dims.clone(), &self.vals)
    }
}

enum Node {
    Access {
        tensor: usize,
        slots: Vec<usize>,
        strides: Vec<usize>,
    },
    Add(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Lit(f64),
}

fn lower<T: Scalar>(
    e: &IndexExpr,
    vars: &[String],
    names: &mut Vec<String>,
    bind: &BTreeMap<String, DenseTensor<T>>,
) -> Node {
    match e {
        IndexExpr::Access(a) => {
            let tensor = match names.iter().position(|n| *n == a.tensor) {
                Some(t) => t,
                None => {
                    names.push(a.tensor.clone());
                    names.len() - 1
                }
            };
            Node::Access {
                tensor,
                slots: a
                    .vars
                    .iter()
                    .map(|v| vars.iter().position(|x| x == v).unwrap())
                    .collect(),
                strides: strides(&bind[&a.tensor].dims),
            }
        }
        IndexExpr::Add(l, r) => Node::Add(
            Box::new(lower(l, vars, names, bind)),
            Box::new(lower(r, vars, names, bind)),
        ),
        IndexExpr::Mul(l, r) => Node::Mul(
            Box::new(lower(l, vars, names, bind)),
            Box::new(lower(r, vars, names, bind)),
        ),
        IndexExpr::Literal(v) => Node::Lit(*v),
    }
}

fn eval<T: Scalar>(n: &Node, point: &[usize], tensors: &[&DenseTensor<T>]) -> T {
    match n {
        Node::Access {
            tensor,
            slots,
            strides,
        } => {
            let lin: usize = slots
                .iter()
                .zip(strides)
                .map(|(&s, &st)| point[s] * st)
                .sum();
            tensors[*tensor].vals[lin]
        }
        Node::Add(l, r) => eval(l, point, tensors) + eval(r, point, tensors),
        Node::Mul(l, r) => eval(l, point, tensors) * eval(r, point, tensors),
        Node::Lit(v) => T::from_f64_lossy(*v),
    }
}

/// Brute-force evaluation: visit every point of the iteration space and
/// accumulate into the output. No sparsity logic at all.
pub fn oracle_eval<T: Scalar>(
    checked: &Checked,
    bind: &BTreeMap<String, DenseTensor<T>>,
) -> DenseTensor<T> {
    let a = &checked.assignment;
    let vars = a.vars();
    let extents: Vec<usize> = vars.iter().map(|v| checked.extents[v]).collect();
    let out_dims: Vec<usize> = a.lhs.vars.iter().map(|v| checked.extents[v]).collect();
    let out_slots: Vec<usize> = a
        .lhs
        .vars
        .iter()
        .map(|v| vars.iter().position(|x| x == v).unwrap())
        .collect();
    let out_strides = strides(&out_dims);
    let mut names = Vec::new();
    let root = lower(&a.rhs, &vars, &mut names, bind);
    let tensors: Vec<&DenseTensor<T>> = names.iter().map(|n| &bind[n]).collect();
    let mut out = DenseTensor::zeros(&out_dims);
    if extents.iter().any(|&e| e == 0) {
        return out;
    }
    let mut point = vec![0usize; vars.len()];
    loop {
        let lin: usize = out_slots
            .iter()
            .zip(&out_strides)
            .map(|(&s, &st)| point[s] * st)
            .sum();
        out.vals[lin] += eval(&root, &point, &tensors);
        let mut k = vars.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            point[k] += 1;
            if point[k] < extents[k] {
                break;
            }
            point[k] = 0;
        }
    }
}
