//! Reverse-mode differentiation over matrix operations.
//!
//! The network is written once against [`Exec`]. [`Eager`] evaluates it and
//! drops intermediates as soon as they go out of scope; [`Tape`] records every
//! operation so [`Tape::backward`] can push gradients back to the parameters.

use std::rc::Rc;

use super::tensor::{normalize_blocks, normalize_blocks_backward, Matrix};

/// Index of a parameter tensor inside a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Which curve the positive-range activation uses on x ≤ 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EluVariant {
    /// e^x: continuous, increasing, range (0, ∞).
    #[default]
    Exp,
    /// e^(−x): the variant with minimum value 1, kept for comparison runs.
    NegExp,
}

pub fn elu_plus_one_with(x: f64, variant: EluVariant) -> f64 {
    if x > 0.0 {
        x + 1.0
    } else {
        match variant {
            EluVariant::Exp => x.exp(),
            EluVariant::NegExp => (-x).exp(),
        }
    }
}

fn elu_plus_one_grad(x: f64, variant: EluVariant) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        match variant {
            EluVariant::Exp => x.exp(),
            EluVariant::NegExp => -(-x).exp(),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// KL(N(μ₁, σ₁) ‖ N(μ₂, σ₂)) and its partial derivatives in (μ₁, σ₁).
pub fn gaussian_kl_with_grad(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> (f64, f64, f64) {
    let s2sq = sigma2 * sigma2;
    let diff = mu1 - mu2;
    let kl = (sigma2 / sigma1).ln() - 0.5 + (sigma1 * sigma1 + diff * diff) / (2.0 * s2sq);
    (kl, diff / s2sq, -1.0 / sigma1 + sigma1 / s2sq)
}

/// Operations the network is built from. Handles are cheap to clone.
pub trait Exec {
    type T: Clone;

    fn value<'s>(&'s self, t: &'s Self::T) -> &'s Matrix;
    fn param(&mut self, id: ParamId) -> Self::T;
    fn constant(&mut self, m: Matrix) -> Self::T;

    fn matmul(&mut self, x: &Self::T, w: &Self::T) -> Self::T;
    fn add(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn mul(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn add_row(&mut self, x: &Self::T, bias: &Self::T) -> Self::T;
    fn mul_row(&mut self, x: &Self::T, gain: &Self::T) -> Self::T;
    fn relu(&mut self, x: &Self::T) -> Self::T;
    fn sigmoid(&mut self, x: &Self::T) -> Self::T;
    fn tanh(&mut self, x: &Self::T) -> Self::T;
    fn elu_plus_one(&mut self, x: &Self::T, variant: EluVariant) -> Self::T;
    fn normalize_blocks(&mut self, x: &Self::T, block: usize, eps: f64) -> Self::T;
    fn slice_cols(&mut self, x: &Self::T, start: usize, len: usize) -> Self::T;
    fn concat_cols(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn gather_rows(&mut self, x: &Self::T, index: &Rc<[usize]>) -> Self::T;
    fn scatter_add_rows(&mut self, x: &Self::T, index: &Rc<[usize]>, rows: usize) -> Self::T;
    fn repeat_rows(&mut self, x: &Self::T, rows: usize) -> Self::T;
    fn sum_rows(&mut self, x: &Self::T) -> Self::T;
    /// KL divergence from a 1×2 `[mean, sigma]` prediction to a fixed Gaussian.
    fn gaussian_kl(&mut self, pred: &Self::T, target_mean: f64, target_sigma: f64) -> Self::T;

    fn shape(&self, t: &Self::T) -> (usize, usize) {
        self.value(t).shape()
    }
}

/// Forward-only evaluation against a borrowed parameter set.
pub struct Eager<'a> {
    params: &'a [Matrix],
}

#[derive(Clone)]
pub enum EagerValue {
    Param(usize),
    Owned(Rc<Matrix>),
}

impl<'a> Eager<'a> {
    pub fn new(params: &'a [Matrix]) -> Self {
        Self { params }
    }

    fn own(m: Matrix) -> EagerValue {
        EagerValue::Owned(Rc::new(m))
    }
}

impl Exec for Eager<'_> {
    type T = EagerValue;

    fn value<'s>(&'s self, t: &'s EagerValue) -> &'s Matrix {
        match t {
            EagerValue::Param(i) => &self.params[*i],
            EagerValue::Owned(m) => m,
        }
    }

    fn param(&mut self, id: ParamId) -> EagerValue {
        EagerValue::Param(id.0)
    }

    fn constant(&mut self, m: Matrix) -> EagerValue {
        Self::own(m)
    }

    fn matmul(&mut self, x: &EagerValue, w: &EagerValue) -> EagerValue {
        Self::own(self.value(x).matmul(self.value(w)))
    }

    fn add(&mut self, a: &EagerValue, b: &EagerValue) -> EagerValue {
        Self::own(self.value(a).zip_map(self.value(b), |x, y| x + y))
    }

    fn mul(&mut self, a: &EagerValue, b: &EagerValue) -> EagerValue {
        Self::own(self.value(a).zip_map(self.value(b), |x, y| x * y))
    }

    fn add_row(&mut self, x: &EagerValue, bias: &EagerValue) -> EagerValue {
        Self::own(self.value(x).add_row(self.value(bias)))
    }

    fn mul_row(&mut self, x: &EagerValue, gain: &EagerValue) -> EagerValue {
        Self::own(self.value(x).mul_row(self.value(gain)))
    }

    fn relu(&mut self, x: &EagerValue) -> EagerValue {
        Self::own(self.value(x).map(|v| v.max(0.0)))
    }

    fn sigmoid(&mut self, x: &EagerValue) -> EagerValue {
        Self::own(self.value(x).map(sigmoid))
    }

    fn tanh(&mut self, x: &EagerValue) -> EagerValue {
        Self::own(self.value(x).map(f64::tanh))
    }

    fn elu_plus_one(&mut self, x: &EagerValue, variant: EluVariant) -> EagerValue {
        Self::own(self.value(x).map(|v| elu_plus_one_with(v, variant)))
    }

    fn normalize_blocks(&mut self, x: &EagerValue, block: usize, eps: f64) -> EagerValue {
        Self::own(normalize_blocks(self.value(x), block, eps).0)
    }

    fn slice_cols(&mut self, x: &EagerValue, start: usize, len: usize) -> EagerValue {
        Self::own(self.value(x).slice_cols(start, len))
    }

    fn concat_cols(&mut self, a: &EagerValue, b: &EagerValue) -> EagerValue {
        Self::own(self.value(a).concat_cols(self.value(b)))
    }

    fn gather_rows(&mut self, x: &EagerValue, index: &Rc<[usize]>) -> EagerValue {
        Self::own(self.value(x).gather_rows(index))
    }

    fn scatter_add_rows(&mut self, x: &EagerValue, index: &Rc<[usize]>, rows: usize) -> EagerValue {
        Self::own(self.value(x).scatter_add_rows(index, rows))
    }

    fn repeat_rows(&mut self, x: &EagerValue, rows: usize) -> EagerValue {
        Self::own(self.value(x).repeat_rows(rows))
    }

    fn sum_rows(&mut self, x: &EagerValue) -> EagerValue {
        Self::own(self.value(x).sum_rows())
    }

    fn gaussian_kl(&mut self, pred: &EagerValue, target_mean: f64, target_sigma: f64) -> EagerValue {
        let p = self.value(pred);
        let (kl, _, _) = gaussian_kl_with_grad(p.data[0], p.data[1], target_mean, target_sigma);
        Self::own(Matrix::filled(1, 1, kl))
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Param(usize),
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    EluPlusOne(Var, EluVariant),
    Normalize { x: Var, block: usize, inv_std: Vec<f64> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Var, Var),
    Gather { x: Var, index: Rc<[usize]> },
    ScatterAdd { x: Var, index: Rc<[usize]> },
    RepeatRows(Var),
    SumRows(Var),
    GaussianKl { pred: Var, dmean: f64, dsigma: f64 },
}

struct Node {
    op: Op,
    value: Option<Matrix>,
}

/// Records a computation for one backward pass.
pub struct Tape<'a> {
    params: &'a [Matrix],
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a [Matrix]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(i)) => &self.params[*i],
            (None, _) => unreachable!("only parameter nodes borrow their value"),
        }
    }

    /// Back-propagates from the 1×1 node `output` (seeded with `seed`) and
    /// returns gradients for every parameter, zeros for unused ones.
    pub fn backward(&self, output: Var, seed: f64) -> Vec<Matrix> {
        assert_eq!(self.val(output).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::filled(1, 1, seed));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let out = self.val(Var(idx));
            match &self.nodes[idx].op {
                Op::Param(_) | Op::Constant => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(x, w) => {
                    let dx = g.matmul_t(self.val(*w));
                    let dw = self.val(*x).t_matmul(&g);
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *w, dw);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.val(*b), |g, y| g * y);
                    let db = g.zip_map(self.val(*a), |g, x| g * x);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::AddRow(x, bias) => {
                    acc(&mut grads, *bias, g.sum_rows());
                    acc(&mut grads, *x, g);
                }
                Op::MulRow(x, gain) => {
                    let xv = self.val(*x);
                    let dgain = g.zip_map(xv, |g, x| g * x).sum_rows();
                    let dx = g.mul_row(self.val(*gain));
                    acc(&mut grads, *gain, dgain);
                    acc(&mut grads, *x, dx);
                }
                Op::Relu(x) => {
                    acc(&mut grads, *x, g.zip_map(out, |g, y| if y > 0.0 { g } else { 0.0 }));
                }
                Op::Sigmoid(x) => {
                    acc(&mut grads, *x, g.zip_map(out, |g, s| g * s * (1.0 - s)));
                }
                Op::Tanh(x) => {
                    acc(&mut grads, *x, g.zip_map(out, |g, t| g * (1.0 - t * t)));
                }
                Op::EluPlusOne(x, variant) => {
                    let v = *variant;
                    acc(&mut grads, *x, g.zip_map(self.val(*x), |g, x| g * elu_plus_one_grad(x, v)));
                }
                Op::Normalize { x, block, inv_std } => {
                    acc(&mut grads, *x, normalize_blocks_backward(&g, out, inv_std, *block));
                }
                Op::SliceCols { x, start } => {
                    let (rows, cols) = self.val(*x).shape();
                    let mut dx = Matrix::zeros(rows, cols);
                    let len = g.cols;
                    for r in 0..rows {
                        dx.row_mut(r)[*start..*start + len].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::ConcatCols(a, b) => {
                    let ac = self.val(*a).cols;
                    let bc = self.val(*b).cols;
                    acc(&mut grads, *a, g.slice_cols(0, ac));
                    acc(&mut grads, *b, g.slice_cols(ac, bc));
                }
                Op::Gather { x, index } => {
                    let rows = self.val(*x).rows;
                    acc(&mut grads, *x, g.scatter_add_rows(index, rows));
                }
                Op::ScatterAdd { x, index } => {
                    acc(&mut grads, *x, g.gather_rows(index));
                }
                Op::RepeatRows(x) => {
                    acc(&mut grads, *x, g.sum_rows());
                }
                Op::SumRows(x) => {
                    let rows = self.val(*x).rows;
                    acc(&mut grads, *x, g.repeat_rows(rows));
                }
                Op::GaussianKl { pred, dmean, dsigma } => {
                    let s = g.data[0];
                    acc(&mut grads, *pred, Matrix::from_vec(1, 2, vec![s * dmean, s * dsigma]));
                }
            }
        }

        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                self.param_vars[i]
                    .and_then(|v| grads[v.0].take())
                    .unwrap_or_else(|| Matrix::zeros(p.rows, p.cols))
            })
            .collect()
    }
}

impl Exec for Tape<'_> {
    type T = Var;

    fn value<'s>(&'s self, t: &'s Var) -> &'s Matrix {
        self.val(*t)
    }

    fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id.0),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    fn constant(&mut self, m: Matrix) -> Var {
        self.push(Op::Constant, m)
    }

    fn matmul(&mut self, x: &Var, w: &Var) -> Var {
        let v = self.val(*x).matmul(self.val(*w));
        self.push(Op::MatMul(*x, *w), v)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        let v = self.val(*a).zip_map(self.val(*b), |x, y| x + y);
        self.push(Op::Add(*a, *b), v)
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        let v = self.val(*a).zip_map(self.val(*b), |x, y| x * y);
        self.push(Op::Mul(*a, *b), v)
    }

    fn add_row(&mut self, x: &Var, bias: &Var) -> Var {
        let v = self.val(*x).add_row(self.val(*bias));
        self.push(Op::AddRow(*x, *bias), v)
    }

    fn mul_row(&mut self, x: &Var, gain: &Var) -> Var {
        let v = self.val(*x).mul_row(self.val(*gain));
        self.push(Op::MulRow(*x, *gain), v)
    }

    fn relu(&mut self, x: &Var) -> Var {
        let v = self.val(*x).map(|v| v.max(0.0));
        self.push(Op::Relu(*x), v)
    }

    fn sigmoid(&mut self, x: &Var) -> Var {
        let v = self.val(*x).map(sigmoid);
        self.push(Op::Sigmoid(*x), v)
    }

    fn tanh(&mut self, x: &Var) -> Var {
        let v = self.val(*x).map(f64::tanh);
        self.push(Op::Tanh(*x), v)
    }

    fn elu_plus_one(&mut self, x: &Var, variant: EluVariant) -> Var {
        let v = self.val(*x).map(|v| elu_plus_one_with(v, variant));
        self.push(Op::EluPlusOne(*x, variant), v)
    }

    fn normalize_blocks(&mut self, x: &Var, block: usize, eps: f64) -> Var {
        let (v, inv_std) = normalize_blocks(self.val(*x), block, eps);
        self.push(
            Op::Normalize {
                x: *x,
                block,
                inv_std,
            },
            v,
        )
    }

    fn slice_cols(&mut self, x: &Var, start: usize, len: usize) -> Var {
        let v = self.val(*x).slice_cols(start, len);
        self.push(Op::SliceCols { x: *x, start }, v)
    }

    fn concat_cols(&mut self, a: &Var, b: &Var) -> Var {
        let v = self.val(*a).concat_cols(self.val(*b));
        self.push(Op::ConcatCols(*a, *b), v)
    }

    fn gather_rows(&mut self, x: &Var, index: &Rc<[usize]>) -> Var {
        let v = self.val(*x).gather_rows(index);
        self.push(
            Op::Gather {
                x: *x,
                index: index.clone(),
            },
            v,
        )
    }

    fn scatter_add_rows(&mut self, x: &Var, index: &Rc<[usize]>, rows: usize) -> Var {
        let v = self.val(*x).scatter_add_rows(index, rows);
        self.push(
            Op::ScatterAdd {
                x: *x,
                index: index.clone(),
            },
            v,
        )
    }

    fn repeat_rows(&mut self, x: &Var, rows: usize) -> Var {
        let v = self.val(*x).repeat_rows(rows);
        self.push(Op::RepeatRows(*x), v)
    }

    fn sum_rows(&mut self, x: &Var) -> Var {
        let v = self.val(*x).sum_rows();
        self.push(Op::SumRows(*x), v)
    }

    fn gaussian_kl(&mut self, pred: &Var, target_mean: f64, target_sigma: f64) -> Var {
        let p = self.val(*pred);
        assert_eq!(p.shape(), (1, 2));
        let (kl, dmean, dsigma) = gaussian_kl_with_grad(p.data[0], p.data[1], target_mean, target_sigma);
        self.push(
            Op::GaussianKl {
                pred: *pred,
                dmean,
                dsigma,
            },
            Matrix::filled(1, 1, kl),
        )
    }
}
