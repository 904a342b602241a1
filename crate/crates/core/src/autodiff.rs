//! A small reverse-mode gradient tape over dense `f64` matrices.
//!
//! Values are recorded eagerly as operations are applied; [`Tape::backward`]
//! walks the recorded nodes in reverse. Only the primitives needed by the
//! network and PPO losses are provided.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::AutodiffError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `n×k` plus a broadcast `1×k` row.
    AddRow(Var, Var),
    /// `1×k` repeated into `n×k`.
    BroadcastRows(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    /// Elementwise minimum; ties route the gradient to the first argument.
    Min(Var, Var),
    Mean(Var),
    /// Row sums: `n×k -> n×1`.
    SumCols(Var),
    /// Row-major reinterpretation to a new shape.
    Reshape(Var),
    /// Row-major slice `[offset, offset + r*c)` of a `1×n` vector, as `r×c`.
    Block(Var, usize),
    /// Fixed sparse linear map from a `1×K` coefficient row to a matrix.
    Combine(Var, Arc<LinearCombination>),
    /// A value produced outside the tape from its parent.
    Opaque(Var, &'static str),
}

/// Sparse linear map `c ↦ M` with `M[row, col] = Σ value · c[coef]` over
/// the stored terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCombination {
    pub rows: usize,
    pub cols: usize,
    pub num_coefficients: usize,
    /// `(coefficient, row, col, value)`.
    pub terms: Vec<(usize, usize, usize, f64)>,
}

impl LinearCombination {
    pub fn apply(&self, coefficients: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(k, i, j, v) in &self.terms {
            m[(i, j)] += v * coefficients[k];
        }
        m
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: DMatrix<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<DMatrix<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zero-shaped `None` if `v` did not
    /// influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&DMatrix<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn column_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(1, m.ncols(), |_, j| m.column(j).sum())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DMatrix<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &DMatrix<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf; no gradient is accumulated for it.
    pub fn constant(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A `1×n` differentiable row holding `values`.
    pub fn param_row(&mut self, values: &[f64]) -> Var {
        self.param(DMatrix::from_row_slice(1, values.len(), values))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).component_mul(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "add_row expects a 1xk row");
        let mut v = self.value(a).clone();
        for mut line in v.row_iter_mut() {
            line += r;
        }
        let ng = self.needs(a) || self.needs(row);
        self.push(v, Op::AddRow(a, row), ng)
    }

    pub fn broadcast_rows(&mut self, row: Var, n: usize) -> Var {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "broadcast_rows expects a 1xk row");
        let v = DMatrix::from_fn(n, r.ncols(), |_, j| r[(0, j)]);
        let ng = self.needs(row);
        self.push(v, Op::BroadcastRows(row), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).add_scalar(c);
        let ng = self.needs(a);
        self.push(v, Op::AddScalar(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let ng = self.needs(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        let ng = self.needs(a);
        self.push(v, Op::Exp(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        let ng = self.needs(a);
        self.push(v, Op::Square(a), ng)
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        let ng = self.needs(a);
        self.push(v, Op::Softplus(a), ng)
    }

    /// Elementwise clamp to `[lo, hi]`. The gradient passes wherever
    /// `lo <= x <= hi`, so at the exact boundary the unclipped branch wins.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        let ng = self.needs(a);
        self.push(v, Op::Clamp(a, lo, hi), ng)
    }

    /// Elementwise minimum; on ties the gradient goes to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), f64::min);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Min(a, b), ng)
    }

    /// Mean of all entries, as `1×1`.
    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = m.sum() / m.len() as f64;
        let ng = self.needs(a);
        self.push(DMatrix::from_element(1, 1, v), Op::Mean(a), ng)
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = DMatrix::from_fn(m.nrows(), 1, |i, _| m.row(i).sum());
        let ng = self.needs(a);
        self.push(v, Op::SumCols(a), ng)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let data = row_major(self.value(a));
        assert_eq!(data.len(), rows * cols, "reshape changes element count");
        let v = DMatrix::from_row_slice(rows, cols, &data);
        let ng = self.needs(a);
        self.push(v, Op::Reshape(a), ng)
    }

    /// Row-major `rows×cols` block of a `1×n` row starting at `offset`.
    pub fn block(&mut self, row: Var, offset: usize, rows: usize, cols: usize) -> Var {
        let src = self.value(row);
        assert_eq!(src.nrows(), 1, "block expects a 1xn row");
        assert!(offset + rows * cols <= src.ncols(), "block out of range");
        let v = DMatrix::from_fn(rows, cols, |i, j| src[(0, offset + i * cols + j)]);
        let ng = self.needs(row);
        self.push(v, Op::Block(row, offset), ng)
    }

    /// Applies a fixed sparse linear map to a `1×K` coefficient row.
    pub fn combine(&mut self, coefficients: Var, plan: Arc<LinearCombination>) -> Var {
        let c = self.value(coefficients);
        assert_eq!(c.nrows(), 1, "combine expects a 1xK row");
        assert_eq!(c.ncols(), plan.num_coefficients, "coefficient count mismatch");
        let coeffs: Vec<f64> = c.iter().copied().collect();
        let v = plan.apply(&coeffs);
        let ng = self.needs(coefficients);
        self.push(v, Op::Combine(coefficients, plan), ng)
    }

    /// Records a value computed outside the tape from `parent`. Gradients
    /// cannot flow through it.
    pub fn opaque(&mut self, parent: Var, value: DMatrix<f64>, name: &'static str) -> Var {
        let ng = self.needs(parent);
        self.push(value, Op::Opaque(parent, name), ng)
    }

    /// Reverse pass from a `1×1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let out = self.value(loss);
        if out.nrows() != 1 || out.ncols() != 1 {
            return Err(AutodiffError::NonScalarLoss {
                rows: out.nrows(),
                cols: out.ncols(),
            });
        }
        let mut grads: Vec<Option<DMatrix<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DMatrix::from_element(1, 1, 1.0));

        fn acc(grads: &mut [Option<DMatrix<f64>>], v: Var, g: DMatrix<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.needs(a) {
                        acc(&mut grads, a, &g * self.value(b).transpose());
                    }
                    if self.needs(b) {
                        acc(&mut grads, b, self.value(a).transpose() * &g);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(a) {
                        acc(&mut grads, a, g.clone());
                    }
                    if self.needs(b) {
                        acc(&mut grads, b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(a) {
                        acc(&mut grads, a, g.clone());
                    }
                    if self.needs(b) {
                        acc(&mut grads, b, -g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(a) {
                        acc(&mut grads, a, g.component_mul(self.value(b)));
                    }
                    if self.needs(b) {
                        acc(&mut grads, b, g.component_mul(self.value(a)));
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs(row) {
                        acc(&mut grads, row, column_sums(&g));
                    }
                    if self.needs(a) {
                        acc(&mut grads, a, g);
                    }
                }
                Op::BroadcastRows(row) => acc(&mut grads, row, column_sums(&g)),
                Op::Scale(a, c) => acc(&mut grads, a, g * c),
                Op::AddScalar(a) => acc(&mut grads, a, g),
                Op::Tanh(a) => {
                    let d = node.value.map(|y| 1.0 - y * y);
                    acc(&mut grads, a, g.component_mul(&d));
                }
                Op::Exp(a) => acc(&mut grads, a, g.component_mul(&node.value)),
                Op::Square(a) => {
                    let d = self.value(a) * 2.0;
                    acc(&mut grads, a, g.component_mul(&d));
                }
                Op::Softplus(a) => {
                    let d = self.value(a).map(sigmoid);
                    acc(&mut grads, a, g.component_mul(&d));
                }
                Op::Clamp(a, lo, hi) => {
                    let mask = self
                        .value(a)
                        .map(|x| if (lo..=hi).contains(&x) { 1.0 } else { 0.0 });
                    acc(&mut grads, a, g.component_mul(&mask));
                }
                Op::Min(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    let pick_a = va.zip_map(vb, |x, y| if x <= y { 1.0 } else { 0.0 });
                    if self.needs(a) {
                        acc(&mut grads, a, g.component_mul(&pick_a));
                    }
                    if self.needs(b) {
                        let pick_b = pick_a.map(|p| 1.0 - p);
                        acc(&mut grads, b, g.component_mul(&pick_b));
                    }
                }
                Op::Mean(a) => {
                    let src = self.value(a);
                    let n = src.len() as f64;
                    acc(
                        &mut grads,
                        a,
                        DMatrix::from_element(src.nrows(), src.ncols(), g[(0, 0)] / n),
                    );
                }
                Op::SumCols(a) => {
                    let src = self.value(a);
                    acc(
                        &mut grads,
                        a,
                        DMatrix::from_fn(src.nrows(), src.ncols(), |i, _| g[(i, 0)]),
                    );
                }
                Op::Reshape(a) => {
                    let src = self.value(a);
                    let data = row_major(&g);
                    acc(
                        &mut grads,
                        a,
                        DMatrix::from_row_slice(src.nrows(), src.ncols(), &data),
                    );
                }
                Op::Block(row, offset) => {
                    let n = self.value(row).ncols();
                    let mut full = DMatrix::zeros(1, n);
                    let cols = g.ncols();
                    for i in 0..g.nrows() {
                        for j in 0..cols {
                            full[(0, offset + i * cols + j)] = g[(i, j)];
                        }
                    }
                    acc(&mut grads, row, full);
                }
                Op::Combine(c, ref plan) => {
                    let mut gc = DMatrix::zeros(1, plan.num_coefficients);
                    for &(k, i, j, v) in &plan.terms {
                        gc[(0, k)] += v * g[(i, j)];
                    }
                    acc(&mut grads, c, gc);
                }
                Op::Opaque(parent, name) => {
                    if self.needs(parent) {
                        return Err(AutodiffError::UnsupportedPrimitive(name));
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
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

/// Value and gradient of a scalar loss over a flat parameter vector.
///
/// `loss` receives the tape and a `1×n` parameter row and must return a
/// `1×1` node.
pub fn grad<F>(params: &[f64], loss: F) -> Result<(f64, Vec<f64>), AutodiffError>
where
    F: FnOnce(&mut Tape, Var) -> Var,
{
    let mut tape = Tape::new();
    let p = tape.param_row(params);
    let out = loss(&mut tape, p);
    let value = tape.scalar(out);
    let grads = tape.backward(out)?;
    let g = grads
        .wrt(p)
        .map(|m| m.iter().copied().collect())
        .unwrap_or_else(|| vec![0.0; params.len()]);
    Ok((value, g))
}

/// Central finite differences of `f` at `params` with step `h`.
pub fn finite_difference<F>(params: &[f64], h: f64, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest coordinatewise relative error `|a−b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let e = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        })
        .fold(0.0, f64::max)
}

/// Bias-corrected adaptive-moment optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub steps: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            steps: 0,
        }
    }

    /// One descent step on `params` given `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.first_moment.len());
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
