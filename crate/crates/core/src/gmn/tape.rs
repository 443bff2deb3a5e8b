//! Reverse-mode differentiation over dense row-major matrices.

use std::ops::Range;
use std::rc::Rc;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis, Zip};

use super::Real;

pub type Var = usize;

enum Op<F> {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulT(Var, Var),
    /// Row broadcast of a `1 x m` bias.
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Softplus(Var),
    Concat(Vec<Var>),
    Gather(Var, Rc<Vec<usize>>),
    ScatterAdd(Var, Rc<Vec<usize>>),
    SoftmaxRows(Var),
    /// Euclidean norm of every row, `n x 1`.
    RowNorm(Var),
    /// Product with a `1 x m` row broadcast down the rows.
    MulRow(Var, Var),
    /// Sum of all entries as a `1 x 1` value.
    Sum(Var),
    Relu(Var),
    CrossAttend { r: Var, pairs: Rc<Vec<(Range<usize>, Range<usize>)>>, scale: F, attn: Vec<(Array2<F>, Array2<F>)> },
}

struct Node<F> {
    value: Array2<F>,
    op: Op<F>,
}

pub struct Tape<F> {
    nodes: Vec<Node<F>>,
}

fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn softplus<F: Real>(x: F) -> F {
    // ln(1 + e^x) without overflow
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

fn softmax<F: Real>(mut v: Array2<F>) -> Array2<F> {
    for mut row in v.rows_mut() {
        let m = row.fold(F::neg_infinity(), |acc, &x| acc.max(x));
        row.mapv_inplace(|x| (x - m).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    v
}

fn softmax_back<F: Real>(y: &Array2<F>, g: &Array2<F>) -> Array2<F> {
    let mut d = g * y;
    for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
        let dot = drow.sum();
        Zip::from(&mut drow).and(&yrow).for_each(|dv, &yv| *dv = *dv - yv * dot);
    }
    d
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Tape { nodes: Vec::new() }
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<F>, op: Op<F>) -> Var {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, v: Var) -> &Array2<F> {
        &self.nodes[v].value
    }

    pub fn scalar(&self, v: Var) -> F {
        self.nodes[v].value[[0, 0]]
    }

    pub fn constant(&mut self, value: Array2<F>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A leaf whose gradient is reported under `index`.
    pub fn param(&mut self, index: usize, value: Array2<F>) -> Var {
        self.push(value, Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let v = self.value(a) + self.value(bias);
        self.push(v, Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: F) -> Var {
        let v = self.value(a).mapv(|x| x * k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.tanh());
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.exp());
        self.push(v, Op::Exp(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<F>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("concat rows agree");
        self.push(v, Op::Concat(parts.to_vec()))
    }

    pub fn gather(&mut self, a: Var, rows: Rc<Vec<usize>>) -> Var {
        let src = self.value(a);
        let mut v = Array2::zeros((rows.len(), src.ncols()));
        for (i, &r) in rows.iter().enumerate() {
            v.row_mut(i).assign(&src.row(r));
        }
        self.push(v, Op::Gather(a, rows))
    }

    /// Sums row `i` of `a` into row `rows[i]` of an `n`-row result.
    pub fn scatter_add(&mut self, a: Var, rows: Rc<Vec<usize>>, n: usize) -> Var {
        let src = self.value(a);
        let mut v = Array2::zeros((n, src.ncols()));
        for (i, &r) in rows.iter().enumerate() {
            let mut dst = v.row_mut(r);
            dst += &src.row(i);
        }
        self.push(v, Op::ScatterAdd(a, rows))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax(self.value(a).clone());
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn row_norm(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut v = Array2::zeros((src.nrows(), 1));
        for (i, row) in src.rows().into_iter().enumerate() {
            v[[i, 0]] = row.fold(F::zero(), |acc, &x| acc + x * x).sqrt();
        }
        self.push(v, Op::RowNorm(a))
    }

    pub fn mul_row(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MulRow(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(F::zero()));
        self.push(v, Op::Relu(a))
    }

    /// For each `(a, b)` block pair, rows of `a` attend over all rows of `b`
    /// and vice versa; each row receives `r_v - sum_u att(v, u) r_u` with
    /// attention `softmax(scale * r_v . r_u)`. Rows outside every pair are zero.
    pub fn cross_attend(&mut self, r: Var, pairs: Rc<Vec<(Range<usize>, Range<usize>)>>, scale: F) -> Var {
        let rv = self.value(r);
        let mut out = Array2::zeros(rv.dim());
        let mut attn = Vec::with_capacity(pairs.len());
        for (ra, rb) in pairs.iter() {
            let xa = rv.slice(s![ra.clone(), ..]);
            let xb = rv.slice(s![rb.clone(), ..]);
            let ab = softmax(xa.dot(&xb.t()) * scale);
            let ba = softmax(xb.dot(&xa.t()) * scale);
            out.slice_mut(s![ra.clone(), ..]).assign(&(&xa - &ab.dot(&xb)));
            out.slice_mut(s![rb.clone(), ..]).assign(&(&xb - &ba.dot(&xa)));
            attn.push((ab, ba));
        }
        self.push(out, Op::CrossAttend { r, pairs, scale, attn })
    }

    /// Gradients of scalar `out` with respect to every `param` leaf, as
    /// `(index, gradient)` pairs in tape order.
    pub fn backward(&self, out: Var) -> Vec<(usize, Array2<F>)> {
        let mut grads: Vec<Option<Array2<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out] = Some(Array2::from_elem(self.nodes[out].value.dim(), F::one()));
        let mut params = Vec::new();
        fn acc<F: Real>(grads: &mut [Option<Array2<F>>], v: Var, g: Array2<F>) {
            match &mut grads[v] {
                Some(x) => *x += &g,
                slot => *slot = Some(g),
            }
        }
        for i in (0..=out).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(idx) => params.push((*idx, g)),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.dot(&bv.t()));
                    acc(&mut grads, *b, av.t().dot(&g));
                }
                Op::MatMulT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.dot(bv));
                    acc(&mut grads, *b, g.t().dot(av));
                }
                Op::AddBias(a, b) => {
                    acc(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.mapv(|x| -x));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, &g * bv);
                    acc(&mut grads, *b, &g * av);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, g.mapv(|x| x * *k)),
                Op::Tanh(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d = *d * (F::one() - y * y));
                    acc(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d = *d * y * (F::one() - y));
                    acc(&mut grads, *a, d);
                }
                Op::Exp(a) => acc(&mut grads, *a, &g * &node.value),
                Op::Softplus(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| *d = *d * sigmoid(x));
                    acc(&mut grads, *a, d);
                }
                Op::Concat(parts) => {
                    let mut col = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        acc(&mut grads, p, g.slice(s![.., col..col + w]).to_owned());
                        col += w;
                    }
                }
                Op::Gather(a, rows) => {
                    let src = self.value(*a);
                    let mut d = Array2::zeros(src.dim());
                    for (k, &r) in rows.iter().enumerate() {
                        let mut dst = d.row_mut(r);
                        dst += &g.row(k);
                    }
                    acc(&mut grads, *a, d);
                }
                Op::ScatterAdd(a, rows) => {
                    let mut d = Array2::zeros((rows.len(), g.ncols()));
                    for (k, &r) in rows.iter().enumerate() {
                        d.row_mut(k).assign(&g.row(r));
                    }
                    acc(&mut grads, *a, d);
                }
                Op::SoftmaxRows(a) => acc(&mut grads, *a, softmax_back(&node.value, &g)),
                Op::RowNorm(a) => {
                    let mut d = self.value(*a).clone();
                    for (i, mut row) in d.rows_mut().into_iter().enumerate() {
                        let n = node.value[[i, 0]];
                        // no gradient at the origin; take zero
                        let k = if n > F::zero() { g[[i, 0]] / n } else { F::zero() };
                        row.mapv_inplace(|x| x * k);
                    }
                    acc(&mut grads, *a, d);
                }
                Op::MulRow(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *b, (&g * av).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, &g * bv);
                }
                Op::Sum(a) => acc(&mut grads, *a, Array2::from_elem(self.value(*a).dim(), g[[0, 0]])),
                Op::Relu(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| {
                        if x <= F::zero() {
                            *d = F::zero()
                        }
                    });
                    acc(&mut grads, *a, d);
                }
                Op::CrossAttend { r, pairs, scale, attn } => {
                    let rv = self.value(*r);
                    let mut d = Array2::zeros(rv.dim());
                    for ((ra, rb), (ab, ba)) in pairs.iter().zip(attn) {
                        for (ra, rb, att) in [(ra, rb, ab), (rb, ra, ba)] {
                            let xa = rv.slice(s![ra.clone(), ..]);
                            let xb = rv.slice(s![rb.clone(), ..]);
                            let ga = g.slice(s![ra.clone(), ..]);
                            // out_a = x_a - att x_b
                            let d_att = -ga.dot(&xb.t());
                            let ds = softmax_back(att, &d_att) * *scale;
                            let da = &ga + &ds.dot(&xb);
                            let db = ds.t().dot(&xa) - att.t().dot(&ga);
                            let mut slot = d.slice_mut(s![ra.clone(), ..]);
                            slot += &da;
                            let mut slot = d.slice_mut(s![rb.clone(), ..]);
                            slot += &db;
                        }
                    }
                    acc(&mut grads, *r, d);
                }
            }
        }
        params
    }
}
