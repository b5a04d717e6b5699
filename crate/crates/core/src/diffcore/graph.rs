//! Reverse-mode tape over 2-D tensors.
//!
//! Every node holds its forward value. Operations compute their value
//! eagerly when recorded and keep whatever they need for the backward pass.
//! Parameters enter the tape through [`Graph::param`]; their gradients are
//! accumulated into a [`Grads`] buffer by [`Graph::backward`].

use std::collections::HashMap;

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::{gemm, MatView, Tensor};
use crate::error::{Error, Result};

/// Backward rule of a recorded operation.
pub trait Op: Send + Sync {
    fn name(&self) -> &'static str;

    /// Input gradients given the output gradient `grad`. Entries whose
    /// `need` flag is false may be `None`.
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad: &Tensor,
        need: &[bool],
    ) -> Vec<Option<Tensor>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Kind {
    Constant,
    Param(ParamId),
    Op { op: Box<dyn Op>, inputs: Vec<Var> },
}

struct Node {
    value: Tensor,
    kind: Kind,
    requires_grad: bool,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
    frozen: Vec<bool>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            frozen: vec![false; store.len()],
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    /// Treat `id` as a constant: no gradient is recorded for it.
    pub fn freeze(&mut self, id: ParamId) {
        self.frozen[id.index()] = true;
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Kind::Constant, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let value = self.store.get(id).clone();
        let grad = !self.frozen[id.index()];
        let v = self.push(value, Kind::Param(id), grad);
        self.param_nodes.insert(id, v);
        v
    }

    /// Copy of `v` that stops gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    /// Record a custom operation whose forward value was computed by the caller.
    pub fn apply(&mut self, op: Box<dyn Op>, inputs: &[Var], output: Tensor) -> Var {
        let requires = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.push(
            output,
            Kind::Op {
                op,
                inputs: inputs.to_vec(),
            },
            requires,
        )
    }

    fn push(&mut self, value: Tensor, kind: Kind, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            kind,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Backpropagate from the scalar `root`, adding parameter gradients into `grads`.
    pub fn backward(&self, root: Var, grads: &mut Grads) -> Result<()> {
        let rv = &self.nodes[root.0].value;
        if rv.len() != 1 {
            return Err(Error::input(format!(
                "backward root must be scalar, got {}x{}",
                rv.rows, rv.cols
            )));
        }
        if !rv.data[0].is_finite() {
            return Err(Error::numeric("loss"));
        }
        let mut node_grads: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        node_grads[root.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=root.0).rev() {
            let Some(g) = node_grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.kind {
                Kind::Constant => {}
                Kind::Param(id) => grads.accumulate(*id, &g),
                Kind::Op { op, inputs } => {
                    let vals: Vec<&Tensor> = inputs.iter().map(|i| &self.nodes[i.0].value).collect();
                    let need: Vec<bool> = inputs.iter().map(|i| self.nodes[i.0].requires_grad).collect();
                    let gin = op.backward(&vals, &node.value, &g, &need);
                    debug_assert_eq!(gin.len(), inputs.len(), "{}", op.name());
                    for ((input, gi), needed) in inputs.iter().zip(gin).zip(need) {
                        let Some(gi) = gi else { continue };
                        if !needed {
                            continue;
                        }
                        debug_assert_eq!(
                            gi.shape(),
                            self.nodes[input.0].value.shape(),
                            "gradient shape from {}",
                            op.name()
                        );
                        match &mut node_grads[input.0] {
                            Some(acc) => acc.add_assign(&gi),
                            slot @ None => *slot = Some(gi),
                        }
                    }
                }
            }
        }
        Ok(())
    }

    // ----- dense layers ---------------------------------------------------

    /// `x * w + b` with `x: n x in`, `w: in x out`, `b: 1 x out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let out = linear_value(self.value(x), self.value(w), b.map(|b| self.value(b)));
        let inputs: Vec<Var> = match b {
            Some(b) => vec![x, w, b],
            None => vec![x, w],
        };
        self.apply(Box::new(LinearOp), &inputs, out)
    }

    /// First layer applied to every (point, direction) pair without
    /// materializing the concatenated input. Row `p * K + k` of the result is
    /// `[a_p, d_k] * w + b`.
    pub fn paired_linear(&mut self, a: Var, d: Var, w: Var, b: Var) -> Var {
        let out = paired_value(self.value(a), self.value(d), self.value(w), self.value(b));
        self.apply(Box::new(PairedLinearOp), &[a, d, w, b], out)
    }

    // ----- elementwise ----------------------------------------------------

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.apply(Box::new(Unary::Relu), &[x], out)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.apply(Box::new(Unary::Sigmoid), &[x], out)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let out = self.value(x).map(softplus);
        self.apply(Box::new(Unary::Softplus), &[x], out)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        self.apply(Box::new(Unary::Exp), &[x], out)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::abs);
        self.apply(Box::new(Unary::Abs), &[x], out)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        self.apply(Box::new(Unary::Square), &[x], out)
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        self.apply(Box::new(Unary::Affine(scale)), &[x], out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.apply(Box::new(Binary::Add), &[a, b], out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.apply(Box::new(Binary::Sub), &[a, b], out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.apply(Box::new(Binary::Mul), &[a, b], out)
    }

    /// Each row divided by `max(norm, eps)`.
    pub fn normalize_rows(&mut self, x: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let mut out = xv.clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(eps);
            for v in row.iter_mut() {
                *v /= n;
            }
        }
        self.apply(Box::new(NormalizeRowsOp { eps }), &[x], out)
    }

    // ----- shape ----------------------------------------------------------

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).cols).collect();
        let total: usize = widths.iter().sum();
        let mut out = Tensor::zeros(rows, total);
        let mut off = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let pv = self.value(*p);
            assert_eq!(pv.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + w].copy_from_slice(pv.row(r));
            }
            off += w;
        }
        self.apply(Box::new(ConcatColsOp { widths }), parts, out)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols);
        let mut out = Tensor::zeros(xv.rows, len);
        for r in 0..xv.rows {
            out.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        self.apply(Box::new(SliceColsOp { start }), &[x], out)
    }

    /// Row `i` of the result is row `idx[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        let xv = self.value(x);
        let mut out = Tensor::zeros(idx.len(), xv.cols);
        for (i, &src) in idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(xv.row(src));
        }
        self.apply(
            Box::new(GatherRowsOp {
                idx: idx.to_vec(),
            }),
            &[x],
            out,
        )
    }

    /// Same row-major data viewed as `rows x cols`.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), rows * cols, "reshape must keep the element count");
        let out = Tensor::from_vec(rows, cols, xv.data.clone());
        self.apply(Box::new(ReshapeOp), &[x], out)
    }

    // ----- reductions -----------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data.iter().sum();
        self.apply(Box::new(ReduceOp { scale: 1.0 }), &[x], Tensor::scalar(s))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.len().max(1) as f64;
        let s: f64 = xv.data.iter().sum::<f64>() / n;
        self.apply(Box::new(ReduceOp { scale: 1.0 / n }), &[x], Tensor::scalar(s))
    }

    /// Per-row sum: `n x c -> n x 1`.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out = Tensor::from_vec(
            xv.rows,
            1,
            (0..xv.rows).map(|r| xv.row(r).iter().sum()).collect(),
        );
        self.apply(Box::new(RowSumOp), &[x], out)
    }

    /// `sum_i w_i * s_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let mut s = 0.0;
        for (v, w) in terms {
            let t = self.value(*v);
            assert_eq!(t.len(), 1, "weighted_sum expects scalars");
            s += w * t.data[0];
        }
        let weights: Vec<f64> = terms.iter().map(|t| t.1).collect();
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        self.apply(Box::new(WeightedSumOp { weights }), &vars, Tensor::scalar(s))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    Tensor::from_vec(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    )
}

/// Forward value of [`Graph::linear`].
pub fn linear_value(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Tensor {
    assert_eq!(x.cols, w.rows, "linear: input width {} vs weight rows {}", x.cols, w.rows);
    let mut out = Tensor::zeros(x.rows, w.cols);
    if let Some(b) = b {
        assert_eq!(b.shape(), (1, w.cols));
        for r in 0..out.rows {
            out.row_mut(r).copy_from_slice(&b.data);
        }
    }
    gemm(
        MatView::of(&x.data, x.rows, x.cols),
        MatView::of(&w.data, w.rows, w.cols),
        &mut out.data,
        if b.is_some() { 1.0 } else { 0.0 },
    );
    out
}

/// Forward value of [`Graph::paired_linear`].
pub fn paired_value(a: &Tensor, d: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let p = a.rows;
    let k = d.rows;
    let h = w.cols;
    assert_eq!(w.rows, a.cols + d.cols, "paired_linear weight rows");
    assert_eq!(b.shape(), (1, h));
    let (ap, dp) = paired_parts(a, d, w);
    let mut out = Tensor::zeros(p * k, h);
    for pi in 0..p {
        let arow = ap.row(pi);
        for ki in 0..k {
            let drow = dp.row(ki);
            let orow = out.row_mut(pi * k + ki);
            for j in 0..h {
                orow[j] = arow[j] + drow[j] + b.data[j];
            }
        }
    }
    out
}

/// Split first-layer products: `a * w_top` and `d * w_bottom`.
pub(crate) fn paired_parts(a: &Tensor, d: &Tensor, w: &Tensor) -> (Tensor, Tensor) {
    let (p, da) = a.shape();
    let (k, db) = d.shape();
    let h = w.cols;
    let mut ap = Tensor::zeros(p, h);
    let mut dp = Tensor::zeros(k, h);
    gemm(
        MatView::of(&a.data, p, da),
        MatView::of(&w.data[..da * h], da, h),
        &mut ap.data,
        0.0,
    );
    gemm(
        MatView::of(&d.data, k, db),
        MatView::of(&w.data[da * h..], db, h),
        &mut dp.data,
        0.0,
    );
    (ap, dp)
}

struct LinearOp;

impl Op for LinearOp {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor, need: &[bool]) -> Vec<Option<Tensor>> {
        let (x, w) = (inputs[0], inputs[1]);
        let mut res = Vec::with_capacity(inputs.len());
        res.push(need[0].then(|| {
            let mut dx = Tensor::zeros(x.rows, x.cols);
            gemm(
                MatView::of(&g.data, g.rows, g.cols),
                MatView::of(&w.data, w.rows, w.cols).t(),
                &mut dx.data,
                0.0,
            );
            dx
        }));
        res.push(need[1].then(|| {
            let mut dw = Tensor::zeros(w.rows, w.cols);
            gemm(
                MatView::of(&x.data, x.rows, x.cols).t(),
                MatView::of(&g.data, g.rows, g.cols),
                &mut dw.data,
                0.0,
            );
            dw
        }));
        if inputs.len() == 3 {
            res.push(need[2].then(|| col_sum(g)));
        }
        res
    }
}

fn col_sum(g: &Tensor) -> Tensor {
    let mut s = Tensor::zeros(1, g.cols);
    for r in 0..g.rows {
        for (a, b) in s.data.iter_mut().zip(g.row(r)) {
            *a += b;
        }
    }
    s
}

struct PairedLinearOp;

impl Op for PairedLinearOp {
    fn name(&self) -> &'static str {
        "paired_linear"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor, need: &[bool]) -> Vec<Option<Tensor>> {
        let (a, d, w) = (inputs[0], inputs[1], inputs[2]);
        let (p, da) = a.shape();
        let (k, db) = d.shape();
        let h = w.cols;
        // reduce over the pairing first: ga = sum_k g[p,k], gd = sum_p g[p,k]
        let mut ga = Tensor::zeros(p, h);
        let mut gd = Tensor::zeros(k, h);
        for pi in 0..p {
            let garow = ga.row_mut(pi);
            for ki in 0..k {
                let grow = g.row(pi * k + ki);
                for j in 0..h {
                    garow[j] += grow[j];
                }
            }
        }
        for pi in 0..p {
            for ki in 0..k {
                let grow = g.row(pi * k + ki);
                let gdrow = gd.row_mut(ki);
                for j in 0..h {
                    gdrow[j] += grow[j];
                }
            }
        }
        let w_top = MatView::of(&w.data[..da * h], da, h);
        let w_bot = MatView::of(&w.data[da * h..], db, h);
        let da_grad = need[0].then(|| {
            let mut t = Tensor::zeros(p, da);
            gemm(MatView::of(&ga.data, p, h), w_top.t(), &mut t.data, 0.0);
            t
        });
        let dd_grad = need[1].then(|| {
            let mut t = Tensor::zeros(k, db);
            gemm(MatView::of(&gd.data, k, h), w_bot.t(), &mut t.data, 0.0);
            t
        });
        let dw = need[2].then(|| {
            let mut t = Tensor::zeros(da + db, h);
            let (top, bot) = t.data.split_at_mut(da * h);
            gemm(MatView::of(&a.data, p, da).t(), MatView::of(&ga.data, p, h), top, 0.0);
            gemm(MatView::of(&d.data, k, db).t(), MatView::of(&gd.data, k, h), bot, 0.0);
            t
        });
        let db_grad = need[3].then(|| col_sum(&ga));
        vec![da_grad, dd_grad, dw, db_grad]
    }
}

enum Unary {
    Relu,
    Sigmoid,
    Softplus,
    Exp,
    Abs,
    Square,
    Affine(f64),
}

impl Op for Unary {
    fn name(&self) -> &'static str {
        match self {
            Unary::Relu => "relu",
            Unary::Sigmoid => "sigmoid",
            Unary::Softplus => "softplus",
            Unary::Exp => "exp",
            Unary::Abs => "abs",
            Unary::Square => "square",
            Unary::Affine(_) => "affine",
        }
    }

    fn backward(&self, inputs: &[&Tensor], out: &Tensor, g: &Tensor, _need: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let data: Vec<f64> = match self {
            Unary::Relu => x
                .data
                .iter()
                .zip(&g.data)
                .map(|(&xv, &gv)| if xv > 0.0 { gv } else { 0.0 })
                .collect(),
            Unary::Sigmoid => out.data.iter().zip(&g.data).map(|(&y, &gv)| gv * y * (1.0 - y)).collect(),
            Unary::Softplus => x.data.iter().zip(&g.data).map(|(&xv, &gv)| gv * sigmoid(xv)).collect(),
            Unary::Exp => out.data.iter().zip(&g.data).map(|(&y, &gv)| gv * y).collect(),
            Unary::Abs => x
                .data
                .iter()
                .zip(&g.data)
                .map(|(&xv, &gv)| {
                    if xv > 0.0 {
                        gv
                    } else if xv < 0.0 {
                        -gv
                    } else {
                        0.0
                    }
                })
                .collect(),
            Unary::Square => x.data.iter().zip(&g.data).map(|(&xv, &gv)| 2.0 * xv * gv).collect(),
            Unary::Affine(s) => g.data.iter().map(|&gv| s * gv).collect(),
        };
        vec![Some(Tensor::from_vec(x.rows, x.cols, data))]
    }
}

enum Binary {
    Add,
    Sub,
    Mul,
}

impl Op for Binary {
    fn name(&self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        }
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor, need: &[bool]) -> Vec<Option<Tensor>> {
        match self {
            Binary::Add => vec![need[0].then(|| g.clone()), need[1].then(|| g.clone())],
            Binary::Sub => vec![need[0].then(|| g.clone()), need[1].then(|| g.map(|v| -v))],
            Binary::Mul => vec![
                need[0].then(|| zip_map(g, inputs[1], |a, b| a * b)),
                need[1].then(|| zip_map(g, inputs[0], |a, b| a * b)),
            ],
        }
    }
}

struct NormalizeRowsOp {
    eps: f64,
}

impl Op for NormalizeRowsOp {
    fn name(&self) -> &'static str {
        "normalize_rows"
    }

    fn backward(&self, inputs: &[&Tensor], out: &Tensor, g: &Tensor, _need: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let mut dx = Tensor::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let xr = x.row(r);
            let n = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
            let gr = g.row(r);
            let dr = dx.row_mut(r);
            if n > self.eps {
                // d(x/|x|) = (I - y y^T) / |x|
                let y = out.row(r);
                let gy: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                for j in 0..dr.len() {
                    dr[j] = (gr[j] - gy * y[j]) / n;
                }
            } else {
                for j in 0..dr.len() {
                    dr[j] = gr[j] / self.eps;
                }
            }
        }
        vec![Some(dx)]
    }
}

struct ConcatColsOp {
    widths: Vec<usize>,
}

impl Op for ConcatColsOp {
    fn name(&self) -> &'static str {
        "concat_cols"
    }

    fn backward(&self, _inputs: &[&Tensor], _out: &Tensor, g: &Tensor, need: &[bool]) -> Vec<Option<Tensor>> {
        let mut off = 0;
        let mut res = Vec::with_capacity(self.widths.len());
        for (&w, &n) in self.widths.iter().zip(need) {
            res.push(n.then(|| {
                let mut t = Tensor::zeros(g.rows, w);
                for r in 0..g.rows {
                    t.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                }
                t
            }));
            off += w;
        }
        res
    }
}

struct SliceColsOp {
    start: usize,
}

impl Op for SliceColsOp {
    fn name(&self) -> &'static str {
        "slice_cols"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor, _need: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let mut dx = Tensor::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            dx.row_mut(r)[self.start..self.start + g.cols].copy_from_slice(g.row(r));
        }
        vec![Some(dx)]
    }
}

struct GatherRowsOp {
    idx: Vec<usize>,
}

impl Op for GatherRowsOp {
    fn name(&self) -> &'static str {
        "gather_rows"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor, _need: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let mut dx = Tensor::zeros(x.rows, x.cols);
        for (i, &src) in self.idx.iter().enumerate() {
            for (a, b) in dx.row_mut(src).iter_mut().zip(g.row(i)) {
                *a += b;
            }
        }
        vec![Some(dx)]
    }
}

struct ReshapeOp;

impl Op for ReshapeOp {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor, _need: &[bool]) -> Vec<Option<Tensor>> {
        vec![Some(Tensor::from_vec(inputs[0].rows, inputs[0].cols, g.data.clone()))]
    }
}

struct ReduceOp {
    scale: f64,
}

impl Op for ReduceOp {
    fn name(&self) -> &'static str {
        "reduce"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor, _need: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let v = g.item() * self.scale;
        vec![Some(Tensor::from_vec(x.rows, x.cols, vec![v; x.len()]))]
    }
}

struct RowSumOp;

impl Op for RowSumOp {
    fn name(&self) -> &'static str {
        "row_sum"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor, _need: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let mut dx = Tensor::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let gv = g.data[r];
            for v in dx.row_mut(r) {
                *v = gv;
            }
        }
        vec![Some(dx)]
    }
}

struct WeightedSumOp {
    weights: Vec<f64>,
}

impl Op for WeightedSumOp {
    fn name(&self) -> &'static str {
        "weighted_sum"
    }

    fn backward(&self, _inputs: &[&Tensor], _out: &Tensor, g: &Tensor, need: &[bool]) -> Vec<Option<Tensor>> {
        self.weights
            .iter()
            .zip(need)
            .map(|(w, &n)| n.then(|| Tensor::scalar(w * g.item())))
            .collect()
    }
}
