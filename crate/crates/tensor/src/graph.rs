//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! Nodes are appended in evaluation order, so the tape is acyclic and reverse
//! index order is a valid reverse topological order; [`Graph::backward`] visits
//! each node once and sums gradient contributions from every consumer.
//!
//! Batched layouts put the batch axis first: dense inputs are `[B, features]`,
//! 2D feature maps `[B, C, H, W]` and spatiotemporal volumes `[B, C, T, H, W]`.

use crate::error::{mismatch, Result, TensorError};
use crate::kernels::{gemm_nn, gemm_nt, gemm_tn, window_argmax, ConvGeom};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Dense { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    Conv { x: Var, k: Var, b: Option<Var>, geom: ConvGeom, batch: usize, cout: usize },
    /// `y[i] = x[src[i]]`; pooling and nearest-neighbour upsampling.
    Gather { x: Var, src: Vec<u32> },
    Concat { a: Var, b: Var, batch: usize, a_block: usize, b_block: usize },
    Reshape(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mse { pred: Var, target: Var },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    track_kinks: bool,
    kinks: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph that fingerprints every piecewise-linear branch taken (ReLU masks,
    /// pooling argmaxes). Two evaluations with equal signatures lie on the same
    /// smooth piece, which is what finite-difference checks need.
    pub fn with_kink_tracking() -> Self {
        Self {
            track_kinks: true,
            kinks: FNV_OFFSET,
            ..Self::default()
        }
    }

    pub fn kink_signature(&self) -> u64 {
        self.kinks
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn mix(&mut self, words: impl Iterator<Item = u64>) {
        if self.track_kinks {
            for w in words {
                self.kinks = (self.kinks ^ w).wrapping_mul(FNV_PRIME);
            }
        }
    }

    /// Constant leaf; no gradient is computed for it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// `y = x · wᵀ + b` for `x: [B, in]`, `w: [out, in]`, `b: [out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[1] || bs[0] != ws[0] {
            return Err(mismatch("dense", format!("x {xs:?}, w {ws:?}, b {bs:?}")));
        }
        let (batch, fin, fout) = (xs[0], xs[1], ws[0]);
        let bias = self.value(b).data();
        let mut y: Vec<f64> = (0..batch).flat_map(|_| bias.iter().copied()).collect();
        gemm_nt(batch, fin, fout, self.value(x).data(), self.value(w).data(), 1.0, &mut y);
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Tensor::new(&[batch, fout], y)?, Op::Dense { x, w, b }, needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        if self.track_kinks {
            let words: Vec<u64> = y
                .data()
                .chunks(64)
                .map(|c| c.iter().enumerate().fold(0u64, |acc, (i, &v)| acc | (((v > 0.0) as u64) << i)))
                .collect();
            self.mix(words.into_iter());
        }
        let needs = self.needs(x);
        self.push(y, Op::Relu(x), needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        let needs = self.needs(x);
        self.push(y, Op::Sigmoid(x), needs)
    }

    /// Stride-1 cross-correlation with "same" zero padding.
    /// `x: [B, Cin, H, W]`, `k: [Cout, Cin, kh, kw]` (odd sizes), `b: [Cout]`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ks) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if xs.len() != 4 || ks.len() != 4 || ks[1] != xs[1] {
            return Err(mismatch("conv2d", format!("x {xs:?}, k {ks:?}")));
        }
        let geom = ConvGeom { c: xs[1], t: 1, h: xs[2], w: xs[3], kt: 1, kh: ks[2], kw: ks[3] };
        self.conv(x, k, b, geom, &[xs[0], ks[0], xs[2], xs[3]], "conv2d")
    }

    /// Spatiotemporal version of [`Graph::conv2d`].
    /// `x: [B, Cin, T, H, W]`, `k: [Cout, Cin, kt, kh, kw]`, `b: [Cout]`.
    pub fn conv3d(&mut self, x: Var, k: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ks) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if xs.len() != 5 || ks.len() != 5 || ks[1] != xs[1] {
            return Err(mismatch("conv3d", format!("x {xs:?}, k {ks:?}")));
        }
        let geom = ConvGeom { c: xs[1], t: xs[2], h: xs[3], w: xs[4], kt: ks[2], kh: ks[3], kw: ks[4] };
        self.conv(x, k, b, geom, &[xs[0], ks[0], xs[2], xs[3], xs[4]], "conv3d")
    }

    fn conv(
        &mut self,
        x: Var,
        k: Var,
        b: Option<Var>,
        geom: ConvGeom,
        out_shape: &[usize],
        op: &'static str,
    ) -> Result<Var> {
        let (batch, cout) = (out_shape[0], out_shape[1]);
        if geom.kt.is_multiple_of(2) || geom.kh.is_multiple_of(2) || geom.kw.is_multiple_of(2) {
            return Err(mismatch(op, "kernel sizes must be odd"));
        }
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(mismatch(op, format!("bias {:?} for {cout} output channels", self.shape(b))));
            }
        }
        let (rows, ncols) = (geom.rows(), geom.cols());
        let mut cols = vec![0.0; rows * ncols];
        let mut y = vec![0.0; batch * cout * ncols];
        let xd = self.value(x).data();
        let kd = self.value(k).data();
        for (n, yb) in y.chunks_mut(cout * ncols).enumerate() {
            geom.im2col(&xd[n * geom.sample_len()..(n + 1) * geom.sample_len()], &mut cols);
            gemm_nn(cout, rows, ncols, kd, &cols, 0.0, yb);
            if let Some(b) = b {
                for (row, &bv) in yb.chunks_mut(ncols).zip(self.value(b).data()) {
                    row.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        let needs = self.needs(x) || self.needs(k) || b.is_some_and(|b| self.needs(b));
        let value = Tensor::new(out_shape, y)?;
        Ok(self.push(value, Op::Conv { x, k, b, geom, batch, cout }, needs))
    }

    fn gather(&mut self, x: Var, shape: &[usize], src: Vec<u32>, kinky: bool) -> Result<Var> {
        if kinky {
            self.mix(src.iter().map(|&s| s as u64));
        }
        let xd = self.value(x).data();
        let y: Vec<f64> = src.iter().map(|&s| xd[s as usize]).collect();
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(shape, y)?, Op::Gather { x, src }, needs))
    }

    /// Max pooling over non-overlapping `factor × factor` windows of `[B, C, H, W]`.
    /// Odd sizes behave as if replication-padded; gradients go to the first argmax.
    pub fn maxpool2d(&mut self, x: Var, factor: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || factor == 0 {
            return Err(mismatch("maxpool2d", format!("x {xs:?}, factor {factor}")));
        }
        let (out, src) = window_argmax(self.value(x).data(), xs[0] * xs[1], [1, xs[2], xs[3]], [1, factor, factor]);
        self.gather(x, &[xs[0], xs[1], out[1], out[2]], src, true)
    }

    /// Max pooling of `[B, C, T, H, W]` over `(kt, kh, kw)` windows.
    pub fn maxpool3d(&mut self, x: Var, window: (usize, usize, usize)) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (kt, kh, kw) = window;
        if xs.len() != 5 || kt == 0 || kh == 0 || kw == 0 {
            return Err(mismatch("maxpool3d", format!("x {xs:?}, window {window:?}")));
        }
        let (out, src) = window_argmax(self.value(x).data(), xs[0] * xs[1], [xs[2], xs[3], xs[4]], [kt, kh, kw]);
        self.gather(x, &[xs[0], xs[1], out[0], out[1], out[2]], src, true)
    }

    /// Max over the whole time axis: `[B, C, T, H, W] -> [B, C, H, W]`.
    pub fn temporal_max(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 5 {
            return Err(mismatch("temporal_max", format!("x {xs:?}")));
        }
        let (_, src) = window_argmax(self.value(x).data(), xs[0] * xs[1], [xs[2], xs[3], xs[4]], [xs[2], 1, 1]);
        self.gather(x, &[xs[0], xs[1], xs[3], xs[4]], src, true)
    }

    /// Nearest-neighbour upsampling of `[B, C, H, W]` by an integer factor.
    pub fn upsample2d(&mut self, x: Var, factor: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || factor == 0 {
            return Err(mismatch("upsample2d", format!("x {xs:?}, factor {factor}")));
        }
        let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let (oh, ow) = (h * factor, w * factor);
        let mut src = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            for i in 0..oh {
                for j in 0..ow {
                    src.push((p * h * w + (i / factor) * w + j / factor) as u32);
                }
            }
        }
        self.gather(x, &[xs[0], xs[1], oh, ow], src, false)
    }

    /// Concatenation along axis 1 (channels); all other axes must agree.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (asz, bsz) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if asz.len() < 2 || asz.len() != bsz.len() || asz[0] != bsz[0] || asz[2..] != bsz[2..] {
            return Err(mismatch("concat_channels", format!("{asz:?} vs {bsz:?}")));
        }
        let batch = asz[0];
        let a_block = self.value(a).len() / batch;
        let b_block = self.value(b).len() / batch;
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut y = Vec::with_capacity(ad.len() + bd.len());
        for n in 0..batch {
            y.extend_from_slice(&ad[n * a_block..(n + 1) * a_block]);
            y.extend_from_slice(&bd[n * b_block..(n + 1) * b_block]);
        }
        let mut shape = asz.clone();
        shape[1] += bsz[1];
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(&shape, y)?, Op::Concat { a, b, batch, a_block, b_block }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        let needs = self.needs(x);
        Ok(self.push(y, Op::Reshape(x), needs))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let y = Tensor::new(self.shape(a), ad.iter().zip(bd).map(|(x, y)| x + y).collect())?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Add(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let y = Tensor::new(self.shape(a), ad.iter().zip(bd).map(|(x, y)| x * y).collect())?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let y = self.value(x).map(|v| v * c);
        let needs = self.needs(x);
        self.push(y, Op::Scale(x, c), needs)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), needs)
    }

    /// Mean of squared differences over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape("mse_loss", pred, target)?;
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let loss = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        let needs = self.needs(pred) || self.needs(target);
        Ok(self.push(Tensor::scalar(loss), Op::Mse { pred, target }, needs))
    }

    /// Reverse pass from a single-element `loss`. Returns gradients of every
    /// differentiable leaf recorded before `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_shape = self.shape(loss);
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_shape.to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            let mut acc = Accumulator { graph: self, grads: &mut grads };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Dense { x, w, b } => {
                    let (batch, fin) = (self.shape(*x)[0], self.shape(*x)[1]);
                    let fout = self.shape(*w)[0];
                    let wd = self.value(*w).data();
                    let xd = self.value(*x).data();
                    acc.with(*x, |dx| gemm_nn(batch, fout, fin, &g, wd, 1.0, dx));
                    acc.with(*w, |dw| gemm_tn(fout, batch, fin, &g, xd, 1.0, dw));
                    acc.with(*b, |db| {
                        for row in g.chunks(fout) {
                            db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                        }
                    });
                }
                Op::Relu(x) => {
                    let y = node.value.data();
                    acc.with(*x, |dx| {
                        for ((d, &gv), &yv) in dx.iter_mut().zip(&g).zip(y) {
                            if yv > 0.0 {
                                *d += gv;
                            }
                        }
                    });
                }
                Op::Sigmoid(x) => {
                    let y = node.value.data();
                    acc.with(*x, |dx| {
                        for ((d, &gv), &yv) in dx.iter_mut().zip(&g).zip(y) {
                            *d += gv * yv * (1.0 - yv);
                        }
                    });
                }
                Op::Conv { x, k, b, geom, batch, cout } => {
                    conv_backward(&mut acc, &g, *x, *k, *b, geom, *batch, *cout);
                }
                Op::Gather { x, src } => {
                    acc.with(*x, |dx| {
                        for (&s, &gv) in src.iter().zip(&g) {
                            dx[s as usize] += gv;
                        }
                    });
                }
                Op::Concat { a, b, batch, a_block, b_block } => {
                    let stride = a_block + b_block;
                    acc.with(*a, |da| {
                        for n in 0..*batch {
                            let from = &g[n * stride..n * stride + a_block];
                            da[n * a_block..(n + 1) * a_block].iter_mut().zip(from).for_each(|(d, v)| *d += v);
                        }
                    });
                    acc.with(*b, |db| {
                        for n in 0..*batch {
                            let from = &g[n * stride + a_block..(n + 1) * stride];
                            db[n * b_block..(n + 1) * b_block].iter_mut().zip(from).for_each(|(d, v)| *d += v);
                        }
                    });
                }
                Op::Reshape(x) => acc.with(*x, |dx| dx.iter_mut().zip(&g).for_each(|(d, v)| *d += v)),
                Op::Add(a, b) => {
                    acc.with(*a, |da| da.iter_mut().zip(&g).for_each(|(d, v)| *d += v));
                    acc.with(*b, |db| db.iter_mut().zip(&g).for_each(|(d, v)| *d += v));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    acc.with(*a, |da| {
                        for ((d, gv), o) in da.iter_mut().zip(&g).zip(bv) {
                            *d += gv * o;
                        }
                    });
                    acc.with(*b, |db| {
                        for ((d, gv), o) in db.iter_mut().zip(&g).zip(av) {
                            *d += gv * o;
                        }
                    });
                }
                Op::Scale(x, c) => acc.with(*x, |dx| dx.iter_mut().zip(&g).for_each(|(d, v)| *d += c * v)),
                Op::Sum(x) => acc.with(*x, |dx| dx.iter_mut().for_each(|d| *d += g[0])),
                Op::Mse { pred, target } => {
                    let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                    let scale = 2.0 * g[0] / p.len() as f64;
                    acc.with(*pred, |dp| {
                        for ((d, a), b) in dp.iter_mut().zip(p).zip(t) {
                            *d += scale * (a - b);
                        }
                    });
                    acc.with(*target, |dt| {
                        for ((d, a), b) in dt.iter_mut().zip(p).zip(t) {
                            *d -= scale * (a - b);
                        }
                    });
                }
            }
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|g| Tensor::new(self.nodes[i].value.shape(), g).expect("gradient shape")))
            .collect();
        Ok(Gradients { grads })
    }
}

struct Accumulator<'a> {
    graph: &'a Graph,
    grads: &'a mut Vec<Option<Vec<f64>>>,
}

impl Accumulator<'_> {
    /// Runs `f` on the (zero-initialised on first use) gradient buffer of `v`,
    /// skipping nodes that do not need a gradient.
    fn with(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.graph.needs(v) {
            return;
        }
        let len = self.graph.value(v).len();
        let buf = self.grads[v.0].get_or_insert_with(|| vec![0.0; len]);
        f(buf);
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    acc: &mut Accumulator<'_>,
    g: &[f64],
    x: Var,
    k: Var,
    b: Option<Var>,
    geom: &ConvGeom,
    batch: usize,
    cout: usize,
) {
    let graph = acc.graph;
    let (rows, ncols, slen) = (geom.rows(), geom.cols(), geom.sample_len());
    let xd = graph.value(x).data();
    let kd = graph.value(k).data();
    let mut cols = vec![0.0; rows * ncols];

    if let Some(b) = b {
        acc.with(b, |db| {
            for gb in g.chunks(cout * ncols) {
                for (d, row) in db.iter_mut().zip(gb.chunks(ncols)) {
                    *d += row.iter().sum::<f64>();
                }
            }
        });
    }
    if graph.needs(k) {
        acc.with(k, |dk| {
            for n in 0..batch {
                geom.im2col(&xd[n * slen..(n + 1) * slen], &mut cols);
                gemm_nt(cout, ncols, rows, &g[n * cout * ncols..(n + 1) * cout * ncols], &cols, 1.0, dk);
            }
        });
    }
    if graph.needs(x) {
        acc.with(x, |dx| {
            for n in 0..batch {
                gemm_tn(rows, cout, ncols, kd, &g[n * cout * ncols..(n + 1) * cout * ncols], 0.0, &mut cols);
                geom.col2im_add(&cols, &mut dx[n * slen..(n + 1) * slen]);
            }
        });
    }
}

/// Gradients of the differentiable leaves of a graph.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.0));
        let y = g.sigmoid(x);
        assert_eq!(g.value(y).item(), Some(0.5));
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), Some(0.25));
    }

    #[test]
    fn relu_values_and_kink_gradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[-1.0, 2.0, 0.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 2.0, 0.0]);
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn dense_identity() {
        let mut g = Graph::new();
        let x = g.input(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let w = g.param(eye);
        let b = g.param(Tensor::zeros(&[3]));
        let y = g.dense(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
        assert!(g.dense(x, b, w).is_err());
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_fn(&[1, 1, 4, 5], |i| i as f64 * 0.5));
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        let k = g.param(k);
        let y = g.conv2d(x, k, None).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
        assert_eq!(g.value(y).shape(), &[1, 1, 4, 5]);
    }

    #[test]
    fn ones_kernel_on_ones_input() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full(&[1, 1, 5, 5], 1.0));
        let k = g.param(Tensor::full(&[1, 1, 3, 3], 1.0));
        let y = g.conv2d(x, k, None).unwrap();
        let y = g.value(y).data();
        assert_eq!(y[2 * 5 + 2], 9.0);
        assert_eq!(y[0], 4.0);
        assert_eq!(y[2], 6.0);
    }

    #[test]
    fn conv3d_delta_kernel_is_identity() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_fn(&[2, 1, 3, 4, 4], |i| (i as f64).sin()));
        let mut k = Tensor::zeros(&[1, 1, 3, 3, 3]);
        k.data_mut()[13] = 1.0;
        let k = g.param(k);
        let y = g.conv3d(x, k, None).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn pooling_and_upsampling() {
        let mut g = Graph::new();
        let x = g.param(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let p = g.maxpool2d(x, 2).unwrap();
        assert_eq!(g.value(p).data(), &[4.0]);
        let u = g.upsample2d(p, 2).unwrap();
        assert_eq!(g.value(u).data(), &[4.0; 4]);
        let s = g.sum(u);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 0.0, 4.0]);

        let mut g = Graph::new();
        let c = g.input(Tensor::full(&[1, 2, 4, 6], 0.7));
        let p = g.maxpool2d(c, 2).unwrap();
        let u = g.upsample2d(p, 2).unwrap();
        assert_eq!(g.value(u), g.value(c));
    }

    #[test]
    fn odd_sizes_pool_like_replication_padding() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_fn(&[1, 1, 3, 5, 5], |i| i as f64));
        let p = g.maxpool3d(x, (2, 2, 2)).unwrap();
        assert_eq!(g.value(p).shape(), &[1, 1, 2, 3, 3]);
        // last window in every axis holds a single element
        assert_eq!(*g.value(p).data().last().unwrap(), 74.0);
        let m = g.temporal_max(x).unwrap();
        assert_eq!(g.value(m).shape(), &[1, 1, 5, 5]);
        assert_eq!(g.value(m).data()[0], 50.0);
    }

    #[test]
    fn mse_values_and_gradient() {
        let n = 8;
        let mut g = Graph::new();
        let p = g.param(Tensor::zeros(&[n]));
        let tgt = g.input(Tensor::full(&[n], 1.0));
        let l = g.mse_loss(p, tgt).unwrap();
        assert_eq!(g.value(l).item(), Some(1.0));
        let grads = g.backward(l).unwrap();
        for &d in grads.get(p).unwrap().data() {
            assert!((d + 2.0 / n as f64).abs() < 1e-15);
        }

        let mut g = Graph::new();
        let p = g.param(Tensor::full(&[3], 0.3));
        let q = g.input(Tensor::full(&[3], 0.3));
        let l = g.mse_loss(p, q).unwrap();
        assert_eq!(g.value(l).item(), Some(0.0));
        let grads = g.backward(l).unwrap();
        assert!(grads.get(p).unwrap().data().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        // f(x) = sum(x * x + x) -> df/dx = 2x + 1
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[1.0, -2.0, 0.5]));
        let sq = g.mul(x, x).unwrap();
        let y = g.add(sq, x).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, -3.0, 2.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full(&[1, 1, 4, 4], 1.0));
        let k = g.param(Tensor::full(&[2, 1, 3, 3], 0.1));
        let y = g.conv2d(x, k, None).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(x).is_none());
        assert!(grads.get(k).is_some());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn concat_then_split_gradients() {
        let mut g = Graph::new();
        let a = g.param(Tensor::full(&[2, 1, 2, 2], 1.0));
        let b = g.param(Tensor::full(&[2, 2, 2, 2], 2.0));
        let c = g.concat_channels(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 3, 2, 2]);
        assert_eq!(&g.value(c).data()[..6], &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0]);
        let w = g.input(Tensor::from_fn(&[2, 3, 2, 2], |i| i as f64));
        let m = g.mul(c, w).unwrap();
        let s = g.sum(m);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[0.0, 1.0, 2.0, 3.0, 12.0, 13.0, 14.0, 15.0]);
        assert_eq!(grads.get(b).unwrap().data()[..4], [4.0, 5.0, 6.0, 7.0]);
    }
}
