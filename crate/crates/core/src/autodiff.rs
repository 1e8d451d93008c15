//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its output value and the handles of
//! its inputs. [`Tape::backward`] walks the nodes in reverse and returns a fresh
//! [`Gradients`] table; the tape itself is never mutated by the reverse pass, so
//! replaying it yields bit-identical gradients.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, geom: ConvGeom },
    Depthwise { x: Var, w: Var, geom: ConvGeom },
    ConvTranspose { x: Var, w: Var },
    LinearChannels { x: Var, w: Var, b: Option<Var> },
    Relu(Var),
    Gelu(Var),
    Sqrt(Var),
    Abs(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    SumAxes(Var),
    AvgPool(Var, usize),
    PadReplicate(Var),
    ConcatChannels(Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of the forward computation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar root with respect to every node that requires them.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of `shape` when `v` did not influence the root.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A value that gradients flow into.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A value treated as a constant.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        let geom = kernels::conv_geom(self.value(x), self.value(w), stride, padding)?;
        let out = kernels::conv2d_forward(self.value(x), self.value(w), &geom);
        let rg = self.any_grad(&[x, w]);
        Ok(self.push(out, Op::Conv2d { x, w, geom }, rg))
    }

    pub fn depthwise_conv2d(&mut self, x: Var, w: Var, padding: usize) -> Result<Var> {
        let geom = kernels::depthwise_geom(self.value(x), self.value(w), padding)?;
        let out = kernels::depthwise_forward(self.value(x), self.value(w), &geom);
        let rg = self.any_grad(&[x, w]);
        Ok(self.push(out, Op::Depthwise { x, w, geom }, rg))
    }

    /// 2x2 kernel, stride 2, no padding.
    pub fn conv_transpose2x2(&mut self, x: Var, w: Var) -> Result<Var> {
        kernels::conv_transpose_check(self.value(x), self.value(w))?;
        let out = kernels::conv_transpose_forward(self.value(x), self.value(w));
        let rg = self.any_grad(&[x, w]);
        Ok(self.push(out, Op::ConvTranspose { x, w }, rg))
    }

    /// Per-pixel channel mixing with an optional bias, i.e. a 1x1 convolution.
    pub fn linear_channels(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        kernels::linear_channels_check(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        let out = kernels::linear_channels_forward(self.value(x), self.value(w), b.map(|b| self.value(b)));
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.any_grad(&deps);
        Ok(self.push(out, Op::LinearChannels { x, w, b }, rg))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(x).map(f);
        let rg = self.any_grad(&[x]);
        self.push(out, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Gelu(x), kernels::gelu)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sqrt(x), f64::sqrt)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Op::Abs(x), f64::abs)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, Op::Scale(x, s), |v| v * s)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = kernels::broadcast_shape(ta.shape(), tb.shape())?;
        let mut out = vec![0.0; shape.iter().product()];
        let (da, db) = (ta.data(), tb.data());
        kernels::for_each_broadcast(ta.shape(), tb.shape(), &shape, |k, ia, ib| {
            out[k] = f(da[ia], db[ib]);
        });
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(&shape, out)?, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    /// Sum over `axes`, keeping them as extent-1 dimensions.
    pub fn sum_axes(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let out = kernels::sum_axes(self.value(x), axes)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::SumAxes(x), rg))
    }

    pub fn mean_axes(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let count: usize = axes.iter().map(|&a| self.value(x).shape().get(a).copied().unwrap_or(0)).product();
        let s = self.sum_axes(x, axes)?;
        Ok(self.scale(s, 1.0 / count as f64))
    }

    /// Sum of all elements as a single-element tensor of the same rank.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.value(x).rank()).collect();
        self.sum_axes(x, &axes)
    }

    /// Population mean and variance along `axes`.
    pub fn moments(&mut self, x: Var, axes: &[usize]) -> Result<(Var, Var)> {
        let mean = self.mean_axes(x, axes)?;
        let centered = self.sub(x, mean)?;
        let sq = self.mul(centered, centered)?;
        let var = self.mean_axes(sq, axes)?;
        Ok((mean, var))
    }

    pub fn avg_pool(&mut self, x: Var, factor: usize) -> Result<Var> {
        let out = kernels::avg_pool_forward(self.value(x), factor)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::AvgPool(x, factor), rg))
    }

    pub fn pad_replicate(&mut self, x: Var) -> Result<Var> {
        let out = kernels::pad_replicate_forward(self.value(x))?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::PadReplicate(x), rg))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_channels(&tensors)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatChannels(parts.to_vec()), rg))
    }

    /// Horizontal and vertical 3x3 Sobel responses of a single-channel map, replicate padding.
    pub fn sobel_grad(&mut self, x: Var) -> Result<(Var, Var)> {
        let [_, c, _, _] = self.value(x).dims4()?;
        if c != 1 {
            return Err(Error::Shape(format!("sobel expects one channel, got {c}")));
        }
        let padded = self.pad_replicate(x)?;
        let kx = Tensor::new(&[1, 1, 3, 3], vec![-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0])?;
        let ky = Tensor::new(&[1, 1, 3, 3], vec![-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0])?;
        let kx = self.constant(kx);
        let ky = self.constant(ky);
        let gx = self.conv2d(padded, kx, 1, 0)?;
        let gy = self.conv2d(padded, ky, 1, 0)?;
        Ok((gx, gy))
    }

    /// Mean over non-overlapping `2^k x 2^k` blocks, `k` in `0..=3`.
    pub fn avg_downsample(&mut self, x: Var, k: u32) -> Result<Var> {
        if k > 3 {
            return Err(Error::InvalidArgument(format!("downsample level {k} outside 0..=3")));
        }
        if k == 0 {
            self.value(x).dims4()?;
            return Ok(x);
        }
        self.avg_pool(x, 1 << k)
    }

    /// Reverse pass from a single-element root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_val = self.value(root);
        if root_val.numel() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar root, got shape {:?}",
                root_val.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::ones(root_val.shape()));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, d: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign_scaled(&d, 1.0),
                slot @ None => *slot = Some(d),
            }
        };
        match op {
            Op::Leaf => {}
            Op::Conv2d { x, w, geom } => {
                let (dx, dw) = kernels::conv2d_backward(self.value(*x), self.value(*w), g, geom);
                acc(*x, dx);
                acc(*w, dw);
            }
            Op::Depthwise { x, w, geom } => {
                let (dx, dw) = kernels::depthwise_backward(self.value(*x), self.value(*w), g, geom);
                acc(*x, dx);
                acc(*w, dw);
            }
            Op::ConvTranspose { x, w } => {
                let (dx, dw) = kernels::conv_transpose_backward(self.value(*x), self.value(*w), g);
                acc(*x, dx);
                acc(*w, dw);
            }
            Op::LinearChannels { x, w, b } => {
                let (dx, dw, db) = kernels::linear_channels_backward(self.value(*x), self.value(*w), g);
                acc(*x, dx);
                acc(*w, dw);
                if let Some(b) = b {
                    acc(*b, db);
                }
            }
            Op::Relu(x) => {
                let d = self.value(*x).zip_map(g, |v, gv| if v > 0.0 { gv } else { 0.0 });
                acc(*x, d.expect("same shape"));
            }
            Op::Gelu(x) => {
                let d = self.value(*x).zip_map(g, |v, gv| gv * kernels::gelu_grad(v));
                acc(*x, d.expect("same shape"));
            }
            Op::Sqrt(x) => {
                // subgradient 0 at sqrt(0)
                let d = out.zip_map(g, |y, gv| if y > 0.0 { 0.5 * gv / y } else { 0.0 });
                acc(*x, d.expect("same shape"));
            }
            Op::Abs(x) => {
                let d = self.value(*x).zip_map(g, |v, gv| gv * sign(v));
                acc(*x, d.expect("same shape"));
            }
            Op::Scale(x, s) => acc(*x, g.scale(*s)),
            Op::AddScalar(x) => acc(*x, g.clone()),
            Op::Add(a, b) => {
                acc(*a, kernels::reduce_to(g, self.value(*a).shape()));
                acc(*b, kernels::reduce_to(g, self.value(*b).shape()));
            }
            Op::Sub(a, b) => {
                acc(*a, kernels::reduce_to(g, self.value(*a).shape()));
                acc(*b, kernels::reduce_to(g, self.value(*b).shape()).scale(-1.0));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (ga, gb) = broadcast_grads(ta, tb, g, |_, y, gv| gv * y, |x, _, gv| gv * x);
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::Div(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (ga, gb) =
                    broadcast_grads(ta, tb, g, |_, y, gv| gv / y, |x, y, gv| -gv * x / (y * y));
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::SumAxes(x) => acc(*x, kernels::expand_to(g, self.value(*x).shape())),
            Op::AvgPool(x, f) => acc(*x, kernels::avg_pool_backward(self.value(*x).shape(), g, *f)),
            Op::PadReplicate(x) => acc(*x, kernels::pad_replicate_backward(self.value(*x).shape(), g)),
            Op::ConcatChannels(parts) => {
                let [n, c_total, h, w] = g.dims4().expect("concat output is rank 4");
                let plane = h * w;
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).shape()[1];
                    let mut d = Vec::with_capacity(n * pc * plane);
                    for b in 0..n {
                        let start = (b * c_total + offset) * plane;
                        d.extend_from_slice(&g.data()[start..start + pc * plane]);
                    }
                    acc(p, Tensor::new(self.value(p).shape(), d).expect("concat grad shape"));
                    offset += pc;
                }
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn broadcast_grads(
    a: &Tensor,
    b: &Tensor,
    g: &Tensor,
    fa: impl Fn(f64, f64, f64) -> f64,
    fb: impl Fn(f64, f64, f64) -> f64,
) -> (Tensor, Tensor) {
    let mut ga = vec![0.0; a.numel()];
    let mut gb = vec![0.0; b.numel()];
    let (ad, bd, gd) = (a.data(), b.data(), g.data());
    kernels::for_each_broadcast(a.shape(), b.shape(), g.shape(), |k, ia, ib| {
        ga[ia] += fa(ad[ia], bd[ib], gd[k]);
        gb[ib] += fb(ad[ia], bd[ib], gd[k]);
    });
    (
        Tensor::new(a.shape(), ga).expect("grad shape"),
        Tensor::new(b.shape(), gb).expect("grad shape"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::assert_close;

    mod approx_eq {
        pub fn assert_close(a: &[f64], b: &[f64], tol: f64) {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= tol, "{x} vs {y}");
            }
        }
    }

    fn t4(shape: [usize; 4], data: Vec<f64>) -> Tensor {
        Tensor::new(&shape, data).unwrap()
    }

    #[test]
    fn conv_identity_kernel() {
        let mut tape = Tape::new();
        let xv = Tensor::from_fn(&[1, 1, 3, 4], |i| i as f64 - 3.0);
        let x = tape.constant(xv.clone());
        let w = tape.constant(Tensor::ones(&[1, 1, 1, 1]));
        let y = tape.conv2d(x, w, 1, 0).unwrap();
        assert_eq!(tape.value(y), &xv);
    }

    #[test]
    fn conv_zero_input_gives_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 3, 5, 5]));
        let w = tape.constant(Tensor::from_fn(&[4, 3, 3, 3], |i| (i as f64).sin()));
        let y = tape.conv2d(x, w, 1, 1).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_overlap_counts() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[1, 1, 3, 3]));
        let w = tape.constant(Tensor::ones(&[1, 1, 3, 3]));
        let y = tape.conv2d(x, w, 1, 1).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn conv_rejects_bad_geometry() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[1, 2, 5, 5]));
        let w = tape.constant(Tensor::ones(&[1, 3, 3, 3]));
        assert!(matches!(tape.conv2d(x, w, 1, 1), Err(Error::Shape(_))));
        let w = tape.constant(Tensor::ones(&[1, 2, 2, 2]));
        // (5 - 2) / 2 is not an integer
        assert!(matches!(tape.conv2d(x, w, 2, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn depthwise_cases() {
        let mut tape = Tape::new();
        let xv = Tensor::from_fn(&[1, 2, 9, 9], |i| (i as f64 * 0.37).cos());
        let x = tape.constant(xv.clone());
        let mut delta = Tensor::zeros(&[2, 1, 7, 7]);
        delta.data_mut()[24] = 1.0;
        delta.data_mut()[49 + 24] = 1.0;
        let wd = tape.constant(delta);
        let y = tape.depthwise_conv2d(x, wd, 3).unwrap();
        assert_eq!(tape.value(y), &xv);

        let c = tape.constant(Tensor::full(&[1, 1, 9, 9], 1.5));
        let ones = tape.constant(Tensor::ones(&[1, 1, 7, 7]));
        let y = tape.depthwise_conv2d(c, ones, 3).unwrap();
        // centre pixel sees the full 7x7 window
        assert_eq!(tape.value(y).data()[4 * 9 + 4], 49.0 * 1.5);

        let even = tape.constant(Tensor::ones(&[1, 1, 4, 4]));
        assert!(matches!(tape.depthwise_conv2d(c, even, 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn transposed_conv_scatter() {
        let mut tape = Tape::new();
        let x = tape.constant(t4([1, 1, 1, 1], vec![2.5]));
        let k = t4([1, 1, 2, 2], vec![1.0, -2.0, 3.0, 0.5]);
        let w = tape.constant(k.clone());
        let y = tape.conv_transpose2x2(x, w).unwrap();
        assert_eq!(tape.value(y).data(), k.scale(2.5).data());

        let c = tape.constant(Tensor::full(&[1, 1, 3, 2], 0.75));
        let ones = tape.constant(Tensor::ones(&[1, 1, 2, 2]));
        let y = tape.conv_transpose2x2(c, ones).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 1, 6, 4]);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn linear_channels_cases() {
        let mut tape = Tape::new();
        let x = tape.constant(t4([1, 2, 1, 1], vec![3.0, 4.0]));
        let w = tape.constant(Tensor::new(&[2, 2], vec![1.0, 1.0, 1.0, -1.0]).unwrap());
        let y = tape.linear_channels(x, w, None).unwrap();
        assert_eq!(tape.value(y).data(), &[7.0, -1.0]);

        let zero = tape.constant(Tensor::zeros(&[2, 2]));
        let b = tape.constant(Tensor::new(&[2], vec![0.25, -1.0]).unwrap());
        let y = tape.linear_channels(x, zero, Some(b)).unwrap();
        assert_eq!(tape.value(y).data(), &[0.25, -1.0]);

        let bad = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(tape.linear_channels(x, bad, None).is_err());
    }

    #[test]
    fn activations() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
        let g = tape.gelu(x);
        assert_eq!(tape.value(g).data()[1], 0.0);
        let one = tape.constant(Tensor::scalar(1.0));
        let g1 = tape.gelu(one);
        assert!((tape.value(g1).item().unwrap() - 0.8412).abs() < 1e-3);
    }

    #[test]
    fn moments_population_variance() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let (m, v) = tape.moments(x, &[0]).unwrap();
        assert_close(tape.value(m).data(), &[2.0], 1e-15);
        assert_close(tape.value(v).data(), &[2.0 / 3.0], 1e-15);

        let c = tape.constant(Tensor::full(&[2, 3, 4, 4], 1.75));
        let (_, v) = tape.moments(c, &[1]).unwrap();
        assert!(tape.value(v).data().iter().all(|&x| x == 0.0));
        assert!(matches!(tape.moments(c, &[]), Err(Error::EmptyReduction(_))));
    }

    #[test]
    fn avg_pool_cases() {
        let mut tape = Tape::new();
        let x = tape.constant(t4([1, 1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]));
        let y = tape.avg_pool(x, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0]);
        let y1 = tape.avg_pool(x, 1).unwrap();
        assert_eq!(tape.value(y1), tape.value(x));
        let odd = tape.constant(Tensor::ones(&[1, 1, 3, 4]));
        assert!(tape.avg_pool(odd, 2).is_err());
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::ones(&[2]));
        assert!(matches!(tape.backward(x), Err(Error::Shape(_))));
    }

    #[test]
    fn linear_loss_gradient_is_input() {
        let mut tape = Tape::new();
        let xv = Tensor::from_fn(&[1, 1, 2, 3], |i| i as f64 * 0.5 - 1.0);
        let w = tape.param(Tensor::from_fn(&[1, 1, 2, 3], |i| i as f64));
        let x = tape.constant(xv.clone());
        let p = tape.mul(w, x).unwrap();
        let loss = tape.sum_all(p).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &xv);
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn relu_gradient_is_indicator_and_replay_is_identical() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(&[4], vec![-1.0, 0.5, 2.0, -0.1]).unwrap());
        let r = tape.relu(x);
        let loss = tape.sum_all(r).unwrap();
        let g1 = tape.backward(loss).unwrap();
        let g2 = tape.backward(loss).unwrap();
        assert_eq!(g1.get(x).unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(g1.get(x).unwrap()), bits(g2.get(x).unwrap()));
    }

    #[test]
    fn broadcast_gradients_reduce() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::from_fn(&[1, 2, 2, 2], |i| i as f64 + 1.0));
        let b = tape.param(Tensor::new(&[1, 1, 2, 2], vec![2.0, 4.0, 5.0, 10.0]).unwrap());
        let q = tape.div(a, b).unwrap();
        let loss = tape.sum_all(q).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_close(g.get(a).unwrap().data(), &[0.5, 0.25, 0.2, 0.1, 0.5, 0.25, 0.2, 0.1], 1e-15);
        // d/db sum_c a_c / b = -(a_0 + a_1) / b^2
        let expect: Vec<f64> = [(1.0 + 5.0, 2.0), (2.0 + 6.0, 4.0), (3.0 + 7.0, 5.0), (4.0 + 8.0, 10.0)]
            .iter()
            .map(|(s, d): &(f64, f64)| -s / (d * d))
            .collect();
        assert_close(g.get(b).unwrap().data(), &expect, 1e-15);
    }
}
