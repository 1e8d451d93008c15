//! Raw forward/backward kernels over plain tensors. The tape in
//! [`crate::autodiff`] composes these; nothing here tracks gradients.

use crate::error::{Error, Result};
use crate::tensor::{strides, Tensor};

fn out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::Shape(format!(
            "kernel {kernel} larger than padded extent {padded}"
        )));
    }
    if !(padded - kernel).is_multiple_of(stride) {
        return Err(Error::Shape(format!(
            "extent {input} with kernel {kernel}, stride {stride}, padding {padding} gives a non-integer output size"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub ho: usize,
    pub wo: usize,
    pub stride: usize,
    pub padding: usize,
}

pub(crate) fn conv_geom(x: &Tensor, weight: &Tensor, stride: usize, padding: usize) -> Result<ConvGeom> {
    let [n, cin, h, w] = x.dims4()?;
    let [cout, wcin, kh, kw] = weight.dims4()?;
    if wcin != cin {
        return Err(Error::Shape(format!(
            "conv weight expects {wcin} input channels, input has {cin}"
        )));
    }
    if kh == 0 || kw == 0 || stride == 0 {
        return Err(Error::InvalidArgument("kernel extents and stride must be >= 1".into()));
    }
    let ho = out_extent(h, kh, stride, padding)?;
    let wo = out_extent(w, kw, stride, padding)?;
    Ok(ConvGeom { n, cin, h, w, cout, kh, kw, ho, wo, stride, padding })
}

/// Calls `f(out_index, in_index)` for every valid (output, input) pair along one axis
/// for kernel tap `k`.
#[inline]
fn tap_range(out_len: usize, in_len: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    // valid o: 0 <= o*stride + k - padding < in_len
    let lo = if k >= padding { 0 } else { (padding - k).div_ceil(stride) };
    let hi = if in_len + padding > k {
        ((in_len + padding - k - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Row-major view of a matrix inside a slice: `rows x cols` with the given strides.
#[derive(Clone, Copy)]
struct Mat {
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl Mat {
    fn row_major(rows: usize, cols: usize) -> Self {
        Self { rows, cols, rs: cols, cs: 1 }
    }

    fn t(self) -> Self {
        Self { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn last(self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs
        }
    }
}

/// `c = a * b + beta * c`.
fn gemm(a: &[f64], am: Mat, b: &[f64], bm: Mat, beta: f64, c: &mut [f64], cm: Mat) {
    assert!(am.cols == bm.rows && am.rows == cm.rows && bm.cols == cm.cols, "gemm dimensions");
    if cm.rows == 0 || cm.cols == 0 {
        return;
    }
    if am.cols == 0 {
        for i in 0..cm.rows {
            for j in 0..cm.cols {
                c[i * cm.rs + j * cm.cs] *= beta;
            }
        }
        return;
    }
    assert!(am.last() < a.len() && bm.last() < b.len() && cm.last() < c.len(), "gemm bounds");
    // SAFETY: every index reachable from the shapes and strides was bounds-checked above.
    unsafe {
        matrixmultiply::dgemm(
            am.rows,
            am.cols,
            bm.cols,
            1.0,
            a.as_ptr(),
            am.rs as isize,
            am.cs as isize,
            b.as_ptr(),
            bm.rs as isize,
            bm.cs as isize,
            beta,
            c.as_mut_ptr(),
            cm.rs as isize,
            cm.cs as isize,
        );
    }
}

/// Unfold one batch element into `[cin*kh*kw, ho*wo]` columns.
fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let p = g.ho * g.wo;
    cols.fill(0.0);
    for ci in 0..g.cin {
        let xbase = ci * g.h * g.w;
        for ki in 0..g.kh {
            let (oh0, oh1) = tap_range(g.ho, g.h, ki, g.stride, g.padding);
            for kj in 0..g.kw {
                let (ow0, ow1) = tap_range(g.wo, g.w, kj, g.stride, g.padding);
                let row = ((ci * g.kh + ki) * g.kw + kj) * p;
                for oh in oh0..oh1 {
                    let ih = oh * g.stride + ki - g.padding;
                    for ow in ow0..ow1 {
                        cols[row + oh * g.wo + ow] = x[xbase + ih * g.w + ow * g.stride + kj - g.padding];
                    }
                }
            }
        }
    }
}

/// Scatter-add columns back onto one batch element.
fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let p = g.ho * g.wo;
    for ci in 0..g.cin {
        let xbase = ci * g.h * g.w;
        for ki in 0..g.kh {
            let (oh0, oh1) = tap_range(g.ho, g.h, ki, g.stride, g.padding);
            for kj in 0..g.kw {
                let (ow0, ow1) = tap_range(g.wo, g.w, kj, g.stride, g.padding);
                let row = ((ci * g.kh + ki) * g.kw + kj) * p;
                for oh in oh0..oh1 {
                    let ih = oh * g.stride + ki - g.padding;
                    for ow in ow0..ow1 {
                        dx[xbase + ih * g.w + ow * g.stride + kj - g.padding] += cols[row + oh * g.wo + ow];
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(x: &Tensor, weight: &Tensor, g: &ConvGeom) -> Tensor {
    let (p, k) = (g.ho * g.wo, g.cin * g.kh * g.kw);
    let mut out = vec![0.0; g.n * g.cout * p];
    let mut cols = vec![0.0; k * p];
    let in_len = g.cin * g.h * g.w;
    for b in 0..g.n {
        im2col(&x.data()[b * in_len..(b + 1) * in_len], g, &mut cols);
        let o = &mut out[b * g.cout * p..(b + 1) * g.cout * p];
        gemm(weight.data(), Mat::row_major(g.cout, k), &cols, Mat::row_major(k, p), 0.0, o, Mat::row_major(g.cout, p));
    }
    Tensor::new(&[g.n, g.cout, g.ho, g.wo], out).expect("conv output shape")
}

pub(crate) fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    dout: &Tensor,
    g: &ConvGeom,
) -> (Tensor, Tensor) {
    let (p, k) = (g.ho * g.wo, g.cin * g.kh * g.kw);
    let in_len = g.cin * g.h * g.w;
    let mut dx = vec![0.0; x.numel()];
    let mut dw = vec![0.0; weight.numel()];
    let mut cols = vec![0.0; k * p];
    let mut dcols = vec![0.0; k * p];
    let wm = Mat::row_major(g.cout, k);
    let gm = Mat::row_major(g.cout, p);
    for b in 0..g.n {
        let gb = &dout.data()[b * g.cout * p..(b + 1) * g.cout * p];
        im2col(&x.data()[b * in_len..(b + 1) * in_len], g, &mut cols);
        gemm(gb, gm, &cols, Mat::row_major(k, p).t(), 1.0, &mut dw, wm);
        gemm(weight.data(), wm.t(), gb, gm, 0.0, &mut dcols, Mat::row_major(k, p));
        col2im(&dcols, g, &mut dx[b * in_len..(b + 1) * in_len]);
    }
    (
        Tensor::new(x.shape(), dx).expect("dx shape"),
        Tensor::new(weight.shape(), dw).expect("dw shape"),
    )
}


pub(crate) fn depthwise_geom(x: &Tensor, weight: &Tensor, padding: usize) -> Result<ConvGeom> {
    let [n, c, h, w] = x.dims4()?;
    let [wc, one, kh, kw] = weight.dims4()?;
    if wc != c || one != 1 {
        return Err(Error::Shape(format!(
            "depthwise weight {:?} does not match {c} channels",
            weight.shape()
        )));
    }
    if kh != kw {
        return Err(Error::Shape("depthwise kernel must be square".into()));
    }
    if kh % 2 == 0 {
        return Err(Error::InvalidArgument(format!("depthwise kernel size {kh} must be odd")));
    }
    if padding != (kh - 1) / 2 {
        return Err(Error::InvalidArgument(format!(
            "depthwise padding must be {} for kernel {kh}",
            (kh - 1) / 2
        )));
    }
    Ok(ConvGeom { n, cin: c, h, w, cout: c, kh, kw, ho: h, wo: w, stride: 1, padding })
}

pub(crate) fn depthwise_forward(x: &Tensor, weight: &Tensor, g: &ConvGeom) -> Tensor {
    let mut out = vec![0.0; x.numel()];
    let xd = x.data();
    let wd = weight.data();
    let plane = g.h * g.w;
    for b in 0..g.n {
        for c in 0..g.cin {
            let base = (b * g.cin + c) * plane;
            for ki in 0..g.kh {
                let (oh0, oh1) = tap_range(g.ho, g.h, ki, 1, g.padding);
                for kj in 0..g.kw {
                    let wv = wd[(c * g.kh + ki) * g.kw + kj];
                    let (ow0, ow1) = tap_range(g.wo, g.w, kj, 1, g.padding);
                    if ow1 <= ow0 || oh1 <= oh0 {
                        continue;
                    }
                    let len = ow1 - ow0;
                    for oh in oh0..oh1 {
                        let ih = oh + ki - g.padding;
                        let src = base + ih * g.w + ow0 + kj - g.padding;
                        let dst = base + oh * g.wo + ow0;
                        for (o, &v) in out[dst..dst + len].iter_mut().zip(&xd[src..src + len]) {
                            *o += wv * v;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(x.shape(), out).expect("depthwise output shape")
}

pub(crate) fn depthwise_backward(
    x: &Tensor,
    weight: &Tensor,
    dout: &Tensor,
    g: &ConvGeom,
) -> (Tensor, Tensor) {
    let mut dx = vec![0.0; x.numel()];
    let mut dw = vec![0.0; weight.numel()];
    let xd = x.data();
    let wd = weight.data();
    let gd = dout.data();
    let plane = g.h * g.w;
    for b in 0..g.n {
        for c in 0..g.cin {
            let base = (b * g.cin + c) * plane;
            for ki in 0..g.kh {
                let (oh0, oh1) = tap_range(g.ho, g.h, ki, 1, g.padding);
                for kj in 0..g.kw {
                    let widx = (c * g.kh + ki) * g.kw + kj;
                    let wv = wd[widx];
                    let (ow0, ow1) = tap_range(g.wo, g.w, kj, 1, g.padding);
                    let mut acc = 0.0;
                    if ow1 <= ow0 || oh1 <= oh0 {
                        continue;
                    }
                    let len = ow1 - ow0;
                    for oh in oh0..oh1 {
                        let ih = oh + ki - g.padding;
                        let src = base + ih * g.w + ow0 + kj - g.padding;
                        let go = &gd[base + oh * g.wo + ow0..base + oh * g.wo + ow0 + len];
                        let xs = &xd[src..src + len];
                        acc += go.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                        for (d, &gv) in dx[src..src + len].iter_mut().zip(go) {
                            *d += wv * gv;
                        }
                    }
                    dw[widx] += acc;
                }
            }
        }
    }
    (
        Tensor::new(x.shape(), dx).expect("dx shape"),
        Tensor::new(weight.shape(), dw).expect("dw shape"),
    )
}

pub(crate) fn conv_transpose_check(x: &Tensor, weight: &Tensor) -> Result<([usize; 4], usize)> {
    let dims = x.dims4()?;
    let [wcin, cout, kh, kw] = weight.dims4()?;
    if wcin != dims[1] {
        return Err(Error::Shape(format!(
            "transposed conv weight expects {wcin} input channels, input has {}",
            dims[1]
        )));
    }
    if (kh, kw) != (2, 2) {
        return Err(Error::Shape(format!("transposed conv kernel must be 2x2, got {kh}x{kw}")));
    }
    Ok((dims, cout))
}

/// Stride-2, 2x2 transposed convolution: every input pixel scatters into its own output tile.
pub(crate) fn conv_transpose_forward(x: &Tensor, weight: &Tensor) -> Tensor {
    let ([n, cin, h, w], cout) = conv_transpose_check(x, weight).expect("checked by caller");
    let (ho, wo, p) = (2 * h, 2 * w, h * w);
    let mut out = vec![0.0; n * cout * ho * wo];
    // taps[co*4 + t, pixel] = sum_ci w[ci, co, t] * x[ci, pixel]
    let mut taps = vec![0.0; cout * 4 * p];
    let wm = Mat::row_major(cin, cout * 4);
    for b in 0..n {
        let xb = &x.data()[b * cin * p..(b + 1) * cin * p];
        gemm(weight.data(), wm.t(), xb, Mat::row_major(cin, p), 0.0, &mut taps, Mat::row_major(cout * 4, p));
        for co in 0..cout {
            let ob = &mut out[(b * cout + co) * ho * wo..(b * cout + co + 1) * ho * wo];
            for t in 0..4 {
                let (di, dj) = (t / 2, t % 2);
                let src = &taps[(co * 4 + t) * p..(co * 4 + t + 1) * p];
                for i in 0..h {
                    let row = &mut ob[(2 * i + di) * wo..(2 * i + di + 1) * wo];
                    for (j, &v) in src[i * w..(i + 1) * w].iter().enumerate() {
                        row[2 * j + dj] = v;
                    }
                }
            }
        }
    }
    Tensor::new(&[n, cout, ho, wo], out).expect("transposed conv output shape")
}

pub(crate) fn conv_transpose_backward(x: &Tensor, weight: &Tensor, dout: &Tensor) -> (Tensor, Tensor) {
    let ([n, cin, h, w], cout) = conv_transpose_check(x, weight).expect("checked by caller");
    let (ho, wo, p) = (2 * h, 2 * w, h * w);
    let mut dx = vec![0.0; x.numel()];
    let mut dw = vec![0.0; weight.numel()];
    let mut taps = vec![0.0; cout * 4 * p];
    let wm = Mat::row_major(cin, cout * 4);
    let tm = Mat::row_major(cout * 4, p);
    let xm = Mat::row_major(cin, p);
    for b in 0..n {
        for co in 0..cout {
            let gb = &dout.data()[(b * cout + co) * ho * wo..(b * cout + co + 1) * ho * wo];
            for t in 0..4 {
                let (di, dj) = (t / 2, t % 2);
                let dst = &mut taps[(co * 4 + t) * p..(co * 4 + t + 1) * p];
                for i in 0..h {
                    let row = &gb[(2 * i + di) * wo..(2 * i + di + 1) * wo];
                    for (j, d) in dst[i * w..(i + 1) * w].iter_mut().enumerate() {
                        *d = row[2 * j + dj];
                    }
                }
            }
        }
        let xb = &x.data()[b * cin * p..(b + 1) * cin * p];
        gemm(xb, xm, &taps, tm.t(), 1.0, &mut dw, wm);
        gemm(weight.data(), wm, &taps, tm, 0.0, &mut dx[b * cin * p..(b + 1) * cin * p], xm);
    }
    (
        Tensor::new(x.shape(), dx).expect("dx shape"),
        Tensor::new(weight.shape(), dw).expect("dw shape"),
    )
}

pub(crate) fn linear_channels_check(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<()> {
    let [_, c, _, _] = x.dims4()?;
    match weight.shape() {
        [_, wc] if *wc == c => {}
        s => {
            return Err(Error::Shape(format!(
                "channel mixing weight {s:?} does not accept {c} channels"
            )))
        }
    }
    if let Some(b) = bias {
        if b.shape() != [weight.shape()[0]] {
            return Err(Error::Shape(format!(
                "bias {:?} does not match {} output channels",
                b.shape(),
                weight.shape()[0]
            )));
        }
    }
    Ok(())
}

/// Per-pixel matrix-vector product over the channel axis.
pub(crate) fn linear_channels_forward(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Tensor {
    let [n, c, h, w] = x.dims4().expect("checked by caller");
    let cout = weight.shape()[0];
    let plane = h * w;
    let mut out = vec![0.0; n * cout * plane];
    for b in 0..n {
        let o = &mut out[b * cout * plane..(b + 1) * cout * plane];
        let beta = match bias {
            Some(bias) => {
                for (row, &bv) in o.chunks_exact_mut(plane).zip(bias.data()) {
                    row.fill(bv);
                }
                1.0
            }
            None => 0.0,
        };
        let xb = &x.data()[b * c * plane..(b + 1) * c * plane];
        gemm(weight.data(), Mat::row_major(cout, c), xb, Mat::row_major(c, plane), beta, o, Mat::row_major(cout, plane));
    }
    Tensor::new(&[n, cout, h, w], out).expect("linear output shape")
}

pub(crate) fn linear_channels_backward(
    x: &Tensor,
    weight: &Tensor,
    dout: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let [n, c, h, w] = x.dims4().expect("checked by caller");
    let cout = weight.shape()[0];
    let plane = h * w;
    let mut dx = vec![0.0; x.numel()];
    let mut dw = vec![0.0; weight.numel()];
    let mut db = vec![0.0; cout];
    let wm = Mat::row_major(cout, c);
    let gm = Mat::row_major(cout, plane);
    let xm = Mat::row_major(c, plane);
    for b in 0..n {
        let gb = &dout.data()[b * cout * plane..(b + 1) * cout * plane];
        let xb = &x.data()[b * c * plane..(b + 1) * c * plane];
        for (d, row) in db.iter_mut().zip(gb.chunks_exact(plane)) {
            *d += row.iter().sum::<f64>();
        }
        gemm(gb, gm, xb, xm.t(), 1.0, &mut dw, wm);
        gemm(weight.data(), wm.t(), gb, gm, 0.0, &mut dx[b * c * plane..(b + 1) * c * plane], xm);
    }
    (
        Tensor::new(x.shape(), dx).expect("dx shape"),
        Tensor::new(weight.shape(), dw).expect("dw shape"),
        Tensor::new(&[cout], db).expect("db shape"),
    )
}

/// Output shape of a broadcasting binary op. Ranks must agree; each extent must match or be 1.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cannot broadcast {a:?} with {b:?}")));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => Err(Error::Shape(format!("cannot broadcast {a:?} with {b:?}"))),
        })
        .collect()
}

fn padded4(shape: &[usize]) -> [usize; 4] {
    let mut out = [1; 4];
    out[4 - shape.len()..].copy_from_slice(shape);
    out
}

/// Strides of `src` viewed through `out`, zero along broadcast axes.
fn broadcast_strides(src: &[usize], out: &[usize]) -> [usize; 4] {
    let s4 = padded4(src);
    let o4 = padded4(out);
    let st = strides(&s4);
    let mut res = [0; 4];
    for i in 0..4 {
        res[i] = if s4[i] == o4[i] { st[i] } else { 0 };
    }
    res
}

/// Visit every output element with the flat indices of both operands.
pub(crate) fn for_each_broadcast(a: &[usize], b: &[usize], out: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let o4 = padded4(out);
    let sa = broadcast_strides(a, out);
    let sb = broadcast_strides(b, out);
    let mut k = 0;
    for i0 in 0..o4[0] {
        for i1 in 0..o4[1] {
            for i2 in 0..o4[2] {
                let ba = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
                let bb = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
                for i3 in 0..o4[3] {
                    f(k, ba + i3 * sa[3], bb + i3 * sb[3]);
                    k += 1;
                }
            }
        }
    }
}

/// Sum `t` down to `shape` along axes where `shape` has extent 1.
pub(crate) fn reduce_to(t: &Tensor, shape: &[usize]) -> Tensor {
    if t.shape() == shape {
        return t.clone();
    }
    let mut out = vec![0.0; shape.iter().product()];
    let td = t.data();
    for_each_broadcast(shape, shape, t.shape(), |k, ia, _| out[ia] += td[k]);
    Tensor::new(shape, out).expect("reduce shape")
}

/// Sum along `axes`, keeping them as extent-1 dimensions.
pub(crate) fn sum_axes(x: &Tensor, axes: &[usize]) -> Result<Tensor> {
    if axes.is_empty() {
        return Err(Error::EmptyReduction("no axes given".into()));
    }
    let mut shape = x.shape().to_vec();
    for &a in axes {
        if a >= shape.len() {
            return Err(Error::Shape(format!("axis {a} out of range for {:?}", x.shape())));
        }
        if x.shape()[a] == 0 {
            return Err(Error::EmptyReduction(format!("axis {a} has extent 0")));
        }
        shape[a] = 1;
    }
    Ok(reduce_to(x, &shape))
}

/// Broadcast `t` up to `shape`.
pub(crate) fn expand_to(t: &Tensor, shape: &[usize]) -> Tensor {
    if t.shape() == shape {
        return t.clone();
    }
    let mut out = vec![0.0; shape.iter().product()];
    let td = t.data();
    for_each_broadcast(t.shape(), t.shape(), shape, |k, ia, _| out[k] = td[ia]);
    Tensor::new(shape, out).expect("expand shape")
}

pub(crate) fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = c * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Non-overlapping `f x f` block means.
pub(crate) fn avg_pool_forward(x: &Tensor, f: usize) -> Result<Tensor> {
    let [n, c, h, w] = x.dims4()?;
    if f == 0 || h % f != 0 || w % f != 0 {
        return Err(Error::Shape(format!("{h}x{w} is not divisible into {f}x{f} blocks")));
    }
    let (ho, wo) = (h / f, w / f);
    let mut out = vec![0.0; n * c * ho * wo];
    let inv = 1.0 / (f * f) as f64;
    let xd = x.data();
    for p in 0..n * c {
        for i in 0..ho {
            for j in 0..wo {
                let mut acc = 0.0;
                for a in 0..f {
                    let row = p * h * w + (i * f + a) * w + j * f;
                    acc += xd[row..row + f].iter().sum::<f64>();
                }
                out[p * ho * wo + i * wo + j] = acc * inv;
            }
        }
    }
    Tensor::new(&[n, c, ho, wo], out)
}

pub(crate) fn avg_pool_backward(x_shape: &[usize], dout: &Tensor, f: usize) -> Tensor {
    let (h, w) = (x_shape[2], x_shape[3]);
    let (ho, wo) = (h / f, w / f);
    let planes = x_shape[0] * x_shape[1];
    let inv = 1.0 / (f * f) as f64;
    let gd = dout.data();
    let mut dx = vec![0.0; x_shape.iter().product()];
    for p in 0..planes {
        for i in 0..h {
            for j in 0..w {
                dx[p * h * w + i * w + j] = gd[p * ho * wo + (i / f) * wo + j / f] * inv;
            }
        }
    }
    Tensor::new(x_shape, dx).expect("pool grad shape")
}

/// Pad H and W by one pixel, repeating the border.
pub(crate) fn pad_replicate_forward(x: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = x.dims4()?;
    let (hp, wp) = (h + 2, w + 2);
    let xd = x.data();
    let mut out = vec![0.0; n * c * hp * wp];
    for p in 0..n * c {
        for i in 0..hp {
            let si = i.saturating_sub(1).min(h - 1);
            for j in 0..wp {
                let sj = j.saturating_sub(1).min(w - 1);
                out[p * hp * wp + i * wp + j] = xd[p * h * w + si * w + sj];
            }
        }
    }
    Tensor::new(&[n, c, hp, wp], out)
}

pub(crate) fn pad_replicate_backward(x_shape: &[usize], dout: &Tensor) -> Tensor {
    let (h, w) = (x_shape[2], x_shape[3]);
    let (hp, wp) = (h + 2, w + 2);
    let planes = x_shape[0] * x_shape[1];
    let gd = dout.data();
    let mut dx = vec![0.0; x_shape.iter().product()];
    for p in 0..planes {
        for i in 0..hp {
            let si = i.saturating_sub(1).min(h - 1);
            for j in 0..wp {
                let sj = j.saturating_sub(1).min(w - 1);
                dx[p * h * w + si * w + sj] += gd[p * hp * wp + i * wp + j];
            }
        }
    }
    Tensor::new(x_shape, dx).expect("pad grad shape")
}
