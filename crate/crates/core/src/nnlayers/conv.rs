use super::{ParamSlot, Tensor3};
use crate::error::{Error, Result};
use crate::par;

/// Weights and bias of a 1D convolution.
///
/// `weights` has shape `(kernel, in_channels, out_channels)`, row-major, where
/// in/out are the channel counts the layer consumes and produces. A
/// transpose convolution uses the same layout with respect to its own
/// input and output.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvParams {
    pub fn zeros(
        kernel: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        if kernel == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidSpec(
                "kernel and channel counts must be positive".into(),
            ));
        }
        if !(stride == 1 || stride == 2) || kernel < stride {
            return Err(Error::InvalidSpec(format!(
                "stride must be 1 or 2 and not exceed the kernel (kernel {kernel}, stride {stride})"
            )));
        }
        Ok(ConvParams {
            kernel,
            stride,
            in_channels,
            out_channels,
            weights: vec![0.0; kernel * in_channels * out_channels],
            bias: vec![0.0; out_channels],
        })
    }

    /// Single-tap identity map (`kernel = 1`, `stride = 1`, `C -> C`).
    pub fn identity(channels: usize) -> Self {
        let mut p = ConvParams::zeros(1, 1, channels, channels).expect("valid identity");
        for c in 0..channels {
            p.weights[c * channels + c] = 1.0;
        }
        p
    }

    pub fn weight_index(&self, tap: usize, cin: usize, cout: usize) -> usize {
        (tap * self.in_channels + cin) * self.out_channels + cout
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same weights viewed from the other direction: `w'[j][o][i] = w[j][i][o]`,
    /// zero bias. The transpose convolution with these parameters is the
    /// adjoint of the convolution with `self` (and vice versa).
    pub fn transposed(&self) -> ConvParams {
        let mut t = ConvParams::zeros(
            self.kernel,
            self.stride,
            self.out_channels,
            self.in_channels,
        )
        .expect("transposed of valid params");
        for j in 0..self.kernel {
            for i in 0..self.in_channels {
                for o in 0..self.out_channels {
                    let dst = t.weight_index(j, o, i);
                    t.weights[dst] = self.weights[self.weight_index(j, i, o)];
                }
            }
        }
        t
    }
}

/// Parameter gradients with [`ConvParams`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvGrads {
    pub fn zeros_like(p: &ConvParams) -> Self {
        ConvGrads {
            weights: vec![0.0; p.weights.len()],
            bias: vec![0.0; p.bias.len()],
        }
    }

    fn accumulate(&mut self, other: &ConvGrads) {
        self.weights
            .iter_mut()
            .zip(&other.weights)
            .for_each(|(a, b)| *a += b);
        self.bias
            .iter_mut()
            .zip(&other.bias)
            .for_each(|(a, b)| *a += b);
    }
}

/// Left zero padding for a "same" convolution of a length-`long` signal:
/// the output has exactly `long / stride` samples.
pub fn same_padding(long: usize, stride: usize, kernel: usize) -> usize {
    let out = long / stride;
    let total = ((out.saturating_sub(1)) * stride + kernel).saturating_sub(long);
    total / 2
}

/// Taps `j` for which `o * stride + j - pad` lies in `[0, long)`.
#[inline]
fn tap_range(o: usize, stride: usize, pad: usize, kernel: usize, long: usize) -> (usize, usize) {
    let base = o * stride;
    let lo = pad.saturating_sub(base);
    let hi = kernel.min((long + pad).saturating_sub(base));
    (lo, hi.max(lo))
}

struct Geometry {
    long: usize,
    short: usize,
    stride: usize,
    kernel: usize,
    pad: usize,
}

impl Geometry {
    fn new(long: usize, p: &ConvParams) -> Self {
        Geometry {
            long,
            short: long / p.stride,
            stride: p.stride,
            kernel: p.kernel,
            pad: same_padding(long, p.stride, p.kernel),
        }
    }
}

fn check_conv_input(x: &Tensor3, p: &ConvParams) -> Result<()> {
    if x.channels() != p.in_channels {
        return Err(Error::invalid(format!(
            "input has {} channels, layer expects {}",
            x.channels(),
            p.in_channels
        )));
    }
    if x.length() % p.stride != 0 {
        return Err(Error::invalid(format!(
            "length {} is not divisible by stride {}",
            x.length(),
            p.stride
        )));
    }
    Ok(())
}

fn check_grad(grad: &Tensor3, expected: (usize, usize, usize)) -> Result<()> {
    if grad.shape() != expected {
        return Err(Error::shape(format!(
            "gradient has shape {:?}, forward produced {:?}",
            grad.shape(),
            expected
        )));
    }
    Ok(())
}

/// Output positions `o` whose taps all fall inside `[0, long)` form one
/// contiguous run; the rest touch the zero padding and use a clipped tap range.
/// For each `o` the touched input rows `o * stride + j - pad` are consecutive,
/// so the `(tap, channel)` window is a contiguous slice of the sample.
#[inline]
fn window(o: usize, g: &Geometry, width: usize) -> (usize, usize, std::ops::Range<usize>) {
    let (j0, j1) = tap_range(o, g.stride, g.pad, g.kernel, g.long);
    let first = o * g.stride + j0 - g.pad;
    (j0, j1, first * width..(first + j1 - j0) * width)
}

/// `w[j][ci][co]` rearranged to `[co][j][ci]` so each output channel sees a
/// contiguous `(tap, in-channel)` filter.
fn by_output(p: &ConvParams) -> Vec<f64> {
    let (k, ci, co) = (p.kernel, p.in_channels, p.out_channels);
    let mut t = vec![0.0; p.weights.len()];
    for j in 0..k {
        for c in 0..ci {
            for d in 0..co {
                t[(d * k + j) * ci + c] = p.weights[(j * ci + c) * co + d];
            }
        }
    }
    t
}

/// `w[j][ci][co]` rearranged to `[ci][j][co]`.
fn by_input(p: &ConvParams) -> Vec<f64> {
    let (k, ci, co) = (p.kernel, p.in_channels, p.out_channels);
    let mut t = vec![0.0; p.weights.len()];
    for j in 0..k {
        for c in 0..ci {
            let src = (j * ci + c) * co;
            let dst = (c * k + j) * co;
            t[dst..dst + co].copy_from_slice(&p.weights[src..src + co]);
        }
    }
    t
}

fn from_by_output(t: &[f64], p: &ConvParams) -> Vec<f64> {
    let (k, ci, co) = (p.kernel, p.in_channels, p.out_channels);
    let mut w = vec![0.0; t.len()];
    for d in 0..co {
        for j in 0..k {
            for c in 0..ci {
                w[(j * ci + c) * co + d] = t[(d * k + j) * ci + c];
            }
        }
    }
    w
}

fn from_by_input(t: &[f64], p: &ConvParams) -> Vec<f64> {
    let (k, ci, co) = (p.kernel, p.in_channels, p.out_channels);
    let mut w = vec![0.0; t.len()];
    for c in 0..ci {
        for j in 0..k {
            let src = (c * k + j) * co;
            let dst = (j * ci + c) * co;
            w[dst..dst + co].copy_from_slice(&t[src..src + co]);
        }
    }
    w
}

/// Strided "same" convolution: `(B, L, Cin) -> (B, L / stride, Cout)`.
///
/// `y[o][co] = bias[co] + sum_{j, ci} x[o * stride + j - pad][ci] * w[j][ci][co]`
/// with zero padding outside `[0, L)`.
pub fn conv1d_forward(x: &Tensor3, p: &ConvParams) -> Result<Tensor3> {
    check_conv_input(x, p)?;
    let (b, l, ci) = x.shape();
    let g = Geometry::new(l, p);
    let (k, co) = (p.kernel, p.out_channels);
    let wt = by_output(p);
    let mut out = Tensor3::zeros(b, g.short, co);
    par::for_each_chunk_mut(out.data_mut(), g.short * co, |s, y| {
        let xs = x.sample(s);
        for (o, row) in y.chunks_exact_mut(co).enumerate() {
            let (j0, j1, span) = window(o, &g, ci);
            let xw = &xs[span];
            for (d, r) in row.iter_mut().enumerate() {
                let f = &wt[(d * k + j0) * ci..(d * k + j1) * ci];
                *r = p.bias[d] + dot(xw, f);
            }
        }
    });
    Ok(out)
}

/// Adjoints of [`conv1d_forward`] with respect to input, weights and bias.
pub fn conv1d_backward(
    x: &Tensor3,
    p: &ConvParams,
    grad_out: &Tensor3,
) -> Result<(Tensor3, ConvGrads)> {
    check_conv_input(x, p)?;
    let (b, l, ci) = x.shape();
    let g = Geometry::new(l, p);
    let (k, co) = (p.kernel, p.out_channels);
    check_grad(grad_out, (b, g.short, co))?;
    let wt = by_output(p);

    let mut grad_x = Tensor3::zeros(b, l, ci);
    par::for_each_chunk_mut(grad_x.data_mut(), l * ci, |s, gx| {
        let gs = grad_out.sample(s);
        for (o, gr) in gs.chunks_exact(co).enumerate() {
            let (j0, j1, span) = window(o, &g, ci);
            let gw = &mut gx[span];
            for (d, &gv) in gr.iter().enumerate() {
                axpy(gw, gv, &wt[(d * k + j0) * ci..(d * k + j1) * ci]);
            }
        }
    });

    let nw = p.weights.len();
    let mut flat = par::grouped_sum(b, nw + co, |s, acc| {
        let xs = x.sample(s);
        let gs = grad_out.sample(s);
        let (gw, gb) = acc.split_at_mut(nw);
        for (o, gr) in gs.chunks_exact(co).enumerate() {
            let (j0, j1, span) = window(o, &g, ci);
            let xw = &xs[span];
            for (d, &gv) in gr.iter().enumerate() {
                gb[d] += gv;
                axpy(&mut gw[(d * k + j0) * ci..(d * k + j1) * ci], gv, xw);
            }
        }
    });
    let w = from_by_output(&flat[..nw], p);
    flat[..nw].copy_from_slice(&w);
    Ok((grad_x, split_grads(flat, nw)))
}

/// Transpose convolution: `(B, L, Cin) -> (B, L * stride, Cout)`.
///
/// `y[i][co] = bias[co] + sum x[o][ci] * w[j][ci][co]` over all `(o, j)` with
/// `o * stride + j - pad = i`, where `pad` is the "same" padding of a
/// length-`L * stride` convolution. With zero bias this is exactly the adjoint
/// of [`conv1d_forward`] run with [`ConvParams::transposed`] weights.
pub fn transpose_conv1d_forward(x: &Tensor3, p: &ConvParams) -> Result<Tensor3> {
    check_tconv_input(x, p)?;
    let (b, l, ci) = x.shape();
    let g = Geometry::new(l * p.stride, p);
    let (k, co) = (p.kernel, p.out_channels);
    let wi = by_input(p);
    let mut out = Tensor3::zeros(b, g.long, co);
    par::for_each_chunk_mut(out.data_mut(), g.long * co, |s, y| {
        for row in y.chunks_exact_mut(co) {
            row.copy_from_slice(&p.bias);
        }
        let xs = x.sample(s);
        for (o, xr) in xs.chunks_exact(ci).enumerate() {
            let (j0, j1, span) = window(o, &g, co);
            let yw = &mut y[span];
            for (c, &xv) in xr.iter().enumerate() {
                axpy(yw, xv, &wi[(c * k + j0) * co..(c * k + j1) * co]);
            }
        }
    });
    Ok(out)
}

pub fn transpose_conv1d_backward(
    x: &Tensor3,
    p: &ConvParams,
    grad_out: &Tensor3,
) -> Result<(Tensor3, ConvGrads)> {
    check_tconv_input(x, p)?;
    let (b, l, ci) = x.shape();
    let g = Geometry::new(l * p.stride, p);
    let (k, co) = (p.kernel, p.out_channels);
    check_grad(grad_out, (b, g.long, co))?;
    let wi = by_input(p);

    let mut grad_x = Tensor3::zeros(b, l, ci);
    par::for_each_chunk_mut(grad_x.data_mut(), l * ci, |s, gx| {
        let gs = grad_out.sample(s);
        for (o, gr) in gx.chunks_exact_mut(ci).enumerate() {
            let (j0, j1, span) = window(o, &g, co);
            let gw = &gs[span];
            for (c, v) in gr.iter_mut().enumerate() {
                *v = dot(gw, &wi[(c * k + j0) * co..(c * k + j1) * co]);
            }
        }
    });

    let nw = p.weights.len();
    let mut flat = par::grouped_sum(b, nw + co, |s, acc| {
        let xs = x.sample(s);
        let gs = grad_out.sample(s);
        let (gw, gb) = acc.split_at_mut(nw);
        for row in gs.chunks_exact(co) {
            for (a, &v) in gb.iter_mut().zip(row) {
                *a += v;
            }
        }
        for (o, xr) in xs.chunks_exact(ci).enumerate() {
            let (j0, j1, span) = window(o, &g, co);
            let gwin = &gs[span];
            for (c, &xv) in xr.iter().enumerate() {
                axpy(&mut gw[(c * k + j0) * co..(c * k + j1) * co], xv, gwin);
            }
        }
    });
    let w = from_by_input(&flat[..nw], p);
    flat[..nw].copy_from_slice(&w);
    Ok((grad_x, split_grads(flat, nw)))
}

fn check_tconv_input(x: &Tensor3, p: &ConvParams) -> Result<()> {
    if x.channels() != p.in_channels {
        return Err(Error::invalid(format!(
            "input has {} channels, layer expects {}",
            x.channels(),
            p.in_channels
        )));
    }
    Ok(())
}

fn split_grads(mut flat: Vec<f64>, nw: usize) -> ConvGrads {
    let bias = flat.split_off(nw);
    ConvGrads {
        weights: flat,
        bias,
    }
}

/// Four-lane dot product; fixed association order, so results do not depend
/// on the execution mode.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

macro_rules! conv_layer {
    ($name:ident, $fwd:ident, $bwd:ident) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            pub params: ConvParams,
            pub grads: ConvGrads,
            pub(crate) cache: Option<Tensor3>,
        }

        impl $name {
            pub fn new(params: ConvParams) -> Self {
                let grads = ConvGrads::zeros_like(&params);
                $name {
                    params,
                    grads,
                    cache: None,
                }
            }

            pub fn forward(&mut self, x: &Tensor3) -> Result<Tensor3> {
                let y = $fwd(x, &self.params)?;
                self.cache = Some(x.clone());
                Ok(y)
            }

            pub fn backward(&mut self, grad_out: &Tensor3) -> Result<Tensor3> {
                let x = self
                    .cache
                    .as_ref()
                    .ok_or_else(|| Error::invalid("backward called before forward"))?;
                let (gx, gp) = $bwd(x, &self.params, grad_out)?;
                self.grads.accumulate(&gp);
                Ok(gx)
            }

            pub fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
                vec![
                    ParamSlot {
                        value: &mut self.params.weights,
                        grad: &self.grads.weights,
                    },
                    ParamSlot {
                        value: &mut self.params.bias,
                        grad: &self.grads.bias,
                    },
                ]
            }

            pub fn zero_grad(&mut self) {
                self.grads.weights.iter_mut().for_each(|g| *g = 0.0);
                self.grads.bias.iter_mut().for_each(|g| *g = 0.0);
            }
        }
    };
}

conv_layer!(Conv1d, conv1d_forward, conv1d_backward);
conv_layer!(
    TransposeConv1d,
    transpose_conv1d_forward,
    transpose_conv1d_backward
);
