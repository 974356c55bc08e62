//! DWT and IDWT network layers.
//!
//! The DWT layer splits every input channel into approximation and detail
//! coefficients (halving the length), runs a stride-1 convolution on each
//! branch and concatenates the results along channels as `[detail | approx]`.
//! The IDWT layer mirrors it: two stride-1 transpose convolutions produce
//! detail and approximation maps that are recombined by the inverse transform,
//! doubling the length. The wavelet transforms are fixed and orthogonal, so
//! their adjoints are each other.

use super::conv::{
    conv1d_backward, conv1d_forward, transpose_conv1d_backward, transpose_conv1d_forward,
};
use super::{ConvGrads, ConvParams, ParamSlot, Tensor3};
use crate::error::{Error, Result};
use crate::par;
use crate::wavelet::{analysis_strided, synthesis_strided, FilterBank};

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletLayerParams {
    /// Convolution on the detail (high-pass) branch.
    pub hp: ConvParams,
    /// Convolution on the approximation (low-pass) branch.
    pub lp: ConvParams,
    pub bank: FilterBank,
}

/// How the IDWT layer feeds its two branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchInput {
    /// First half of the channels feeds the detail branch, second half the
    /// approximation branch.
    Split,
    /// Both branches read every channel. Used when the input has a single
    /// channel and cannot be split.
    Shared,
}

impl WaveletLayerParams {
    /// DWT layer `C_in -> C_out`: each branch is `C_in -> C_out / 2`.
    pub fn for_dwt(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        bank: FilterBank,
    ) -> Result<Self> {
        if out_channels < 2 || out_channels % 2 != 0 {
            return Err(Error::InvalidSpec(format!(
                "DWT layer output channels must be even, got {out_channels}"
            )));
        }
        let branch = ConvParams::zeros(kernel, 1, in_channels, out_channels / 2)?;
        Ok(WaveletLayerParams {
            hp: branch.clone(),
            lp: branch,
            bank,
        })
    }

    /// IDWT layer `C_in -> C_out`: each branch produces `C_out` channels.
    pub fn for_idwt(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        input: BranchInput,
        bank: FilterBank,
    ) -> Result<Self> {
        let branch_in = match input {
            BranchInput::Split => {
                if in_channels % 2 != 0 {
                    return Err(Error::InvalidSpec(format!(
                        "split IDWT input needs an even channel count, got {in_channels}"
                    )));
                }
                in_channels / 2
            }
            BranchInput::Shared => in_channels,
        };
        let branch = ConvParams::zeros(kernel, 1, branch_in, out_channels)?;
        Ok(WaveletLayerParams {
            hp: branch.clone(),
            lp: branch,
            bank,
        })
    }

    fn check(&self) -> Result<()> {
        let (h, l) = (&self.hp, &self.lp);
        if h.kernel != l.kernel
            || h.stride != l.stride
            || h.out_channels != l.out_channels
            || h.in_channels != l.in_channels
        {
            return Err(Error::InvalidSpec(
                "wavelet branch convolutions must share kernel, stride and channels".into(),
            ));
        }
        if h.stride != 1 {
            return Err(Error::InvalidSpec(
                "wavelet branch convolutions use stride 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-channel one-level analysis: `(B, L, C) -> (approx, detail)`, each `(B, L/2, C)`.
pub(crate) fn analysis(x: &Tensor3, bank: &FilterBank) -> Result<(Tensor3, Tensor3)> {
    let (b, l, c) = x.shape();
    if l < 2 || l % 2 != 0 {
        return Err(Error::invalid(format!(
            "wavelet analysis needs an even length, got {l}"
        )));
    }
    let half = l / 2 * c;
    let mut both = vec![0.0; b * 2 * half];
    par::for_each_chunk_mut(&mut both, 2 * half, |s, chunk| {
        let xs = x.sample(s);
        let (a, d) = chunk.split_at_mut(half);
        for ch in 0..c {
            analysis_strided(&xs[ch..], l, c, bank, &mut a[ch..], &mut d[ch..], c);
        }
    });
    let mut approx = Vec::with_capacity(b * half);
    let mut detail = Vec::with_capacity(b * half);
    for chunk in both.chunks(2 * half) {
        approx.extend_from_slice(&chunk[..half]);
        detail.extend_from_slice(&chunk[half..]);
    }
    Ok((
        Tensor3::new(b, l / 2, c, approx)?,
        Tensor3::new(b, l / 2, c, detail)?,
    ))
}

/// Per-channel one-level synthesis: `(B, L, C)` pairs -> `(B, 2L, C)`.
pub(crate) fn synthesis(approx: &Tensor3, detail: &Tensor3, bank: &FilterBank) -> Result<Tensor3> {
    if !approx.same_shape(detail) {
        return Err(Error::shape(format!(
            "approximation {:?} and detail {:?} differ",
            approx.shape(),
            detail.shape()
        )));
    }
    let (b, l, c) = approx.shape();
    let mut out = Tensor3::zeros(b, 2 * l, c);
    par::for_each_chunk_mut(out.data_mut(), 2 * l * c, |s, y| {
        let a = approx.sample(s);
        let d = detail.sample(s);
        for ch in 0..c {
            synthesis_strided(&a[ch..], &d[ch..], l, c, bank, &mut y[ch..], c);
        }
    });
    Ok(out)
}

pub fn dwt_layer_forward(x: &Tensor3, p: &WaveletLayerParams) -> Result<Tensor3> {
    p.check()?;
    let (approx, detail) = analysis(x, &p.bank)?;
    let hp = conv1d_forward(&detail, &p.hp)?;
    let lp = conv1d_forward(&approx, &p.lp)?;
    Tensor3::concat_channels(&hp, &lp)
}

/// Returns the input gradient and the `(hp, lp)` parameter gradients.
pub fn dwt_layer_backward(
    x: &Tensor3,
    p: &WaveletLayerParams,
    grad_out: &Tensor3,
) -> Result<(Tensor3, ConvGrads, ConvGrads)> {
    p.check()?;
    let (approx, detail) = analysis(x, &p.bank)?;
    let half = p.hp.out_channels;
    if grad_out.channels() != 2 * half {
        return Err(Error::shape(format!(
            "DWT layer gradient has {} channels, expected {}",
            grad_out.channels(),
            2 * half
        )));
    }
    let (g_hp, g_lp) = grad_out.split_channels(half);
    let (g_detail, hp_grads) = conv1d_backward(&detail, &p.hp, &g_hp)?;
    let (g_approx, lp_grads) = conv1d_backward(&approx, &p.lp, &g_lp)?;
    let gx = synthesis(&g_approx, &g_detail, &p.bank)?;
    Ok((gx, hp_grads, lp_grads))
}

fn idwt_branch_inputs(x: &Tensor3, input: BranchInput) -> Result<(Tensor3, Tensor3)> {
    match input {
        BranchInput::Split => {
            if x.channels() % 2 != 0 {
                return Err(Error::invalid(format!(
                    "IDWT layer needs an even channel count, got {}",
                    x.channels()
                )));
            }
            Ok(x.split_channels(x.channels() / 2))
        }
        BranchInput::Shared => Ok((x.clone(), x.clone())),
    }
}

pub fn idwt_layer_forward(
    x: &Tensor3,
    p: &WaveletLayerParams,
    input: BranchInput,
) -> Result<Tensor3> {
    p.check()?;
    let (xd, xa) = idwt_branch_inputs(x, input)?;
    let detail = transpose_conv1d_forward(&xd, &p.hp)?;
    let approx = transpose_conv1d_forward(&xa, &p.lp)?;
    synthesis(&approx, &detail, &p.bank)
}

pub fn idwt_layer_backward(
    x: &Tensor3,
    p: &WaveletLayerParams,
    input: BranchInput,
    grad_out: &Tensor3,
) -> Result<(Tensor3, ConvGrads, ConvGrads)> {
    p.check()?;
    let (xd, xa) = idwt_branch_inputs(x, input)?;
    let (g_approx, g_detail) = analysis(grad_out, &p.bank)?;
    let (gxd, hp_grads) = transpose_conv1d_backward(&xd, &p.hp, &g_detail)?;
    let (gxa, lp_grads) = transpose_conv1d_backward(&xa, &p.lp, &g_approx)?;
    let gx = match input {
        BranchInput::Split => Tensor3::concat_channels(&gxd, &gxa)?,
        BranchInput::Shared => {
            let mut g = gxd;
            g.add_assign(&gxa)?;
            g
        }
    };
    Ok((gx, hp_grads, lp_grads))
}

fn add_into(acc: &mut ConvGrads, g: &ConvGrads) {
    acc.weights
        .iter_mut()
        .zip(&g.weights)
        .for_each(|(a, b)| *a += b);
    acc.bias.iter_mut().zip(&g.bias).for_each(|(a, b)| *a += b);
}

fn slots<'a>(
    p: &'a mut WaveletLayerParams,
    hp: &'a ConvGrads,
    lp: &'a ConvGrads,
) -> Vec<ParamSlot<'a>> {
    vec![
        ParamSlot {
            value: &mut p.hp.weights,
            grad: &hp.weights,
        },
        ParamSlot {
            value: &mut p.hp.bias,
            grad: &hp.bias,
        },
        ParamSlot {
            value: &mut p.lp.weights,
            grad: &lp.weights,
        },
        ParamSlot {
            value: &mut p.lp.bias,
            grad: &lp.bias,
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwtLayer {
    pub params: WaveletLayerParams,
    pub hp_grads: ConvGrads,
    pub lp_grads: ConvGrads,
    pub(crate) cache: Option<Tensor3>,
}

impl DwtLayer {
    pub fn new(params: WaveletLayerParams) -> Self {
        DwtLayer {
            hp_grads: ConvGrads::zeros_like(&params.hp),
            lp_grads: ConvGrads::zeros_like(&params.lp),
            params,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor3) -> Result<Tensor3> {
        let y = dwt_layer_forward(x, &self.params)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor3) -> Result<Tensor3> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("backward called before forward"))?;
        let (gx, hp, lp) = dwt_layer_backward(x, &self.params, grad_out)?;
        add_into(&mut self.hp_grads, &hp);
        add_into(&mut self.lp_grads, &lp);
        Ok(gx)
    }

    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        slots(&mut self.params, &self.hp_grads, &self.lp_grads)
    }

    pub fn zero_grad(&mut self) {
        self.hp_grads = ConvGrads::zeros_like(&self.params.hp);
        self.lp_grads = ConvGrads::zeros_like(&self.params.lp);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdwtLayer {
    pub params: WaveletLayerParams,
    pub input: BranchInput,
    pub hp_grads: ConvGrads,
    pub lp_grads: ConvGrads,
    pub(crate) cache: Option<Tensor3>,
}

impl IdwtLayer {
    pub fn new(params: WaveletLayerParams, input: BranchInput) -> Self {
        IdwtLayer {
            hp_grads: ConvGrads::zeros_like(&params.hp),
            lp_grads: ConvGrads::zeros_like(&params.lp),
            params,
            input,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor3) -> Result<Tensor3> {
        let y = idwt_layer_forward(x, &self.params, self.input)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor3) -> Result<Tensor3> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("backward called before forward"))?;
        let (gx, hp, lp) = idwt_layer_backward(x, &self.params, self.input, grad_out)?;
        add_into(&mut self.hp_grads, &hp);
        add_into(&mut self.lp_grads, &lp);
        Ok(gx)
    }

    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        slots(&mut self.params, &self.hp_grads, &self.lp_grads)
    }

    pub fn zero_grad(&mut self) {
        self.hp_grads = ConvGrads::zeros_like(&self.params.hp);
        self.lp_grads = ConvGrads::zeros_like(&self.params.lp);
    }
}
