use rand::Rng;

use super::{ForwardCtx, Mode, Tensor3};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::stream;

pub const ELU_ALPHA: f64 = 1.0;

/// `x` for `x > 0`, `alpha * (exp(x) - 1)` otherwise.
pub fn elu(x: &Tensor3) -> Tensor3 {
    x.map(|v| if v > 0.0 { v } else { ELU_ALPHA * v.exp_m1() })
}

pub fn elu_backward(x: &Tensor3, grad_out: &Tensor3) -> Result<Tensor3> {
    if !x.same_shape(grad_out) {
        return Err(Error::shape("elu gradient shape mismatch"));
    }
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
        if xv <= 0.0 {
            *gv *= ELU_ALPHA * xv.exp();
        }
    }
    Ok(g)
}

/// Inverted dropout. In train mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; the mask for sample
/// `b` is drawn from a stream keyed by `(seed, b)`. In infer mode the input is
/// returned unchanged and the mask is `None`.
pub fn dropout(
    x: &Tensor3,
    rate: f64,
    seed: u64,
    mode: Mode,
) -> Result<(Tensor3, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut mask = vec![0.0; x.data().len()];
    par::for_each_chunk_mut(&mut mask, x.sample_len(), |b, m| {
        let mut rng = stream(seed, &[b as u64]);
        for v in m.iter_mut() {
            *v = if rng.gen::<f64>() < rate {
                0.0
            } else {
                keep_scale
            };
        }
    });
    let mut y = x.clone();
    y.data_mut()
        .iter_mut()
        .zip(&mask)
        .for_each(|(v, m)| *v *= m);
    Ok((y, Some(mask)))
}

pub fn dropout_backward(mask: Option<&[f64]>, grad_out: &Tensor3) -> Result<Tensor3> {
    let mut g = grad_out.clone();
    if let Some(mask) = mask {
        if mask.len() != g.data().len() {
            return Err(Error::shape("dropout mask does not match gradient"));
        }
        g.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Elu {
    pub(crate) cache: Option<Tensor3>,
}

impl Elu {
    pub fn forward(&mut self, x: &Tensor3) -> Result<Tensor3> {
        self.cache = Some(x.clone());
        Ok(elu(x))
    }

    pub fn backward(&mut self, grad_out: &Tensor3) -> Result<Tensor3> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("backward called before forward"))?;
        elu_backward(x, grad_out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    pub(crate) mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidSpec(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        Ok(Dropout { rate, mask: None })
    }

    pub fn forward(&mut self, x: &Tensor3, ctx: &ForwardCtx) -> Result<Tensor3> {
        let (y, mask) = dropout(x, self.rate, ctx.seed, ctx.mode)?;
        self.mask = mask;
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor3) -> Result<Tensor3> {
        dropout_backward(self.mask.as_deref(), grad_out)
    }
}
