use super::{Mode, ParamSlot, Tensor3};
use crate::error::{Error, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.99;
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Per-channel batch-norm parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Weight of the old running value: `run = m * run + (1 - m) * batch`.
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BnCache {
    xhat: Tensor3,
    inv_std: Vec<f64>,
    mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub state: BatchNormState,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
    pub(crate) cache: Option<BnCache>,
}

impl BatchNorm {
    pub fn new(state: BatchNormState) -> Self {
        let c = state.channels();
        BatchNorm {
            state,
            grad_gamma: vec![0.0; c],
            grad_beta: vec![0.0; c],
            cache: None,
        }
    }

    /// Train mode normalises with batch statistics over `batch * length` and
    /// updates the running statistics (running variance uses the unbiased
    /// estimate). Infer mode uses the running statistics only.
    pub fn forward(&mut self, x: &Tensor3, mode: Mode) -> Result<Tensor3> {
        let c = self.state.channels();
        if x.channels() != c {
            return Err(Error::invalid(format!(
                "batch norm over {c} channels got {} channels",
                x.channels()
            )));
        }
        let n = x.batch() * x.length();
        let (mean, var) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::invalid(
                        "train-mode batch norm needs at least two samples per channel",
                    ));
                }
                let (mean, var) = channel_moments(x);
                let unbias = n as f64 / (n as f64 - 1.0);
                let m = self.state.momentum;
                for ch in 0..c {
                    self.state.running_mean[ch] =
                        m * self.state.running_mean[ch] + (1.0 - m) * mean[ch];
                    self.state.running_var[ch] =
                        m * self.state.running_var[ch] + (1.0 - m) * var[ch] * unbias;
                }
                (mean, var)
            }
            Mode::Infer => (
                self.state.running_mean.clone(),
                self.state.running_var.clone(),
            ),
        };
        let inv_std: Vec<f64> = var
            .iter()
            .map(|v| 1.0 / (v + self.state.epsilon).sqrt())
            .collect();
        let mut xhat = x.clone();
        for row in xhat.data_mut().chunks_mut(c) {
            for ch in 0..c {
                row[ch] = (row[ch] - mean[ch]) * inv_std[ch];
            }
        }
        let mut y = xhat.clone();
        for row in y.data_mut().chunks_mut(c) {
            for ch in 0..c {
                row[ch] = self.state.gamma[ch] * row[ch] + self.state.beta[ch];
            }
        }
        self.cache = Some(BnCache {
            xhat,
            inv_std,
            mode,
        });
        Ok(y)
    }

    /// Inference with running statistics; leaves the layer untouched.
    pub fn infer(&self, x: &Tensor3) -> Result<Tensor3> {
        let c = self.state.channels();
        if x.channels() != c {
            return Err(Error::invalid(format!(
                "batch norm over {c} channels got {} channels",
                x.channels()
            )));
        }
        let s = &self.state;
        let scale: Vec<f64> = (0..c)
            .map(|ch| s.gamma[ch] / (s.running_var[ch] + s.epsilon).sqrt())
            .collect();
        let mut y = x.clone();
        for row in y.data_mut().chunks_mut(c) {
            for ch in 0..c {
                row[ch] = (row[ch] - s.running_mean[ch]) * scale[ch] + s.beta[ch];
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor3) -> Result<Tensor3> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("backward called before forward"))?;
        if !grad_out.same_shape(&cache.xhat) {
            return Err(Error::shape("batch norm gradient shape mismatch"));
        }
        let c = self.state.channels();
        let n = (grad_out.batch() * grad_out.length()) as f64;
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for (gr, xr) in grad_out.data().chunks(c).zip(cache.xhat.data().chunks(c)) {
            for ch in 0..c {
                sum_g[ch] += gr[ch];
                sum_gx[ch] += gr[ch] * xr[ch];
            }
        }
        for ch in 0..c {
            self.grad_beta[ch] += sum_g[ch];
            self.grad_gamma[ch] += sum_gx[ch];
        }
        let mut gx = grad_out.clone();
        match cache.mode {
            Mode::Train => {
                for (gr, xr) in gx.data_mut().chunks_mut(c).zip(cache.xhat.data().chunks(c)) {
                    for ch in 0..c {
                        let scale = self.state.gamma[ch] * cache.inv_std[ch] / n;
                        gr[ch] = scale * (n * gr[ch] - sum_g[ch] - xr[ch] * sum_gx[ch]);
                    }
                }
            }
            Mode::Infer => {
                for gr in gx.data_mut().chunks_mut(c) {
                    for ch in 0..c {
                        gr[ch] *= self.state.gamma[ch] * cache.inv_std[ch];
                    }
                }
            }
        }
        Ok(gx)
    }

    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        vec![
            ParamSlot {
                value: &mut self.state.gamma,
                grad: &self.grad_gamma,
            },
            ParamSlot {
                value: &mut self.state.beta,
                grad: &self.grad_beta,
            },
        ]
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.iter_mut().for_each(|g| *g = 0.0);
        self.grad_beta.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Per-channel mean and biased variance over batch and length.
fn channel_moments(x: &Tensor3) -> (Vec<f64>, Vec<f64>) {
    let c = x.channels();
    let n = (x.batch() * x.length()) as f64;
    let mut mean = vec![0.0; c];
    for row in x.data().chunks(c) {
        for ch in 0..c {
            mean[ch] += row[ch];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; c];
    for row in x.data().chunks(c) {
        for ch in 0..c {
            let d = row[ch] - mean[ch];
            var[ch] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}
