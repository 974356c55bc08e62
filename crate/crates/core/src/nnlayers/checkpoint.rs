//! Little-endian binary encoding of layers.
//!
//! A checkpoint file is
//!
//! ```text
//! magic      8 bytes   "WAVEAECK"
//! version    u32       CHECKPOINT_VERSION
//! model spec           (see architecture::Network::to_bytes)
//! n_layers   u32
//! layers     n_layers records
//! ```
//!
//! Each layer record starts with a one-byte kind tag followed by a shape
//! header and raw `f64` arrays in declared layout:
//!
//! | tag | kind        | body                                                          |
//! |-----|-------------|---------------------------------------------------------------|
//! | 1   | conv        | conv params                                                   |
//! | 2   | tconv       | conv params                                                   |
//! | 3   | dwt         | taps u32, dec_lo f64[taps], hp conv params, lp conv params    |
//! | 4   | idwt        | input mode u8 (0 split, 1 shared), then as dwt                |
//! | 5   | batchnorm   | channels u32, momentum f64, epsilon f64, gamma, beta, mean, var |
//! | 6   | elu         | alpha f64                                                     |
//! | 7   | dropout     | rate f64                                                      |
//!
//! Conv params are `kernel u32, stride u32, in u32, out u32,
//! weights f64[kernel*in*out], bias f64[out]`.

use super::{
    BatchNorm, BatchNormState, BranchInput, Conv1d, ConvParams, Dropout, DwtLayer, Elu, IdwtLayer,
    Layer, TransposeConv1d, WaveletLayerParams,
};
use crate::error::{Error, Result};
use crate::wavelet::FilterBank;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WAVEAECK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Default)]
pub struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.f64(*x);
        }
    }
    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }
}

/// Cursor over a byte slice; errors carry the offending byte offset.
pub struct ByteReader<'a> {
    data: &'a [u8],
    pub pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        ByteReader { data, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "unexpected end of data at byte offset {} (need {n} more bytes)",
                self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| self.error("length overflow"))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let at = self.pos;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint(format!("invalid UTF-8 at byte offset {at}")))
    }
    pub fn is_empty(&self) -> bool {
        self.pos == self.data.len()
    }
    pub fn error(&self, msg: &str) -> Error {
        Error::Checkpoint(format!("{msg} at byte offset {}", self.pos))
    }
}

fn write_conv(w: &mut ByteWriter, p: &ConvParams) {
    w.u32(p.kernel as u32);
    w.u32(p.stride as u32);
    w.u32(p.in_channels as u32);
    w.u32(p.out_channels as u32);
    w.f64s(&p.weights);
    w.f64s(&p.bias);
}

fn read_conv(r: &mut ByteReader) -> Result<ConvParams> {
    let at = r.pos;
    let kernel = r.u32()? as usize;
    let stride = r.u32()? as usize;
    let cin = r.u32()? as usize;
    let cout = r.u32()? as usize;
    let mut p = ConvParams::zeros(kernel, stride, cin, cout)
        .map_err(|e| Error::Checkpoint(format!("bad conv header at byte offset {at}: {e}")))?;
    p.weights = r.f64s(p.weights.len())?;
    p.bias = r.f64s(cout)?;
    Ok(p)
}

fn write_wavelet(w: &mut ByteWriter, p: &WaveletLayerParams) {
    w.u32(p.bank.taps() as u32);
    w.f64s(&p.bank.dec_lo);
    write_conv(w, &p.hp);
    write_conv(w, &p.lp);
}

fn read_wavelet(r: &mut ByteReader) -> Result<WaveletLayerParams> {
    let at = r.pos;
    let taps = r.u32()? as usize;
    let dec_lo = r.f64s(taps)?;
    let bank = FilterBank::from_dec_lo(&dec_lo)
        .map_err(|e| Error::Checkpoint(format!("bad filter bank at byte offset {at}: {e}")))?;
    let hp = read_conv(r)?;
    let lp = read_conv(r)?;
    Ok(WaveletLayerParams { hp, lp, bank })
}

pub fn write_layer(w: &mut ByteWriter, layer: &Layer) {
    match layer {
        Layer::Conv(l) => {
            w.u8(1);
            write_conv(w, &l.params);
        }
        Layer::TransposeConv(l) => {
            w.u8(2);
            write_conv(w, &l.params);
        }
        Layer::Dwt(l) => {
            w.u8(3);
            write_wavelet(w, &l.params);
        }
        Layer::Idwt(l) => {
            w.u8(4);
            w.u8(match l.input {
                BranchInput::Split => 0,
                BranchInput::Shared => 1,
            });
            write_wavelet(w, &l.params);
        }
        Layer::BatchNorm(l) => {
            w.u8(5);
            let s = &l.state;
            w.u32(s.channels() as u32);
            w.f64(s.momentum);
            w.f64(s.epsilon);
            w.f64s(&s.gamma);
            w.f64s(&s.beta);
            w.f64s(&s.running_mean);
            w.f64s(&s.running_var);
        }
        Layer::Elu(_) => {
            w.u8(6);
            w.f64(super::activation::ELU_ALPHA);
        }
        Layer::Dropout(l) => {
            w.u8(7);
            w.f64(l.rate);
        }
    }
}

pub fn read_layer(r: &mut ByteReader) -> Result<Layer> {
    let at = r.pos;
    let tag = r.u8()?;
    Ok(match tag {
        1 => Layer::Conv(Conv1d::new(read_conv(r)?)),
        2 => Layer::TransposeConv(TransposeConv1d::new(read_conv(r)?)),
        3 => Layer::Dwt(DwtLayer::new(read_wavelet(r)?)),
        4 => {
            let input = match r.u8()? {
                0 => BranchInput::Split,
                1 => BranchInput::Shared,
                m => return Err(r.error(&format!("unknown IDWT input mode {m}"))),
            };
            Layer::Idwt(IdwtLayer::new(read_wavelet(r)?, input))
        }
        5 => {
            let c = r.u32()? as usize;
            let momentum = r.f64()?;
            let epsilon = r.f64()?;
            let state = BatchNormState {
                gamma: r.f64s(c)?,
                beta: r.f64s(c)?,
                running_mean: r.f64s(c)?,
                running_var: r.f64s(c)?,
                momentum,
                epsilon,
            };
            Layer::BatchNorm(BatchNorm::new(state))
        }
        6 => {
            let alpha = r.f64()?;
            if alpha != super::activation::ELU_ALPHA {
                return Err(r.error(&format!("unsupported ELU alpha {alpha}")));
            }
            Layer::Elu(Elu::default())
        }
        7 => Layer::Dropout(Dropout::new(r.f64()?)?),
        t => {
            return Err(Error::Checkpoint(format!(
                "unknown layer tag {t} at byte offset {at}"
            )))
        }
    })
}
