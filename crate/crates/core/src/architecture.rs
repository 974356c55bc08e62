//! Model specifications and the network builder.
//!
//! The autoencoder has 13 rows. Rows 1-5 halve the length (strided conv or
//! DWT layer), row 6 maps to a single-channel bottleneck, row 7 is a
//! single-channel conv, rows 8-12 double the length (transpose conv or IDWT
//! layer) and row 13 maps back to one channel. Every row except 6 and 13 is
//! followed by batch norm, ELU and dropout.
//!
//! Wavelet placement counts encoder positions 1..5 from the input and
//! decoder positions 1..5 from the bottleneck. Decoder wavelet layers mirror
//! the encoder ones: encoder position `p` pairs with decoder position `6 - p`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nnlayers::checkpoint::{
    read_layer, write_layer, ByteReader, ByteWriter, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
use crate::nnlayers::{
    BatchNorm, BatchNormState, BranchInput, Conv1d, ConvParams, Dropout, DwtLayer, Elu, ForwardCtx,
    IdwtLayer, Layer, ParamSlot, Tensor3, TransposeConv1d, WaveletLayerParams,
};
use crate::rng::stream;
use crate::wavelet::make_db6_filters;

/// Number of length-halving encoder stages (and length-doubling decoder stages).
pub const STAGES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Plain fully convolutional baseline.
    Fcn,
    /// Wavelet layers at the `k` shallowest encoder stages and the `k` decoder
    /// stages nearest the output.
    Forward(usize),
    /// Wavelet layers at the `k` deepest encoder stages and the `k` decoder
    /// stages nearest the bottleneck.
    Backward(usize),
    /// Every stage is a wavelet layer.
    AllWavelet,
}

impl Variant {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Variant::Forward(k) | Variant::Backward(k) if !(1..=STAGES).contains(&k) => Err(
                Error::InvalidSpec(format!("wavelet layer count k = {k} outside 1..={STAGES}")),
            ),
            _ => Ok(()),
        }
    }

    /// Wavelet flags for encoder stages 1..5 and decoder stages 1..5
    /// (decoder counted from the bottleneck).
    pub fn placement(&self) -> ([bool; STAGES], [bool; STAGES]) {
        let mut enc = [false; STAGES];
        let mut dec = [false; STAGES];
        match *self {
            Variant::Fcn => {}
            Variant::Forward(k) => {
                for p in 1..=k.min(STAGES) {
                    enc[p - 1] = true;
                    dec[STAGES - p] = true;
                }
            }
            Variant::Backward(k) => {
                for p in (STAGES + 1 - k.min(STAGES))..=STAGES {
                    enc[p - 1] = true;
                    dec[STAGES - p] = true;
                }
            }
            Variant::AllWavelet => {
                enc = [true; STAGES];
                dec = [true; STAGES];
            }
        }
        (enc, dec)
    }

    /// Short name used in configs and reports (`fcn`, `forward`, `backward`, `all`).
    pub fn family(&self) -> &'static str {
        match self {
            Variant::Fcn => "fcn",
            Variant::Forward(_) => "forward",
            Variant::Backward(_) => "backward",
            Variant::AllWavelet => "all",
        }
    }

    pub fn k(&self) -> usize {
        match *self {
            Variant::Fcn => 0,
            Variant::Forward(k) | Variant::Backward(k) => k,
            Variant::AllWavelet => STAGES,
        }
    }

    /// Parses `family` plus `k` (`k` is ignored for `fcn` and `all`).
    pub fn parse(family: &str, k: usize) -> Result<Self> {
        let v = match family.to_ascii_lowercase().as_str() {
            "fcn" | "cnn" => Variant::Fcn,
            "forward" | "f" => Variant::Forward(k),
            "backward" | "b" => Variant::Backward(k),
            "all" | "allwavelet" | "all-wavelet" => Variant::AllWavelet,
            other => {
                return Err(Error::InvalidSpec(format!(
                    "unknown variant '{other}' (expected fcn, forward, backward or all)"
                )))
            }
        };
        v.validate()?;
        Ok(v)
    }

    /// Compact label such as `B1`, `F3`, `FCN`, `ALL`.
    pub fn label(&self) -> String {
        match *self {
            Variant::Fcn => "FCN".into(),
            Variant::Forward(k) => format!("F{k}"),
            Variant::Backward(k) => format!("B{k}"),
            Variant::AllWavelet => "ALL".into(),
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Variant::Fcn => 0,
            Variant::Forward(_) => 1,
            Variant::Backward(_) => 2,
            Variant::AllWavelet => 3,
        }
    }

    fn from_tag(tag: u8, k: usize) -> Result<Self> {
        let v = match tag {
            0 => Variant::Fcn,
            1 => Variant::Forward(k),
            2 => Variant::Backward(k),
            3 => Variant::AllWavelet,
            t => return Err(Error::Checkpoint(format!("unknown variant tag {t}"))),
        };
        v.validate()?;
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub input_length: usize,
    pub encoder_channels: [usize; STAGES],
    pub kernel_conv: usize,
    pub kernel_wavelet_branch: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl ModelSpec {
    /// Full-size model: 1024-sample input, 32-sample bottleneck.
    pub fn new(variant: Variant, seed: u64) -> Self {
        ModelSpec {
            variant,
            input_length: 1024,
            encoder_channels: [40, 20, 20, 20, 40],
            kernel_conv: 16,
            kernel_wavelet_branch: 8,
            dropout_rate: 0.1,
            seed,
        }
    }

    pub fn bottleneck_length(&self) -> usize {
        self.input_length >> STAGES
    }

    /// Output channels of decoder stages 1..5 (counted from the bottleneck).
    pub fn decoder_channels(&self) -> [usize; STAGES] {
        let mut d = self.encoder_channels;
        d.reverse();
        d
    }

    pub fn validate(&self) -> Result<()> {
        self.variant.validate()?;
        if self.input_length == 0 || self.input_length % (1 << STAGES) != 0 {
            return Err(Error::InvalidSpec(format!(
                "input length {} must be a positive multiple of {}",
                self.input_length,
                1 << STAGES
            )));
        }
        if self.encoder_channels.iter().any(|&c| c == 0) {
            return Err(Error::InvalidSpec("channel counts must be positive".into()));
        }
        let (enc, dec) = self.variant.placement();
        for p in 0..STAGES {
            if enc[p] && self.encoder_channels[p] % 2 != 0 {
                return Err(Error::InvalidSpec(format!(
                    "DWT layer at encoder stage {} needs an even channel count",
                    p + 1
                )));
            }
            let _ = dec;
        }
        if self.kernel_conv < 2 || self.kernel_wavelet_branch == 0 {
            return Err(Error::InvalidSpec("kernel sizes too small".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidSpec(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// What a table row computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Conv,
    TransposeConv,
    Dwt,
    Idwt,
}

/// One row of the architecture table.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRow {
    /// 0 for the input, 1..=13 for layers.
    pub index: usize,
    pub length: usize,
    pub channels: usize,
    pub kind: Option<RowKind>,
    /// Human-readable operation, e.g. `Conv(40, 16, 2)`.
    pub op: String,
    /// Whether batch norm, ELU and dropout follow.
    pub activated: bool,
}

struct RowPlan {
    kind: RowKind,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    activated: bool,
    branch_input: BranchInput,
}

fn plan_rows(spec: &ModelSpec) -> Vec<RowPlan> {
    let (enc, dec) = spec.variant.placement();
    let mut rows = Vec::with_capacity(13);
    let mut c = 1;
    for p in 0..STAGES {
        let out = spec.encoder_channels[p];
        rows.push(if enc[p] {
            RowPlan {
                kind: RowKind::Dwt,
                in_channels: c,
                out_channels: out,
                kernel: spec.kernel_wavelet_branch,
                stride: 1,
                activated: true,
                branch_input: BranchInput::Split,
            }
        } else {
            RowPlan {
                kind: RowKind::Conv,
                in_channels: c,
                out_channels: out,
                kernel: spec.kernel_conv,
                stride: 2,
                activated: true,
                branch_input: BranchInput::Split,
            }
        });
        c = out;
    }
    let single = |in_channels, activated| RowPlan {
        kind: RowKind::Conv,
        in_channels,
        out_channels: 1,
        kernel: spec.kernel_conv,
        stride: 1,
        activated,
        branch_input: BranchInput::Split,
    };
    rows.push(single(c, false));
    rows.push(single(1, true));
    c = 1;
    let dch = spec.decoder_channels();
    for q in 0..STAGES {
        let out = dch[q];
        rows.push(if dec[q] {
            RowPlan {
                kind: RowKind::Idwt,
                in_channels: c,
                out_channels: out,
                kernel: spec.kernel_wavelet_branch,
                stride: 1,
                activated: true,
                branch_input: if c % 2 == 0 {
                    BranchInput::Split
                } else {
                    BranchInput::Shared
                },
            }
        } else {
            RowPlan {
                kind: RowKind::TransposeConv,
                in_channels: c,
                out_channels: out,
                kernel: spec.kernel_conv,
                stride: 2,
                activated: true,
                branch_input: BranchInput::Split,
            }
        });
        c = out;
    }
    rows.push(single(c, false));
    rows
}

fn row_op(p: &RowPlan) -> String {
    match p.kind {
        RowKind::Conv => format!("Conv({}, {}, {})", p.out_channels, p.kernel, p.stride),
        RowKind::TransposeConv => format!("Deconv({}, {}, {})", p.out_channels, p.kernel, p.stride),
        RowKind::Dwt => format!(
            "DWT + HPF Conv({h}, {k}, 1) | LPF Conv({h}, {k}, 1)",
            h = p.out_channels / 2,
            k = p.kernel
        ),
        RowKind::Idwt => format!(
            "HPF Deconv({o}, {k}, 1) | LPF Deconv({o}, {k}, 1) + IDWT{}",
            if p.branch_input == BranchInput::Shared {
                " (shared input)"
            } else {
                ""
            },
            o = p.out_channels,
            k = p.kernel
        ),
    }
}

/// Pure shape computation: input row followed by the 13 layer rows.
pub fn shape_trace(spec: &ModelSpec) -> Result<Vec<ShapeRow>> {
    spec.validate()?;
    let mut out = vec![ShapeRow {
        index: 0,
        length: spec.input_length,
        channels: 1,
        kind: None,
        op: "input".into(),
        activated: false,
    }];
    let mut len = spec.input_length;
    for (i, p) in plan_rows(spec).iter().enumerate() {
        len = match p.kind {
            RowKind::Conv => len / p.stride,
            RowKind::Dwt => len / 2,
            RowKind::TransposeConv => len * p.stride,
            RowKind::Idwt => len * 2,
        };
        out.push(ShapeRow {
            index: i + 1,
            length: len,
            channels: p.out_channels,
            kind: Some(p.kind),
            op: row_op(p),
            activated: p.activated,
        });
    }
    Ok(out)
}

/// Layer index range belonging to each table row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSpan {
    pub row: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: ModelSpec,
    pub layers: Vec<Layer>,
    pub rows: Vec<RowSpan>,
}

/// Builds and initialises a network from `spec` (using `spec.seed`).
pub fn build_model(spec: &ModelSpec) -> Result<Network> {
    spec.validate()?;
    let bank = make_db6_filters();
    let mut layers = Vec::new();
    let mut rows = Vec::new();
    for (i, p) in plan_rows(spec).into_iter().enumerate() {
        let start = layers.len();
        layers.push(match p.kind {
            RowKind::Conv => Layer::Conv(Conv1d::new(ConvParams::zeros(
                p.kernel,
                p.stride,
                p.in_channels,
                p.out_channels,
            )?)),
            RowKind::TransposeConv => Layer::TransposeConv(TransposeConv1d::new(
                ConvParams::zeros(p.kernel, p.stride, p.in_channels, p.out_channels)?,
            )),
            RowKind::Dwt => Layer::Dwt(DwtLayer::new(WaveletLayerParams::for_dwt(
                p.in_channels,
                p.out_channels,
                p.kernel,
                bank.clone(),
            )?)),
            RowKind::Idwt => Layer::Idwt(IdwtLayer::new(
                WaveletLayerParams::for_idwt(
                    p.in_channels,
                    p.out_channels,
                    p.kernel,
                    p.branch_input,
                    bank.clone(),
                )?,
                p.branch_input,
            )),
        });
        if p.activated {
            layers.push(Layer::BatchNorm(BatchNorm::new(BatchNormState::new(
                p.out_channels,
            ))));
            layers.push(Layer::Elu(Elu::default()));
            layers.push(Layer::Dropout(Dropout::new(spec.dropout_rate)?));
        }
        rows.push(RowSpan {
            row: i + 1,
            start,
            end: layers.len(),
        });
    }
    let mut net = Network {
        spec: spec.clone(),
        layers,
        rows,
    };
    init_parameters(&mut net, spec.seed);
    Ok(net)
}

/// Fan-in scaled uniform initialisation: conv weights ~ U(-b, b) with
/// `b = sqrt(3 / fan_in)` (variance `1 / fan_in`), `fan_in = kernel * in_channels`.
/// Biases are zero, batch norm starts at gamma = 1, beta = 0 with fresh
/// running statistics.
pub fn init_parameters(net: &mut Network, seed: u64) {
    net.spec.seed = seed;
    for (i, layer) in net.layers.iter_mut().enumerate() {
        let fill = |p: &mut ConvParams, branch: u64| {
            let mut rng = stream(seed, &[i as u64, branch]);
            let bound = (3.0 / (p.kernel * p.in_channels) as f64).sqrt();
            p.weights
                .iter_mut()
                .for_each(|w| *w = rng.gen_range(-bound..bound));
            p.bias.iter_mut().for_each(|b| *b = 0.0);
        };
        match layer {
            Layer::Conv(l) => fill(&mut l.params, 0),
            Layer::TransposeConv(l) => fill(&mut l.params, 0),
            Layer::Dwt(l) => {
                fill(&mut l.params.hp, 1);
                fill(&mut l.params.lp, 2);
            }
            Layer::Idwt(l) => {
                fill(&mut l.params.hp, 1);
                fill(&mut l.params.lp, 2);
            }
            Layer::BatchNorm(l) => l.state = BatchNormState::new(l.state.channels()),
            Layer::Elu(_) | Layer::Dropout(_) => {}
        }
        layer.zero_grad();
        layer.clear_cache();
    }
}

impl Network {
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// Parameters per table row (main op plus its batch norm).
    pub fn row_parameter_counts(&self) -> Vec<usize> {
        self.rows
            .iter()
            .map(|r| {
                self.layers[r.start..r.end]
                    .iter()
                    .map(Layer::parameter_count)
                    .sum()
            })
            .collect()
    }

    /// Training-path forward pass; caches activations for [`Network::backward`].
    pub fn forward(&mut self, x: &Tensor3, ctx: &ForwardCtx) -> Result<Tensor3> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            h = layer.forward(&h, &ctx.for_layer(i))?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad_out: &Tensor3) -> Result<Tensor3> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Inference without touching any state; safe to share across threads.
    pub fn infer(&self, x: &Tensor3) -> Result<Tensor3> {
        self.infer_range(x, self.layers.len())
    }

    /// Encoder output `(B, bottleneck, 1)` in inference mode.
    pub fn encode(&self, x: &Tensor3) -> Result<Tensor3> {
        self.infer_range(x, self.rows[STAGES].end)
    }

    fn infer_range(&self, x: &Tensor3, end: usize) -> Result<Tensor3> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers[..end] {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        if x.length() != self.spec.input_length || x.channels() != 1 {
            return Err(Error::shape(format!(
                "network expects (B, {}, 1) input, got {:?}",
                self.spec.input_length,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Denoises single-channel windows in inference mode, `batch` at a time.
    pub fn denoise_windows<W: AsRef<[f64]>>(
        &self,
        windows: &[W],
        batch: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(batch.max(1)) {
            let y = self.infer(&Tensor3::from_windows(chunk)?)?;
            out.extend(y.data().chunks(self.spec.input_length).map(<[f64]>::to_vec));
        }
        Ok(out)
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Layer::zero_grad);
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    /// All trainable arrays in a fixed order.
    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        self.layers
            .iter_mut()
            .flat_map(Layer::param_slots)
            .collect()
    }

    /// Copies every parameter and running statistic from `other`.
    pub fn copy_state_from(&mut self, other: &Network) {
        self.layers.clone_from(&other.layers);
        self.clear_cache();
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        let s = &self.spec;
        w.u8(s.variant.tag());
        w.u32(s.variant.k() as u32);
        w.u32(s.input_length as u32);
        for c in s.encoder_channels {
            w.u32(c as u32);
        }
        w.u32(s.kernel_conv as u32);
        w.u32(s.kernel_wavelet_branch as u32);
        w.f64(s.dropout_rate);
        w.u64(s.seed);
        w.u32(self.layers.len() as u32);
        for layer in &self.layers {
            write_layer(&mut w, layer);
        }
        w.buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data);
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(
                "not a checkpoint file (bad magic)".into(),
            ));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let tag = r.u8()?;
        let k = r.u32()? as usize;
        let variant = Variant::from_tag(tag, k)?;
        let input_length = r.u32()? as usize;
        let mut encoder_channels = [0; STAGES];
        for c in encoder_channels.iter_mut() {
            *c = r.u32()? as usize;
        }
        let spec = ModelSpec {
            variant,
            input_length,
            encoder_channels,
            kernel_conv: r.u32()? as usize,
            kernel_wavelet_branch: r.u32()? as usize,
            dropout_rate: r.f64()?,
            seed: r.u64()?,
        };
        let mut net = build_model(&spec)?;
        let n = r.u32()? as usize;
        if n != net.layers.len() {
            return Err(r.error(&format!(
                "checkpoint has {n} layers but the model spec builds {}",
                net.layers.len()
            )));
        }
        for i in 0..n {
            let at = r.pos;
            let layer = read_layer(&mut r)?;
            let expected = &net.layers[i];
            if layer.kind_name() != expected.kind_name()
                || layer.parameter_count() != expected.parameter_count()
            {
                return Err(Error::Checkpoint(format!(
                    "layer {i} at byte offset {at} is {} with {} parameters, spec expects {} with {}",
                    layer.kind_name(),
                    layer.parameter_count(),
                    expected.kind_name(),
                    expected.parameter_count()
                )));
            }
            net.layers[i] = layer;
        }
        if !r.is_empty() {
            return Err(r.error("trailing bytes after last layer"));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Network::from_bytes(&data)
    }

    /// Aligned, human-readable architecture table.
    pub fn describe(&self) -> String {
        let trace = shape_trace(&self.spec).expect("built from a valid spec");
        let counts = self.row_parameter_counts();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "model {} (variant={} k={}) parameters={}",
            self.spec.variant.label(),
            self.spec.variant.family(),
            self.spec.variant.k(),
            self.parameter_count()
        );
        let _ = writeln!(
            s,
            "{:>3}  {:<8}  {:>12}  {:>8}  op",
            "No", "stage", "output", "params"
        );
        for row in &trace {
            let stage = stage_name(row.index);
            let shape = format!("{} x {}", row.length, row.channels);
            let params = if row.index == 0 {
                "-".to_string()
            } else {
                counts[row.index - 1].to_string()
            };
            let act = if row.activated {
                " + BN/ELU/Dropout"
            } else {
                ""
            };
            let _ = writeln!(
                s,
                "{:>3}  {:<8}  {:>12}  {:>8}  {}{}",
                row.index, stage, shape, params, row.op, act
            );
        }
        s
    }

    /// Machine-readable trace: one `key=value` record per line.
    pub fn describe_kv(&self) -> String {
        let trace = shape_trace(&self.spec).expect("built from a valid spec");
        let counts = self.row_parameter_counts();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "variant={} k={} label={} input_length={} bottleneck_length={} parameters={}",
            self.spec.variant.family(),
            self.spec.variant.k(),
            self.spec.variant.label(),
            self.spec.input_length,
            self.spec.bottleneck_length(),
            self.parameter_count()
        );
        for row in &trace {
            let kind = match row.kind {
                None => "input",
                Some(RowKind::Conv) => "conv",
                Some(RowKind::TransposeConv) => "tconv",
                Some(RowKind::Dwt) => "dwt",
                Some(RowKind::Idwt) => "idwt",
            };
            let params = if row.index == 0 {
                0
            } else {
                counts[row.index - 1]
            };
            let _ = writeln!(
                s,
                "row={} stage={} length={} channels={} kind={} activated={} params={}",
                row.index,
                stage_name(row.index),
                row.length,
                row.channels,
                kind,
                row.activated,
                params
            );
        }
        s
    }
}

fn stage_name(index: usize) -> &'static str {
    match index {
        0 => "input",
        1..=6 => "encoder",
        7..=12 => "decoder",
        _ => "output",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE_OUTPUT: [(usize, usize); 14] = [
        (1024, 1),
        (512, 40),
        (256, 20),
        (128, 20),
        (64, 20),
        (32, 40),
        (32, 1),
        (32, 1),
        (64, 40),
        (128, 20),
        (256, 20),
        (512, 20),
        (1024, 40),
        (1024, 1),
    ];

    fn lens(trace: &[ShapeRow]) -> Vec<usize> {
        trace.iter().map(|r| r.length).collect()
    }

    #[test]
    fn fcn_trace_matches_table() {
        let t = shape_trace(&ModelSpec::new(Variant::Fcn, 0)).unwrap();
        assert_eq!(t.len(), 14);
        let got: Vec<(usize, usize)> = t.iter().map(|r| (r.length, r.channels)).collect();
        assert_eq!(got, TABLE_OUTPUT);
        assert_eq!((t[6].index, t[6].length, t[6].channels), (6, 32, 1));
        assert_eq!((t[0].index, t[0].length, t[0].channels), (0, 1024, 1));
    }

    #[test]
    fn wavelet_variants_keep_table_shapes() {
        for v in [
            Variant::Forward(1),
            Variant::Forward(4),
            Variant::Backward(1),
            Variant::Backward(3),
            Variant::AllWavelet,
        ] {
            let t = shape_trace(&ModelSpec::new(v, 0)).unwrap();
            let got: Vec<(usize, usize)> = t.iter().map(|r| (r.length, r.channels)).collect();
            assert_eq!(got, TABLE_OUTPUT, "{v:?}");
        }
        let f2 = shape_trace(&ModelSpec::new(Variant::Forward(2), 0)).unwrap();
        let fcn = shape_trace(&ModelSpec::new(Variant::Fcn, 0)).unwrap();
        assert_eq!(lens(&f2), lens(&fcn));
    }

    #[test]
    fn placement_rules() {
        let (enc, dec) = Variant::Backward(3).placement();
        assert_eq!(enc, [false, false, true, true, true]);
        assert_eq!(dec, [true, true, true, false, false]);
        let (enc, dec) = Variant::Forward(2).placement();
        assert_eq!(enc, [true, true, false, false, false]);
        assert_eq!(dec, [false, false, false, true, true]);
        assert_eq!(
            Variant::Backward(5).placement(),
            Variant::Forward(5).placement()
        );
        assert_eq!(
            Variant::Backward(5).placement(),
            Variant::AllWavelet.placement()
        );
    }

    #[test]
    fn backward_three_rows() {
        let t = shape_trace(&ModelSpec::new(Variant::Backward(3), 0)).unwrap();
        let kinds: Vec<Option<RowKind>> = t.iter().map(|r| r.kind).collect();
        assert_eq!(kinds[1], Some(RowKind::Conv));
        assert_eq!(kinds[2], Some(RowKind::Conv));
        assert_eq!(kinds[3..=5], [Some(RowKind::Dwt); 3]);
        assert_eq!(kinds[8..=10], [Some(RowKind::Idwt); 3]);
        assert_eq!(kinds[11..=12], [Some(RowKind::TransposeConv); 2]);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(Variant::Forward(0).validate().is_err());
        assert!(Variant::Backward(6).validate().is_err());
        assert!(build_model(&ModelSpec::new(Variant::Backward(6), 0)).is_err());
        assert!(Variant::parse("sideways", 1).is_err());
    }

    #[test]
    fn forward_maps_input_to_output_shape() {
        let mut spec = ModelSpec::new(Variant::Backward(2), 3);
        spec.input_length = 128;
        let mut net = build_model(&spec).unwrap();
        let x = Tensor3::zeros(2, 128, 1);
        let y = net.forward(&x, &ForwardCtx::train(1)).unwrap();
        assert_eq!(y.shape(), (2, 128, 1));
        assert_eq!(net.encode(&x).unwrap().shape(), (2, 4, 1));
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = build_model(&ModelSpec::new(Variant::Forward(2), 11)).unwrap();
        let b = build_model(&ModelSpec::new(Variant::Forward(2), 11)).unwrap();
        let c = build_model(&ModelSpec::new(Variant::Forward(2), 12)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn biases_start_at_zero() {
        let mut net = build_model(&ModelSpec::new(Variant::AllWavelet, 1)).unwrap();
        for layer in net.layers.iter_mut() {
            match layer {
                Layer::Conv(l) => assert!(l.params.bias.iter().all(|b| *b == 0.0)),
                Layer::TransposeConv(l) => assert!(l.params.bias.iter().all(|b| *b == 0.0)),
                Layer::Dwt(l) => {
                    assert!(l
                        .params
                        .hp
                        .bias
                        .iter()
                        .chain(&l.params.lp.bias)
                        .all(|b| *b == 0.0))
                }
                Layer::Idwt(l) => {
                    assert!(l
                        .params
                        .hp
                        .bias
                        .iter()
                        .chain(&l.params.lp.bias)
                        .all(|b| *b == 0.0))
                }
                Layer::BatchNorm(l) => {
                    assert!(l.state.gamma.iter().all(|g| *g == 1.0));
                    assert!(l.state.beta.iter().all(|b| *b == 0.0));
                }
                _ => {}
            }
        }
    }

    #[test]
    fn init_variance_matches_fan_in() {
        let net = build_model(&ModelSpec::new(Variant::Fcn, 5)).unwrap();
        let Layer::Conv(l) = &net.layers[net.rows[1].start] else {
            panic!("row 2 is a conv");
        };
        let w = &l.params.weights;
        assert!(w.len() >= 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let target = 1.0 / (16.0 * 40.0);
        assert!((var / target - 1.0).abs() < 0.1, "{var} vs {target}");
    }

    #[test]
    fn backward_one_is_lighter_than_fcn() {
        let fcn = build_model(&ModelSpec::new(Variant::Fcn, 0)).unwrap();
        let b1 = build_model(&ModelSpec::new(Variant::Backward(1), 0)).unwrap();
        assert!(b1.parameter_count() < fcn.parameter_count());
    }

    #[test]
    fn describe_has_thirteen_layer_rows() {
        let net = build_model(&ModelSpec::new(Variant::Backward(1), 0)).unwrap();
        let kv = net.describe_kv();
        let rows: Vec<&str> = kv.lines().filter(|l| l.starts_with("row=")).collect();
        assert_eq!(rows.len(), 14);
        assert!(rows[5].contains("kind=dwt"));
        assert!(rows[8].contains("kind=idwt"));
        assert!(rows[4].contains("kind=conv"));
        assert!(rows[9].contains("kind=tconv"));
        assert!(net.describe().contains("parameters="));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut spec = ModelSpec::new(Variant::Backward(1), 9);
        spec.input_length = 64;
        let net = build_model(&spec).unwrap();
        let bytes = net.to_bytes();
        let back = Network::from_bytes(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_bytes(), bytes);

        let mut bad = bytes.clone();
        bad[8] = 99;
        assert!(Network::from_bytes(&bad).is_err());
        assert!(Network::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn stateless_infer_matches_infer_forward() {
        let mut spec = ModelSpec::new(Variant::Forward(2), 4);
        spec.input_length = 64;
        let mut net = build_model(&spec).unwrap();
        let x = Tensor3::new(
            3,
            64,
            1,
            (0..192).map(|i| (i as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        // move the running statistics away from their initial values
        net.forward(&x, &ForwardCtx::train(2)).unwrap();
        let a = net.forward(&x, &ForwardCtx::infer()).unwrap();
        let b = net.infer(&x).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn network_backward_matches_finite_differences() {
        let mut spec = ModelSpec::new(Variant::Backward(2), 8);
        spec.input_length = 32;
        spec.encoder_channels = [4, 2, 2, 2, 4];
        spec.kernel_conv = 4;
        spec.kernel_wavelet_branch = 2;
        let mut net = build_model(&spec).unwrap();
        let x = Tensor3::new(2, 32, 1, (0..64).map(|i| (i as f64 * 0.71).cos()).collect()).unwrap();
        let ctx = ForwardCtx::train(3);
        let probe = net.forward(&x, &ctx).unwrap().map(|v| v.sin() + 0.3);
        net.zero_grad();
        let gx = net.backward(&probe).unwrap();
        let objective = |net: &mut Network, x: &Tensor3| {
            let y = net.clone().forward(x, &ctx).unwrap();
            y.dot(&probe)
        };
        let h = 1e-5;
        for i in [0, 5, 17, 40, 63] {
            let mut up = x.clone();
            up.data_mut()[i] += h;
            let mut down = x.clone();
            down.data_mut()[i] -= h;
            let fd = (objective(&mut net, &up) - objective(&mut net, &down)) / (2.0 * h);
            let a = gx.data()[i];
            assert!(
                (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6) < 1e-4,
                "{i}: {a} vs {fd}"
            );
        }
        let grads: Vec<Vec<f64>> = net.param_slots().iter().map(|s| s.grad.to_vec()).collect();
        for slot in [0, 3, grads.len() - 1] {
            let mut probe_net = net.clone();
            let orig = probe_net.param_slots()[slot].value[0];
            probe_net.param_slots()[slot].value[0] = orig + h;
            let up = objective(&mut probe_net, &x);
            probe_net.param_slots()[slot].value[0] = orig - h;
            let down = objective(&mut probe_net, &x);
            let fd = (up - down) / (2.0 * h);
            let a = grads[slot][0];
            assert!(
                (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6) < 1e-4,
                "slot {slot}: {a} vs {fd}"
            );
        }
    }
}
