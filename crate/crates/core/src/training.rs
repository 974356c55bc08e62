//! MSE loss, Adam, the epoch loop and the variant sweep.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::architecture::{build_model, init_parameters, ModelSpec, Network, Variant};
use crate::dataset::{ExperimentData, PairSet};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_model, MetricsReport, SnrMetrics};
use crate::nnlayers::{ForwardCtx, ParamSlot, Tensor3};
use crate::par;
use crate::rng::{derive_seed, stream};

/// Mean squared error over all elements and its gradient `2 (pred - target) / n`.
pub fn mse_loss(pred: &Tensor3, target: &Tensor3) -> Result<(f64, Tensor3)> {
    if !pred.same_shape(target) {
        return Err(Error::shape(format!(
            "loss inputs differ in shape: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.data().len() as f64;
    let diff: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| p - t)
        .collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let (b, l, c) = pred.shape();
    let grad = Tensor3::new(b, l, c, diff.into_iter().map(|d| 2.0 * d / n).collect())?;
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Moments are sized on the first step.
    pub fn new(lr: f64) -> Self {
        AdamState {
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every slot.
pub fn adam_step(params: &mut [ParamSlot<'_>], state: &mut AdamState) -> Result<()> {
    if state.t == 0 && state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(Error::shape(format!(
            "optimizer tracks {} arrays, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.value.len() != p.grad.len() || p.value.len() != state.m[i].len() {
            return Err(Error::shape(format!(
                "parameter array {i}: {} values, {} gradients, {} moments",
                p.value.len(),
                p.grad.len(),
                state.m[i].len()
            )));
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(state.t as f64);
    let c2 = 1.0 - b2.powf(state.t as f64);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        for j in 0..p.value.len() {
            let g = p.grad[j];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p.value[j] -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Record wall time per epoch; off gives byte-stable history files.
    pub record_time: bool,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            batch_size: 200,
            epochs: 200,
            learning_rate: 1e-4,
            seed,
            record_time: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch_size and epochs must be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning_rate must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index of the epoch whose parameters were kept.
    pub best_epoch: usize,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,seconds";

impl TrainHistory {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs[self.best_epoch].val_loss
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{HISTORY_HEADER}\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                e.epoch, e.train_loss, e.val_loss, e.seconds
            );
        }
        s
    }

    /// The best epoch is recomputed as the earliest minimum validation loss.
    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Text {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, h)| h.trim()) != Some(HISTORY_HEADER) {
            return Err(err(1, format!("expected header '{HISTORY_HEADER}'")));
        }
        let mut epochs = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(err(i + 1, format!("expected 4 fields, got {}", f.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| err(i + 1, format!("invalid number '{s}'")))
            };
            epochs.push(EpochRecord {
                epoch: f[0]
                    .parse()
                    .map_err(|_| err(i + 1, format!("invalid epoch '{}'", f[0])))?,
                train_loss: num(f[1])?,
                val_loss: num(f[2])?,
                seconds: num(f[3])?,
            });
        }
        if epochs.is_empty() {
            return Err(err(1, "history has no epochs".into()));
        }
        let best_epoch = argmin_first(epochs.iter().map(|e| e.val_loss));
        Ok(TrainHistory { epochs, best_epoch })
    }
}

fn argmin_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

const SHUFFLE_TAG: u64 = 0x5f;
const DROPOUT_TAG: u64 = 0xd0;

/// Mean squared error of the network over a pair set in inference mode.
pub fn validation_loss(net: &Network, set: &PairSet, batch: usize) -> Result<f64> {
    let batch = batch.max(1);
    let chunks = set.len().div_ceil(batch);
    let sums = par::map_range(chunks, |c| -> Result<f64> {
        let idx: Vec<usize> = (c * batch..((c + 1) * batch).min(set.len())).collect();
        let (x, y) = set.batch(&idx)?;
        let pred = net.infer(&x)?;
        Ok(pred
            .data()
            .iter()
            .zip(y.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum())
    });
    let mut total = 0.0;
    for s in sums {
        total += s?;
    }
    Ok(total / (set.len() * set.window) as f64)
}

pub fn train(
    net: Network,
    train_set: &PairSet,
    val_set: &PairSet,
    cfg: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    train_observed(net, train_set, val_set, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
///
/// Each epoch reshuffles the training pairs with a stream keyed by
/// `(seed, epoch)`; dropout masks are keyed by `(seed, epoch, batch)`. The
/// parameters after the epoch with the lowest validation loss are returned
/// (earliest epoch on ties).
pub fn train_observed(
    mut net: Network,
    train_set: &PairSet,
    val_set: &PairSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Network, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid(format!(
            "training needs non-empty splits (train {}, validation {})",
            train_set.len(),
            val_set.len()
        )));
    }
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut best = net.clone();
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut stream(cfg.seed, &[SHUFFLE_TAG, epoch as u64]));
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = train_set.batch(idx)?;
            net.zero_grad();
            let ctx = ForwardCtx::train(derive_seed(
                cfg.seed,
                &[DROPOUT_TAG, epoch as u64, b as u64],
            ));
            let pred = net.forward(&x, &ctx)?;
            let (loss, grad) = mse_loss(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            net.backward(&grad)?;
            adam_step(&mut net.param_slots(), &mut adam)?;
            loss_sum += loss * idx.len() as f64;
        }
        net.clear_cache();
        let val_loss = validation_loss(&net, val_set, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
                loss: val_loss,
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            seconds: if cfg.record_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        if epoch == 0 || val_loss < history.best_val_loss() {
            history.best_epoch = epoch;
            best.copy_state_from(&net);
        }
        history.epochs.push(record);
        on_epoch(&record);
    }
    Ok((best, history))
}

/// What to sweep in [`run_ablation`].
#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub variants: Vec<Variant>,
    pub repetitions: usize,
    pub train: TrainConfig,
    pub eval_snrs: Vec<f64>,
    /// Model template; the variant and seed are replaced per run.
    pub model: ModelSpec,
}

/// Progress events from [`run_ablation`].
#[derive(Debug, Clone, Copy)]
pub enum AblationEvent<'a> {
    RunStarted {
        variant: Variant,
        repetition: usize,
    },
    Epoch {
        variant: Variant,
        repetition: usize,
        record: &'a EpochRecord,
    },
    RunFinished {
        variant: Variant,
        repetition: usize,
        metrics: &'a [SnrMetrics],
    },
}

/// Per-run seed; repetition `r` of every variant shares the data seed.
pub fn run_seed(base: u64, repetition: usize) -> u64 {
    derive_seed(base, &[0xab1a, repetition as u64])
}

/// Trains and evaluates every variant `repetitions` times and aggregates the
/// metrics per input SNR. `data(r)` supplies the dataset for repetition `r`,
/// so callers choose whether data selection varies between runs.
pub fn run_ablation(
    cfg: &AblationConfig,
    mut data: impl FnMut(usize) -> Result<ExperimentData>,
    mut on_event: impl FnMut(AblationEvent<'_>),
) -> Result<MetricsReport> {
    if cfg.repetitions == 0 || cfg.variants.is_empty() {
        return Err(Error::Config(
            "ablation needs at least one variant and one repetition".into(),
        ));
    }
    let mut runs: Vec<Vec<Vec<SnrMetrics>>> = vec![Vec::new(); cfg.variants.len()];
    for rep in 0..cfg.repetitions {
        let d = data(rep)?;
        let seed = run_seed(cfg.train.seed, rep);
        for (vi, &variant) in cfg.variants.iter().enumerate() {
            on_event(AblationEvent::RunStarted {
                variant,
                repetition: rep,
            });
            let spec = ModelSpec {
                variant,
                seed,
                ..cfg.model.clone()
            };
            let mut net = build_model(&spec)?;
            init_parameters(&mut net, seed);
            let tc = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let (best, _) = train_observed(net, &d.train, &d.validation, &tc, |record| {
                on_event(AblationEvent::Epoch {
                    variant,
                    repetition: rep,
                    record,
                })
            })?;
            let metrics = evaluate_model(&best, &d.test, &cfg.eval_snrs, tc.batch_size)?;
            on_event(AblationEvent::RunFinished {
                variant,
                repetition: rep,
                metrics: &metrics,
            });
            runs[vi].push(metrics);
        }
    }
    let mut report = MetricsReport::new(&cfg.eval_snrs);
    for (vi, &variant) in cfg.variants.iter().enumerate() {
        report.add_row(variant_id(variant).unwrap_or(vi + 1), variant, &runs[vi])?;
    }
    Ok(report)
}

/// Row number in the published tables: 1 FCN, 2-5 forward k = 1..4, 6-9
/// backward k = 1..4, 10 all-wavelet.
pub fn variant_id(v: Variant) -> Option<usize> {
    match v {
        Variant::Fcn => Some(1),
        Variant::Forward(k) if (1..=4).contains(&k) => Some(1 + k),
        Variant::Backward(k) if (1..=4).contains(&k) => Some(5 + k),
        Variant::AllWavelet => Some(10),
        _ => None,
    }
}
