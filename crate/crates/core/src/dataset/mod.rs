//! Signal ingestion, reference preprocessing, windowing, normalisation, noise
//! mixing and the train / validation / test split.
//!
//! The pipeline per record is
//!
//! 1. zero-phase Butterworth high-pass (0.67 Hz) and low-pass (100 Hz), then a
//!    length-5 moving average ([`preprocess_reference`]);
//! 2. tiling into non-overlapping windows and rejecting windows whose mean
//!    power falls outside the 5th..95th percentile band ([`extract_windows`]);
//! 3. min-max normalisation over the retained windows ([`normalize_per_record`]);
//! 4. a temporal split: windows in the first 90% of the record are training
//!    candidates (the last 20% of that region is validation), the remainder is
//!    test. Windows straddling a boundary are dropped.
//!
//! Noise segments are cut from the same temporal regions of the noise records
//! and scaled to hit an exact SNR ([`mix_noise`]).

mod filter;
mod formats;
mod pairs;
mod synthetic;
pub mod wfdb;

pub use filter::{butterworth, filtfilt, magnitude, moving_average, sosfilt, Biquad, FilterKind};
pub use formats::{
    decode_raw_signal, encode_raw_signal, parse_csv_signal, read_csv_signal, read_raw_signal,
    read_signal_file, write_csv_signal, write_raw_signal, write_signal_file, SignalFormat,
};
pub use pairs::{read_manifest, write_manifest, Manifest, MANIFEST_FORMAT};
pub use synthetic::{synthetic_ecg, synthetic_noise, synthetic_noise_bank, synthetic_records};
pub use wfdb::{read_wfdb_record, write_wfdb_record, WfdbChannel, WfdbHeader};

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nnlayers::Tensor3;
use crate::par;
use crate::rng::stream;

/// Sampling rate of the arrhythmia and noise stress test databases.
pub const MITDB_FS: f64 = 360.0;
pub const WINDOW: usize = 1024;
pub const TRAIN_SNRS_DB: [f64; 5] = [-2.5, 0.0, 2.5, 5.0, 7.5];
pub const EVAL_SNRS_DB: [f64; 7] = [-10.0, -7.0, -3.0, -1.0, 3.0, 7.0, 10.0];
/// Records with paced beats, left out of training and validation.
pub const PACED_RECORDS: [&str; 2] = ["102", "104"];
/// High-pass and low-pass cutoffs of the reference preprocessing.
pub const HIGHPASS_HZ: f64 = 0.67;
pub const LOWPASS_HZ: f64 = 100.0;
pub const FILTER_ORDER: usize = 5;
pub const SMOOTHING_WIDTH: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub name: String,
    pub samples: Vec<f64>,
    pub sampling_rate_hz: f64,
}

impl SignalRecord {
    pub fn new(name: impl Into<String>, samples: Vec<f64>, sampling_rate_hz: f64) -> Result<Self> {
        let name = name.into();
        if !(sampling_rate_hz > 0.0 && sampling_rate_hz.is_finite()) {
            return Err(Error::invalid(format!(
                "record {name}: sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::invalid(format!("record {name} has no samples")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "record {name}: sample {i} is not finite"
            )));
        }
        Ok(SignalRecord {
            name,
            samples,
            sampling_rate_hz,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub window: usize,
    pub train_per_record: usize,
    pub val_per_record: usize,
    /// `None` keeps every test window.
    pub test_per_record: Option<usize>,
    /// Records used for testing only.
    pub exclude_train: Vec<String>,
    pub train_snrs: Vec<f64>,
    pub eval_snrs: Vec<f64>,
    /// Window power percentiles outside which windows are rejected.
    pub percentiles: (f64, f64),
    /// Trailing fraction of each record used for testing.
    pub test_fraction: f64,
    /// Trailing fraction of the training region used for validation.
    pub val_fraction: f64,
    /// Min-max rescale each noisy input window after mixing.
    pub renormalize_noisy: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            window: WINDOW,
            train_per_record: 160,
            val_per_record: 40,
            test_per_record: None,
            exclude_train: PACED_RECORDS.iter().map(|s| s.to_string()).collect(),
            train_snrs: TRAIN_SNRS_DB.to_vec(),
            eval_snrs: EVAL_SNRS_DB.to_vec(),
            percentiles: (5.0, 95.0),
            test_fraction: 0.1,
            val_fraction: 0.2,
            renormalize_noisy: false,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.window == 0 {
            return bad("window must be positive");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        let (lo, hi) = self.percentiles;
        if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo > hi {
            return bad("percentiles must satisfy 0 <= low <= high <= 100");
        }
        if self.train_snrs.is_empty() || self.eval_snrs.is_empty() {
            return bad("SNR sets must not be empty");
        }
        if self
            .train_snrs
            .iter()
            .chain(&self.eval_snrs)
            .any(|v| !v.is_finite())
        {
            return bad("SNR values must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Train,
    Validation,
    Test,
}

impl Role {
    pub fn name(&self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Validation => "validation",
            Role::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "validation" => Ok(Role::Validation),
            "test" => Ok(Role::Test),
            _ => Err(Error::invalid(format!("unknown role '{s}'"))),
        }
    }

    fn tag(&self) -> u64 {
        *self as u64
    }
}

/// Equal-length windows with their `(record, start sample)` provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<Vec<f64>>,
    pub provenance: Vec<(String, usize)>,
    /// `None` until the set has been split.
    pub role: Option<Role>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Mean square of a window.
pub fn window_power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Percentile of sorted data with linear interpolation between closest ranks
/// (rank `p / 100 * (n - 1)`).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Tiles the record into non-overlapping windows and keeps those whose power
/// lies within `[p_low, p_high]` (inclusive, percentiles by linear
/// interpolation). Inclusive bounds keep every window when all powers are equal.
pub fn extract_windows(
    record: &SignalRecord,
    width: usize,
    percentiles: (f64, f64),
) -> Result<WindowSet> {
    if width == 0 || record.samples.len() < width {
        return Err(Error::invalid(format!(
            "record {} has {} samples, shorter than one window of {width}",
            record.name,
            record.samples.len()
        )));
    }
    let starts: Vec<usize> = (0..record.samples.len() / width)
        .map(|i| i * width)
        .collect();
    let powers: Vec<f64> = starts
        .iter()
        .map(|&s| window_power(&record.samples[s..s + width]))
        .collect();
    let mut sorted = powers.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, percentiles.0);
    let hi = percentile(&sorted, percentiles.1);
    let mut set = WindowSet {
        windows: Vec::new(),
        provenance: Vec::new(),
        role: None,
    };
    for (&s, &p) in starts.iter().zip(&powers) {
        if p >= lo && p <= hi {
            set.windows.push(record.samples[s..s + width].to_vec());
            set.provenance.push((record.name.clone(), s));
        }
    }
    Ok(set)
}

/// Reference preprocessing: zero-phase 5th-order Butterworth high-pass at
/// 0.67 Hz and low-pass at 100 Hz, then a centred length-5 moving average.
/// The low-pass stage is skipped when 100 Hz is at or above Nyquist.
pub fn preprocess_reference(record: &SignalRecord) -> SignalRecord {
    let fs = record.sampling_rate_hz;
    let pad = (3.0 * fs) as usize;
    let hp = butterworth(FILTER_ORDER, HIGHPASS_HZ, fs, FilterKind::HighPass);
    let mut x = filtfilt(&hp, &record.samples, pad);
    if LOWPASS_HZ < fs / 2.0 {
        let lp = butterworth(FILTER_ORDER, LOWPASS_HZ, fs, FilterKind::LowPass);
        x = filtfilt(&lp, &x, pad);
    }
    SignalRecord {
        name: record.name.clone(),
        samples: moving_average(&x, SMOOTHING_WIDTH),
        sampling_rate_hz: fs,
    }
}

/// Min-max scaling to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    pub min: f64,
    pub max: f64,
}

impl NormalizationParams {
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let span = self.max - self.min;
        x.iter().map(|v| (v - self.min) / span).collect()
    }

    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        let span = self.max - self.min;
        y.iter().map(|v| v * span + self.min).collect()
    }

    pub fn fit(windows: &[Vec<f64>]) -> Result<Self> {
        let (min, max) = windows
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if !(max > min) {
            return Err(Error::invalid(
                "cannot normalise a constant (or empty) record",
            ));
        }
        Ok(NormalizationParams { min, max })
    }
}

/// Scales every window of one record by the record-wide min and max.
pub fn normalize_per_record(set: &WindowSet) -> Result<(WindowSet, NormalizationParams)> {
    let params = NormalizationParams::fit(&set.windows).map_err(|_| {
        let name = set
            .provenance
            .first()
            .map_or("<empty>", |(n, _)| n.as_str());
        Error::invalid(format!(
            "record {name}: cannot normalise a constant or empty record"
        ))
    })?;
    let out = WindowSet {
        windows: set.windows.iter().map(|w| params.normalize(w)).collect(),
        provenance: set.provenance.clone(),
        role: set.role,
    };
    Ok((out, params))
}

/// `alpha` such that `clean + alpha * noise` has the requested SNR.
pub fn noise_scale(clean: &[f64], noise: &[f64], target_snr_db: f64) -> Result<f64> {
    if clean.len() != noise.len() {
        return Err(Error::invalid(format!(
            "clean ({}) and noise ({}) lengths differ",
            clean.len(),
            noise.len()
        )));
    }
    let pn = window_power(noise);
    if !(pn > 0.0) {
        return Err(Error::invalid("noise segment has zero power"));
    }
    let pc = window_power(clean);
    Ok((pc / (pn * 10f64.powf(target_snr_db / 10.0))).sqrt())
}

/// `clean + alpha * noise` with `alpha = sqrt(P_clean / (P_noise * 10^(snr / 10)))`.
pub fn mix_noise(clean: &[f64], noise: &[f64], target_snr_db: f64) -> Result<Vec<f64>> {
    let alpha = noise_scale(clean, noise, target_snr_db)?;
    Ok(clean
        .iter()
        .zip(noise)
        .map(|(c, n)| c + alpha * n)
        .collect())
}

/// `10 log10(P_clean / P_noise)` for an additive noise component.
pub fn snr_db(clean: &[f64], noise_component: &[f64]) -> f64 {
    10.0 * (window_power(clean) / window_power(noise_component)).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseKind {
    Bw = 0,
    Em = 1,
    Ma = 2,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Bw, NoiseKind::Em, NoiseKind::Ma];

    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Bw => "BW",
            NoiseKind::Em => "EM",
            NoiseKind::Ma => "MA",
        }
    }

    pub fn from_index(i: u8) -> Result<Self> {
        NoiseKind::ALL
            .get(i as usize)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown noise kind {i}")))
    }
}

/// One noise signal per kind, mean-removed.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBank {
    signals: [Vec<f64>; 3],
}

impl NoiseBank {
    pub fn new(bw: Vec<f64>, em: Vec<f64>, ma: Vec<f64>) -> Result<Self> {
        let mut signals = [bw, em, ma];
        for (kind, s) in NoiseKind::ALL.iter().zip(signals.iter_mut()) {
            if s.is_empty() {
                return Err(Error::invalid(format!(
                    "{} noise signal is empty",
                    kind.name()
                )));
            }
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            s.iter_mut().for_each(|v| *v -= mean);
        }
        Ok(NoiseBank { signals })
    }

    pub fn get(&self, kind: NoiseKind) -> &[f64] {
        &self.signals[kind as usize]
    }
}

/// A clean reference window and its noisy counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub record: String,
    pub start: usize,
    pub noise: NoiseKind,
    pub noise_start: usize,
    pub snr_db: f64,
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub role: Role,
    pub window: usize,
    pub pairs: Vec<Pair>,
}

impl PairSet {
    pub fn new(role: Role, window: usize) -> Self {
        PairSet {
            role,
            window,
            pairs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(noisy, clean)` tensors of shape `(idx.len(), window, 1)`.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor3, Tensor3)> {
        let mut noisy = Vec::with_capacity(idx.len() * self.window);
        let mut clean = Vec::with_capacity(idx.len() * self.window);
        for &i in idx {
            let p = self
                .pairs
                .get(i)
                .ok_or_else(|| Error::invalid(format!("pair index {i} out of range")))?;
            noisy.extend_from_slice(&p.noisy);
            clean.extend_from_slice(&p.clean);
        }
        Ok((
            Tensor3::new(idx.len(), self.window, 1, noisy)?,
            Tensor3::new(idx.len(), self.window, 1, clean)?,
        ))
    }

    /// Distinct SNR values in first-seen order.
    pub fn snr_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for p in &self.pairs {
            if !out.contains(&p.snr_db) {
                out.push(p.snr_db);
            }
        }
        out
    }

    /// Indices of pairs mixed at `snr_db`.
    pub fn indices_at(&self, snr_db: f64) -> Vec<usize> {
        (0..self.pairs.len())
            .filter(|&i| self.pairs[i].snr_db == snr_db)
            .collect()
    }
}

/// Per-record bookkeeping written to the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSummary {
    pub name: String,
    pub samples: usize,
    pub windows: usize,
    pub retained: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub excluded_from_training: bool,
    pub norm: NormalizationParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub train: PairSet,
    pub validation: PairSet,
    pub test: PairSet,
    pub records: Vec<RecordSummary>,
}

/// Retained, normalised windows of one record split by region.
struct RecordWindows {
    summary: RecordSummary,
    train: Vec<(usize, Vec<f64>)>,
    validation: Vec<(usize, Vec<f64>)>,
    test: Vec<(usize, Vec<f64>)>,
}

/// `[0, val_start)`, `[val_start, test_start)`, `[test_start, n)`.
fn region_bounds(n: usize, cfg: &DatasetConfig) -> (usize, usize) {
    let test_start = ((1.0 - cfg.test_fraction) * n as f64).floor() as usize;
    let val_start = ((1.0 - cfg.val_fraction) * test_start as f64).floor() as usize;
    (val_start, test_start)
}

fn split_record(record: &SignalRecord, cfg: &DatasetConfig) -> Result<RecordWindows> {
    let clean = preprocess_reference(record);
    let set = extract_windows(&clean, cfg.window, cfg.percentiles)?;
    let (set, norm) = normalize_per_record(&set)?;
    let n = record.samples.len();
    let (val_start, test_start) = region_bounds(n, cfg);
    let mut out = RecordWindows {
        summary: RecordSummary {
            name: record.name.clone(),
            samples: n,
            windows: n / cfg.window,
            retained: set.len(),
            train: 0,
            validation: 0,
            test: 0,
            excluded_from_training: cfg.exclude_train.contains(&record.name),
            norm,
        },
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (w, (_, start)) in set.windows.into_iter().zip(set.provenance) {
        let end = start + cfg.window;
        if end <= val_start {
            out.train.push((start, w));
        } else if start >= val_start && end <= test_start {
            out.validation.push((start, w));
        } else if start >= test_start {
            out.test.push((start, w));
        }
    }
    Ok(out)
}

/// Seeded choice of `k` candidates, kept in temporal order.
fn choose(
    candidates: Vec<(usize, Vec<f64>)>,
    k: Option<usize>,
    rng: &mut impl Rng,
) -> Vec<(usize, Vec<f64>)> {
    match k {
        Some(k) if k < candidates.len() => {
            let mut idx = sample(rng, candidates.len(), k).into_vec();
            idx.sort_unstable();
            let mut slots: Vec<Option<(usize, Vec<f64>)>> =
                candidates.into_iter().map(Some).collect();
            idx.into_iter()
                .map(|i| slots[i].take().expect("indices are distinct"))
                .collect()
        }
        _ => candidates,
    }
}

fn noise_region(len: usize, role: Role, cfg: &DatasetConfig) -> (usize, usize) {
    let (val_start, test_start) = region_bounds(len, cfg);
    match role {
        Role::Train => (0, val_start),
        Role::Validation => (val_start, test_start),
        Role::Test => (test_start, len),
    }
}

fn make_pair(
    record: &str,
    start: usize,
    clean: &[f64],
    snr_db: f64,
    role: Role,
    noise: &NoiseBank,
    cfg: &DatasetConfig,
    rng: &mut impl Rng,
) -> Result<Pair> {
    let kind = NoiseKind::ALL[rng.gen_range(0..3)];
    let signal = noise.get(kind);
    let (lo, hi) = noise_region(signal.len(), role, cfg);
    if hi < lo + cfg.window {
        return Err(Error::invalid(format!(
            "{} noise has {} samples in its {} region, fewer than one window",
            kind.name(),
            hi.saturating_sub(lo),
            role.name()
        )));
    }
    let noise_start = rng.gen_range(lo..=hi - cfg.window);
    let segment = &signal[noise_start..noise_start + cfg.window];
    let mut noisy = mix_noise(clean, segment, snr_db)?;
    if cfg.renormalize_noisy {
        let p = NormalizationParams::fit(std::slice::from_ref(&noisy))?;
        noisy = p.normalize(&noisy);
    }
    Ok(Pair {
        record: record.to_string(),
        start,
        noise: kind,
        noise_start,
        snr_db,
        clean: clean.to_vec(),
        noisy,
    })
}

const SELECT_TAG: u64 = 0x5e1ec7;
const PAIR_TAG: u64 = 0x9a12;

/// Builds the three pair sets. Records are preprocessed here; pass raw signals.
///
/// Every random choice draws from a stream keyed by `(seed, purpose, record,
/// window, ...)`, so the result does not depend on the execution mode and
/// adding a record does not disturb the others.
pub fn build_experiment_dataset(
    cfg: &DatasetConfig,
    records: &[SignalRecord],
    noise: &NoiseBank,
    seed: u64,
) -> Result<ExperimentData> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::invalid("no records given"));
    }
    for (i, r) in records.iter().enumerate() {
        if records[..i].iter().any(|o| o.name == r.name) {
            return Err(Error::invalid(format!("duplicate record name {}", r.name)));
        }
    }
    let split: Vec<RecordWindows> =
        par::map_range(records.len(), |i| split_record(&records[i], cfg))
            .into_iter()
            .collect::<Result<_>>()?;

    let mut data = ExperimentData {
        train: PairSet::new(Role::Train, cfg.window),
        validation: PairSet::new(Role::Validation, cfg.window),
        test: PairSet::new(Role::Test, cfg.window),
        records: Vec::new(),
    };
    for (ri, rw) in split.into_iter().enumerate() {
        let mut summary = rw.summary;
        let name = summary.name.clone();
        let mut select = stream(seed, &[SELECT_TAG, ri as u64]);
        let mut roles = vec![(
            Role::Test,
            choose(rw.test, cfg.test_per_record, &mut select),
        )];
        if !summary.excluded_from_training {
            for (role, cands, want) in [
                (Role::Train, rw.train, cfg.train_per_record),
                (Role::Validation, rw.validation, cfg.val_per_record),
            ] {
                if cands.len() < want {
                    return Err(Error::Shortage {
                        record: name,
                        role: role.name().into(),
                        available: cands.len(),
                        requested: want,
                    });
                }
                roles.push((role, choose(cands, Some(want), &mut select)));
            }
        }
        for (role, chosen) in roles {
            for (wi, (start, clean)) in chosen.iter().enumerate() {
                let snrs: Vec<(usize, f64)> = match role {
                    Role::Test => cfg.eval_snrs.iter().copied().enumerate().collect(),
                    _ => {
                        let mut r = stream(
                            seed,
                            &[PAIR_TAG, role.tag(), ri as u64, wi as u64, u64::MAX],
                        );
                        vec![(0, cfg.train_snrs[r.gen_range(0..cfg.train_snrs.len())])]
                    }
                };
                for (si, snr) in snrs {
                    let mut rng = stream(
                        seed,
                        &[PAIR_TAG, role.tag(), ri as u64, wi as u64, si as u64],
                    );
                    let pair = make_pair(&name, *start, clean, snr, role, noise, cfg, &mut rng)?;
                    match role {
                        Role::Train => data.train.pairs.push(pair),
                        Role::Validation => data.validation.pairs.push(pair),
                        Role::Test => data.test.pairs.push(pair),
                    }
                }
            }
            match role {
                Role::Train => summary.train = chosen.len(),
                Role::Validation => summary.validation = chosen.len(),
                Role::Test => summary.test = chosen.len(),
            }
        }
        data.records.push(summary);
    }
    Ok(data)
}
