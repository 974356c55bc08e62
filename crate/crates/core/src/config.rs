//! Line-oriented `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! variant = backward
//! k = 1
//! epochs = 200
//! train_snrs = -2.5, 0, 2.5, 5, 7.5
//! ```
//!
//! Unknown keys are rejected with the key named. Later assignments win, so
//! command-line overrides are applied with [`ExperimentConfig::set`] after the
//! file is loaded.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::architecture::{ModelSpec, Variant};
use crate::dataset::{
    read_signal_file, synthetic_noise_bank, synthetic_records, DatasetConfig, NoiseBank,
    SignalRecord, EVAL_SNRS_DB, MITDB_FS, TRAIN_SNRS_DB,
};
use crate::error::{Error, Result};

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct KvEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits `text` into entries, skipping blank lines and `#` comments.
/// `source` is used in error messages.
pub fn parse_kv(text: &str, source: &str) -> Result<Vec<KvEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{source}:{}: expected 'key = value', got '{line}'",
                i + 1
            )));
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("{source}:{}: empty key", i + 1)));
        }
        out.push(KvEntry {
            key: key.to_string(),
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

/// Where prepare reads its signals from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    /// Record and noise files on disk.
    Files,
    /// Generated pseudo-ECG and noise; no external files needed.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub variant: String,
    pub k: usize,
    pub variants: Vec<Variant>,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub repetitions: usize,
    pub input_length: usize,
    pub dropout: f64,
    pub source: DataSource,
    pub data_dir: Option<PathBuf>,
    pub records: Vec<String>,
    pub noise_dir: Option<PathBuf>,
    pub noise_records: [String; 3],
    pub synthetic_records: usize,
    pub synthetic_seconds: f64,
    pub manifest: Option<PathBuf>,
    pub dataset: DatasetConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variant: "backward".into(),
            k: 1,
            variants: default_variants(),
            seed: 0,
            epochs: 200,
            batch_size: 200,
            learning_rate: 1e-4,
            repetitions: 1,
            input_length: 1024,
            dropout: 0.1,
            source: DataSource::Files,
            data_dir: None,
            records: Vec::new(),
            noise_dir: None,
            noise_records: ["bw".into(), "em".into(), "ma".into()],
            synthetic_records: 10,
            synthetic_seconds: 600.0,
            manifest: None,
            dataset: DatasetConfig::default(),
        }
    }
}

/// FCN, F1-F4, B1-B4 and all-wavelet: the ten rows of the result tables.
pub fn default_variants() -> Vec<Variant> {
    let mut v = vec![Variant::Fcn];
    v.extend((1..=4).map(Variant::Forward));
    v.extend((1..=4).map(Variant::Backward));
    v.push(Variant::AllWavelet);
    v
}

/// Accepted keys, in the order they are written back out.
pub const KEYS: &[&str] = &[
    "variant",
    "k",
    "variants",
    "seed",
    "epochs",
    "batch_size",
    "learning_rate",
    "repetitions",
    "input_length",
    "dropout",
    "source",
    "data_dir",
    "records",
    "noise_dir",
    "noise_records",
    "synthetic_records",
    "synthetic_seconds",
    "manifest",
    "train_per_record",
    "val_per_record",
    "test_per_record",
    "exclude_train",
    "train_snrs",
    "eval_snrs",
    "percentile_low",
    "percentile_high",
    "test_fraction",
    "val_fraction",
    "renormalize_noisy",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value '{v}' for key '{key}'")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn strings(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid boolean '{v}' for key '{key}'"
        ))),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// Parses a table label: `FCN`, `F1`..`F5`, `B1`..`B5`, `ALL`.
pub fn parse_variant_label(label: &str) -> Result<Variant> {
    let l = label.trim().to_ascii_uppercase();
    let v = match l.as_str() {
        "FCN" | "CNN" => Variant::Fcn,
        "ALL" => Variant::AllWavelet,
        _ => {
            let (family, k) = l.split_at(1.min(l.len()));
            let k: usize = k.parse().map_err(|_| {
                Error::Config(format!(
                    "invalid variant label '{label}' (expected FCN, Fk, Bk or ALL)"
                ))
            })?;
            match family {
                "F" => Variant::Forward(k),
                "B" => Variant::Backward(k),
                _ => {
                    return Err(Error::Config(format!(
                        "invalid variant label '{label}' (expected FCN, Fk, Bk or ALL)"
                    )))
                }
            }
        }
    };
    v.validate()?;
    Ok(v)
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    pub fn from_str_named(text: &str, source: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for e in parse_kv(text, source)? {
            cfg.set(&e.key, &e.value).map_err(|err| match err {
                Error::Config(msg) => Error::Config(format!("{source}:{}: {msg}", e.line)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_named(&text, &path.display().to_string())
    }

    /// Assigns one key. Unknown keys and malformed values are errors naming the key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let d = &mut self.dataset;
        match key {
            "variant" => {
                Variant::parse(v, 1)?;
                self.variant = v.to_ascii_lowercase();
            }
            "k" => self.k = num(key, v)?,
            "variants" => {
                self.variants = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(parse_variant_label)
                    .collect::<Result<_>>()?
            }
            "seed" => self.seed = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "learning_rate" => self.learning_rate = num(key, v)?,
            "repetitions" => self.repetitions = num(key, v)?,
            "input_length" => self.input_length = num(key, v)?,
            "dropout" => self.dropout = num(key, v)?,
            "source" => {
                self.source = match v.to_ascii_lowercase().as_str() {
                    "files" => DataSource::Files,
                    "synthetic" => DataSource::Synthetic,
                    _ => {
                        return Err(Error::Config(format!(
                            "invalid value '{v}' for key 'source' (expected files or synthetic)"
                        )))
                    }
                }
            }
            "data_dir" => self.data_dir = opt_path(v),
            "records" => self.records = strings(v),
            "noise_dir" => self.noise_dir = opt_path(v),
            "noise_records" => {
                let names = strings(v);
                if names.len() != 3 {
                    return Err(Error::Config(format!(
                        "key 'noise_records' needs three names (BW, EM, MA), got {}",
                        names.len()
                    )));
                }
                self.noise_records = [names[0].clone(), names[1].clone(), names[2].clone()];
            }
            "synthetic_records" => self.synthetic_records = num(key, v)?,
            "synthetic_seconds" => self.synthetic_seconds = num(key, v)?,
            "manifest" => self.manifest = opt_path(v),
            "train_per_record" => d.train_per_record = num(key, v)?,
            "val_per_record" => d.val_per_record = num(key, v)?,
            "test_per_record" => {
                let n: usize = num(key, v)?;
                d.test_per_record = (n > 0).then_some(n);
            }
            "exclude_train" => d.exclude_train = strings(v),
            "train_snrs" => d.train_snrs = list(key, v)?,
            "eval_snrs" => d.eval_snrs = list(key, v)?,
            "percentile_low" => d.percentiles.0 = num(key, v)?,
            "percentile_high" => d.percentiles.1 = num(key, v)?,
            "test_fraction" => d.test_fraction = num(key, v)?,
            "val_fraction" => d.val_fraction = num(key, v)?,
            "renormalize_noisy" => d.renormalize_noisy = boolean(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn model_variant(&self) -> Result<Variant> {
        Variant::parse(&self.variant, self.k)
    }

    pub fn model_spec(&self, variant: Variant, seed: u64) -> ModelSpec {
        let mut spec = ModelSpec::new(variant, seed);
        spec.input_length = self.input_length;
        spec.dropout_rate = self.dropout;
        spec
    }

    /// Cross-field checks that a single `set` cannot make.
    pub fn validate(&self) -> Result<()> {
        self.model_variant()?;
        if self.epochs == 0 || self.batch_size == 0 || self.repetitions == 0 {
            return Err(Error::Config(
                "epochs, batch_size and repetitions must be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be non-negative".into()));
        }
        self.dataset_config().validate()
    }

    /// Dataset settings with the window width tied to the model input length.
    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            window: self.input_length,
            ..self.dataset.clone()
        }
    }

    /// Writes every key back out; `from_str_named(to_kv())` reproduces `self`.
    pub fn to_kv(&self) -> String {
        let d = &self.dataset;
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let labels: Vec<String> = self.variants.iter().map(Variant::label).collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("variant", self.variant.clone());
        kv("k", self.k.to_string());
        kv("variants", labels.join(","));
        kv("seed", self.seed.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("repetitions", self.repetitions.to_string());
        kv("input_length", self.input_length.to_string());
        kv("dropout", self.dropout.to_string());
        kv(
            "source",
            match self.source {
                DataSource::Files => "files".into(),
                DataSource::Synthetic => "synthetic".into(),
            },
        );
        kv("data_dir", path(&self.data_dir));
        kv("records", self.records.join(","));
        kv("noise_dir", path(&self.noise_dir));
        kv("noise_records", self.noise_records.join(","));
        kv("synthetic_records", self.synthetic_records.to_string());
        kv("synthetic_seconds", self.synthetic_seconds.to_string());
        kv("manifest", path(&self.manifest));
        kv("train_per_record", d.train_per_record.to_string());
        kv("val_per_record", d.val_per_record.to_string());
        kv(
            "test_per_record",
            d.test_per_record.unwrap_or(0).to_string(),
        );
        kv("exclude_train", d.exclude_train.join(","));
        kv("train_snrs", join(&d.train_snrs));
        kv("eval_snrs", join(&d.eval_snrs));
        kv("percentile_low", d.percentiles.0.to_string());
        kv("percentile_high", d.percentiles.1.to_string());
        kv("test_fraction", d.test_fraction.to_string());
        kv("val_fraction", d.val_fraction.to_string());
        kv("renormalize_noisy", d.renormalize_noisy.to_string());
        s
    }
}

/// Extensions tried, in order, when a record is named without one.
pub const SIGNAL_EXTENSIONS: [&str; 4] = ["hea", "csv", "f32", "ecgf"];

/// First channel of `dir/name.<ext>` for the first extension that exists.
pub fn find_signal(dir: &Path, name: &str) -> Result<SignalRecord> {
    let direct = dir.join(name);
    let candidates: Vec<PathBuf> = if direct.extension().is_some() && direct.is_file() {
        vec![direct]
    } else {
        SIGNAL_EXTENSIONS
            .iter()
            .map(|e| dir.join(format!("{name}.{e}")))
            .collect()
    };
    let path = candidates.iter().find(|p| p.is_file()).ok_or_else(|| {
        Error::invalid(format!(
            "no signal file for record '{name}' in {} (tried .{})",
            dir.display(),
            SIGNAL_EXTENSIONS.join(", .")
        ))
    })?;
    let mut channels = read_signal_file(path)?;
    let mut first = channels.swap_remove(0);
    first.name = name.to_string();
    Ok(first)
}

impl ExperimentConfig {
    /// Loads (or generates) the ECG records and the noise bank.
    pub fn load_inputs(&self) -> Result<(Vec<SignalRecord>, NoiseBank)> {
        match self.source {
            DataSource::Synthetic => {
                if self.synthetic_records == 0 || !(self.synthetic_seconds > 0.0) {
                    return Err(Error::Config(
                        "synthetic_records and synthetic_seconds must be positive".into(),
                    ));
                }
                let records = synthetic_records(
                    self.synthetic_records,
                    self.synthetic_seconds,
                    MITDB_FS,
                    self.seed,
                );
                let n = (self.synthetic_seconds * MITDB_FS).round() as usize;
                let bank = synthetic_noise_bank(n, MITDB_FS, self.seed ^ 0x6e6f697365);
                Ok((records, bank))
            }
            DataSource::Files => {
                let dir = self
                    .data_dir
                    .as_deref()
                    .ok_or_else(|| Error::Config("source = files needs 'data_dir'".into()))?;
                if self.records.is_empty() {
                    return Err(Error::Config(
                        "source = files needs a 'records' list".into(),
                    ));
                }
                let noise_dir = self.noise_dir.as_deref().unwrap_or(dir);
                let records = self
                    .records
                    .iter()
                    .map(|r| find_signal(dir, r))
                    .collect::<Result<Vec<_>>>()?;
                let [bw, em, ma] = &self.noise_records;
                let bank = NoiseBank::new(
                    find_signal(noise_dir, bw)?.samples,
                    find_signal(noise_dir, em)?.samples,
                    find_signal(noise_dir, ma)?.samples,
                )?;
                Ok((records, bank))
            }
        }
    }
}

/// Default training and evaluation SNR sets, for documentation output.
pub fn default_snr_sets() -> (&'static [f64], &'static [f64]) {
    (&TRAIN_SNRS_DB, &EVAL_SNRS_DB)
}
