//! Pair files and the dataset manifest.
//!
//! Pair file (little-endian): magic `b"ECGPAIRS"`, version `u32`, role `u8`,
//! window `u32`, count `u32`, then per pair: name length `u16` + UTF-8 bytes,
//! start `u64`, noise kind `u8`, noise start `u64`, SNR `f64`, `window` clean
//! `f64` values and `window` noisy `f64` values.
//!
//! The manifest is `key = value` text: run settings first, then one `record`
//! line per input record.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{
    DatasetConfig, ExperimentData, NoiseKind, NormalizationParams, Pair, PairSet, RecordSummary,
    Role,
};
use crate::config::parse_kv;
use crate::error::{Error, Result};

pub const PAIRS_MAGIC: &[u8; 8] = b"ECGPAIRS";
pub const PAIRS_VERSION: u32 = 1;
pub const MANIFEST_FORMAT: &str = "wavelet-ae-manifest 1";

impl PairSet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + self.pairs.len() * (40 + 16 * self.window));
        out.extend_from_slice(PAIRS_MAGIC);
        out.extend_from_slice(&PAIRS_VERSION.to_le_bytes());
        out.push(self.role as u8);
        out.extend_from_slice(&(self.window as u32).to_le_bytes());
        out.extend_from_slice(&(self.pairs.len() as u32).to_le_bytes());
        for p in &self.pairs {
            out.extend_from_slice(&(p.record.len() as u16).to_le_bytes());
            out.extend_from_slice(p.record.as_bytes());
            out.extend_from_slice(&(p.start as u64).to_le_bytes());
            out.push(p.noise as u8);
            out.extend_from_slice(&(p.noise_start as u64).to_le_bytes());
            out.extend_from_slice(&p.snr_db.to_le_bytes());
            for v in p.clean.iter().chain(&p.noisy) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(data: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { data, pos: 0, path };
        if r.take(8)? != PAIRS_MAGIC {
            return Err(r.err(0, "bad magic (expected \"ECGPAIRS\")"));
        }
        let version = r.u32()?;
        if version != PAIRS_VERSION {
            return Err(r.err(8, &format!("unsupported version {version}")));
        }
        let role = match r.u8()? {
            0 => Role::Train,
            1 => Role::Validation,
            2 => Role::Test,
            t => return Err(r.err(12, &format!("unknown role tag {t}"))),
        };
        let window = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut set = PairSet::new(role, window);
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let at = r.pos;
            let record = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| r.err(at, "record name is not UTF-8"))?
                .to_string();
            let start = r.u64()? as usize;
            let at = r.pos;
            let noise = NoiseKind::from_index(r.u8()?).map_err(|e| r.err(at, &e.to_string()))?;
            let noise_start = r.u64()? as usize;
            let snr_db = r.f64()?;
            let mut clean = Vec::with_capacity(window);
            for _ in 0..window {
                clean.push(r.f64()?);
            }
            let mut noisy = Vec::with_capacity(window);
            for _ in 0..window {
                noisy.push(r.f64()?);
            }
            set.pairs.push(Pair {
                record,
                start,
                noise,
                noise_start,
                snr_db,
                clean,
                noisy,
            });
        }
        if r.pos != data.len() {
            return Err(r.err(r.pos, "trailing bytes after last pair"));
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        PairSet::from_bytes(&data, path)
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                offset: self.data.len(),
                expected: self.pos + n,
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn err(&self, offset: usize, msg: &str) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            offset,
            msg: msg.to_string(),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// What `prepare` wrote: settings, per-record summaries and pair file names
/// (relative to the manifest's directory).
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub records: Vec<RecordSummary>,
    pub train_file: String,
    pub validation_file: String,
    pub test_file: String,
}

impl Manifest {
    pub fn new(seed: u64, dataset: DatasetConfig, records: Vec<RecordSummary>) -> Self {
        Manifest {
            seed,
            dataset,
            records,
            train_file: "train.pairs".into(),
            validation_file: "validation.pairs".into(),
            test_file: "test.pairs".into(),
        }
    }

    pub fn to_text(&self) -> String {
        let d = &self.dataset;
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("format", MANIFEST_FORMAT.into());
        kv("seed", self.seed.to_string());
        kv("window", d.window.to_string());
        kv("train_per_record", d.train_per_record.to_string());
        kv("val_per_record", d.val_per_record.to_string());
        kv(
            "test_per_record",
            d.test_per_record.map_or("all".into(), |n| n.to_string()),
        );
        kv("exclude_train", d.exclude_train.join(","));
        kv("train_snrs", list(&d.train_snrs));
        kv("eval_snrs", list(&d.eval_snrs));
        kv(
            "percentiles",
            format!("{},{}", d.percentiles.0, d.percentiles.1),
        );
        kv("test_fraction", d.test_fraction.to_string());
        kv("val_fraction", d.val_fraction.to_string());
        kv("renormalize_noisy", d.renormalize_noisy.to_string());
        kv("train_file", self.train_file.clone());
        kv("validation_file", self.validation_file.clone());
        kv("test_file", self.test_file.clone());
        for r in &self.records {
            kv(
                "record",
                format!(
                    "{} samples={} windows={} retained={} train={} validation={} test={} excluded={} min={} max={}",
                    r.name,
                    r.samples,
                    r.windows,
                    r.retained,
                    r.train,
                    r.validation,
                    r.test,
                    r.excluded_from_training,
                    r.norm.min,
                    r.norm.max
                ),
            );
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let source = path.display().to_string();
        let err = |line: usize, msg: String| Error::Text {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut m = Manifest::new(0, DatasetConfig::default(), Vec::new());
        let mut seen_format = false;
        for e in parse_kv(text, &source)? {
            let bad = |what: &str| err(e.line, format!("invalid {what} '{}'", e.value));
            let num = |v: &str| v.trim().parse::<f64>();
            let list = |v: &str| -> std::result::Result<Vec<f64>, std::num::ParseFloatError> {
                if v.trim().is_empty() {
                    return Ok(Vec::new());
                }
                v.split(',').map(num).collect()
            };
            let v = e.value.as_str();
            let d = &mut m.dataset;
            match e.key.as_str() {
                "format" => {
                    if v != MANIFEST_FORMAT {
                        return Err(err(e.line, format!("unsupported manifest format '{v}'")));
                    }
                    seen_format = true;
                }
                "seed" => m.seed = v.parse().map_err(|_| bad("seed"))?,
                "window" => d.window = v.parse().map_err(|_| bad("window"))?,
                "train_per_record" => d.train_per_record = v.parse().map_err(|_| bad("count"))?,
                "val_per_record" => d.val_per_record = v.parse().map_err(|_| bad("count"))?,
                "test_per_record" => {
                    d.test_per_record = match v {
                        "all" => None,
                        _ => Some(v.parse().map_err(|_| bad("count"))?),
                    }
                }
                "exclude_train" => {
                    d.exclude_train = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                }
                "train_snrs" => d.train_snrs = list(v).map_err(|_| bad("SNR list"))?,
                "eval_snrs" => d.eval_snrs = list(v).map_err(|_| bad("SNR list"))?,
                "percentiles" => {
                    let p = list(v).map_err(|_| bad("percentiles"))?;
                    if p.len() != 2 {
                        return Err(bad("percentiles"));
                    }
                    d.percentiles = (p[0], p[1]);
                }
                "test_fraction" => d.test_fraction = num(v).map_err(|_| bad("fraction"))?,
                "val_fraction" => d.val_fraction = num(v).map_err(|_| bad("fraction"))?,
                "renormalize_noisy" => d.renormalize_noisy = v.parse().map_err(|_| bad("flag"))?,
                "train_file" => m.train_file = v.to_string(),
                "validation_file" => m.validation_file = v.to_string(),
                "test_file" => m.test_file = v.to_string(),
                "record" => m
                    .records
                    .push(parse_record(v).ok_or_else(|| bad("record line"))?),
                k => return Err(err(e.line, format!("unknown key '{k}'"))),
            }
        }
        if !seen_format {
            return Err(err(1, "missing 'format' line".into()));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::parse(&text, path)
    }

    fn resolve(&self, manifest_path: &Path, file: &str) -> PathBuf {
        manifest_path.parent().unwrap_or(Path::new(".")).join(file)
    }

    pub fn load_pairs(&self, manifest_path: &Path, role: Role) -> Result<PairSet> {
        let file = match role {
            Role::Train => &self.train_file,
            Role::Validation => &self.validation_file,
            Role::Test => &self.test_file,
        };
        let path = self.resolve(manifest_path, file);
        let set = PairSet::load(&path)?;
        if set.role != role || set.window != self.dataset.window {
            return Err(Error::Parse {
                path,
                offset: 0,
                msg: format!(
                    "expected {} pairs of width {}, found {} pairs of width {}",
                    role.name(),
                    self.dataset.window,
                    set.role.name(),
                    set.window
                ),
            });
        }
        Ok(set)
    }
}

fn parse_record(v: &str) -> Option<RecordSummary> {
    let mut it = v.split_whitespace();
    let name = it.next()?.to_string();
    let mut fields = std::collections::HashMap::new();
    for tok in it {
        let (k, v) = tok.split_once('=')?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied();
    Some(RecordSummary {
        name,
        samples: get("samples")?.parse().ok()?,
        windows: get("windows")?.parse().ok()?,
        retained: get("retained")?.parse().ok()?,
        train: get("train")?.parse().ok()?,
        validation: get("validation")?.parse().ok()?,
        test: get("test")?.parse().ok()?,
        excluded_from_training: get("excluded")?.parse().ok()?,
        norm: NormalizationParams {
            min: get("min")?.parse().ok()?,
            max: get("max")?.parse().ok()?,
        },
    })
}

/// Writes the three pair files and `manifest.txt` into `dir`; returns the
/// manifest path.
pub fn write_manifest(
    dir: &Path,
    seed: u64,
    dataset: &DatasetConfig,
    data: &ExperimentData,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = Manifest::new(seed, dataset.clone(), data.records.clone());
    data.train.save(&dir.join(&m.train_file))?;
    data.validation.save(&dir.join(&m.validation_file))?;
    data.test.save(&dir.join(&m.test_file))?;
    let path = dir.join("manifest.txt");
    std::fs::write(&path, m.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Loads a manifest and all three pair sets.
pub fn read_manifest(path: &Path) -> Result<(Manifest, ExperimentData)> {
    let m = Manifest::load(path)?;
    let data = ExperimentData {
        train: m.load_pairs(path, Role::Train)?,
        validation: m.load_pairs(path, Role::Validation)?,
        test: m.load_pairs(path, Role::Test)?,
        records: m.records.clone(),
    };
    Ok((m, data))
}
