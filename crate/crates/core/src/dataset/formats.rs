//! Plain signal formats and extension-based dispatch.
//!
//! * CSV: one sample per line; an optional `# fs=<Hz>` comment sets the
//!   sampling rate (other `#` lines are ignored).
//! * Raw float: 16-byte little-endian header `b"ECGF"`, version `u32`,
//!   sampling rate `f32`, sample count `u32`, followed by `f32` samples.
//! * `.hea`: WFDB format 212, see [`super::wfdb`].

use std::fmt::Write as _;
use std::path::Path;

use super::wfdb::{read_wfdb_adc, read_wfdb_record, write_wfdb_record, WfdbChannel};
use super::{SignalRecord, MITDB_FS};
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 4] = b"ECGF";
pub const RAW_VERSION: u32 = 1;
const RAW_HEADER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalFormat {
    Csv,
    Raw,
    Wfdb,
}

impl SignalFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "csv" | "txt" => Ok(SignalFormat::Csv),
            "f32" | "ecgf" | "raw" | "bin" => Ok(SignalFormat::Raw),
            "hea" => Ok(SignalFormat::Wfdb),
            _ => Err(Error::invalid(format!(
                "{}: unrecognised signal file extension (expected .csv, .f32 or .hea)",
                path.display()
            ))),
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("signal")
        .to_string()
}

pub fn parse_csv_signal(text: &str, name: &str, path: &Path) -> Result<SignalRecord> {
    let mut fs = MITDB_FS;
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("fs=") {
                fs = v.trim().parse().map_err(|_| Error::Text {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("invalid sampling rate '{}'", v.trim()),
                })?;
            }
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Text {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("invalid sample '{line}'"),
        })?;
        samples.push(v);
    }
    SignalRecord::new(name, samples, fs).map_err(|e| Error::Text {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })
}

pub fn read_csv_signal(path: &Path) -> Result<SignalRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_signal(&text, &stem(path), path)
}

/// Shortest round-tripping decimal form of every sample.
pub fn csv_signal_text(samples: &[f64], fs: f64) -> String {
    let mut s = String::with_capacity(samples.len() * 20);
    let _ = writeln!(s, "# fs={fs}");
    for v in samples {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn write_csv_signal(path: &Path, samples: &[f64], fs: f64) -> Result<()> {
    std::fs::write(path, csv_signal_text(samples, fs)).map_err(|e| Error::io(path, e))
}

pub fn encode_raw_signal(samples: &[f64], fs: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER + 4 * samples.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&RAW_VERSION.to_le_bytes());
    out.extend_from_slice(&(fs as f32).to_le_bytes());
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    for &v in samples {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_raw_signal(data: &[u8], name: &str, path: &Path) -> Result<SignalRecord> {
    let parse_err = |offset: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        offset,
        msg,
    };
    if data.len() < RAW_HEADER {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            offset: data.len(),
            expected: RAW_HEADER,
        });
    }
    if &data[..4] != RAW_MAGIC {
        return Err(parse_err(0, "bad magic (expected \"ECGF\")".into()));
    }
    let word = |i: usize| u32::from_le_bytes(data[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != RAW_VERSION {
        return Err(parse_err(4, format!("unsupported version {version}")));
    }
    let fs = f32::from_bits(word(8)) as f64;
    if !(fs > 0.0) {
        return Err(parse_err(8, format!("invalid sampling rate {fs}")));
    }
    let n = word(12) as usize;
    let expected = RAW_HEADER + 4 * n;
    if data.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            offset: data.len(),
            expected,
        });
    }
    let samples: Vec<f64> = data[RAW_HEADER..expected]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(parse_err(RAW_HEADER + 4 * i, "non-finite sample".into()));
    }
    SignalRecord::new(name, samples, fs).map_err(|e| parse_err(RAW_HEADER, e.to_string()))
}

pub fn read_raw_signal(path: &Path) -> Result<SignalRecord> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw_signal(&data, &stem(path), path)
}

pub fn write_raw_signal(path: &Path, samples: &[f64], fs: f64) -> Result<()> {
    std::fs::write(path, encode_raw_signal(samples, fs)).map_err(|e| Error::io(path, e))
}

/// Reads any supported format. WFDB files yield one record per channel.
pub fn read_signal_file(path: &Path) -> Result<Vec<SignalRecord>> {
    match SignalFormat::from_path(path)? {
        SignalFormat::Csv => Ok(vec![read_csv_signal(path)?]),
        SignalFormat::Raw => Ok(vec![read_raw_signal(path)?]),
        SignalFormat::Wfdb => read_wfdb_record(path, None),
    }
}

/// Writes a single-channel signal in the format implied by `path`.
///
/// For WFDB output, `template` (an existing header) supplies gain and
/// baseline; values are rounded to ADC units and clamped to 12 bits.
pub fn write_signal_file(
    path: &Path,
    samples: &[f64],
    fs: f64,
    template: Option<&Path>,
) -> Result<()> {
    match SignalFormat::from_path(path)? {
        SignalFormat::Csv => write_csv_signal(path, samples, fs),
        SignalFormat::Raw => write_raw_signal(path, samples, fs),
        SignalFormat::Wfdb => {
            let (gain, baseline, units) = match template {
                Some(t) => {
                    let (h, _) = read_wfdb_adc(t, None)?;
                    let s = &h.signals[0];
                    (s.gain, s.baseline, s.units.clone())
                }
                None => (super::wfdb::DEFAULT_GAIN, 0, "mV".to_string()),
            };
            let adc = samples
                .iter()
                .map(|v| ((v * gain).round() as i64 + baseline as i64).clamp(-2048, 2047) as i32)
                .collect();
            let dir = path.parent().unwrap_or(Path::new("."));
            write_wfdb_record(
                dir,
                &stem(path),
                fs,
                &[WfdbChannel {
                    adc,
                    gain,
                    baseline,
                    units,
                    description: String::new(),
                }],
            )?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let x = vec![0.1, -1e-300, 123456.789, 1.0 / 3.0];
        write_csv_signal(&p, &x, 250.0).unwrap();
        let r = read_csv_signal(&p).unwrap();
        assert_eq!(r.samples, x);
        assert_eq!(r.sampling_rate_hz, 250.0);
        assert_eq!(r.name, "s");
    }

    #[test]
    fn csv_defaults_and_errors() {
        let r = parse_csv_signal("1\n2\n\n3\n", "a", Path::new("a.csv")).unwrap();
        assert_eq!(r.sampling_rate_hz, MITDB_FS);
        assert_eq!(r.samples.len(), 3);
        let err = parse_csv_signal("1\nabc\n", "a", Path::new("a.csv")).unwrap_err();
        assert!(matches!(err, Error::Text { line: 2, .. }), "{err}");
    }

    #[test]
    fn raw_round_trip() {
        let x = vec![0.5, -0.25, 3.0];
        let bytes = encode_raw_signal(&x, 360.0);
        assert_eq!(bytes.len(), 16 + 12);
        let r = decode_raw_signal(&bytes, "r", Path::new("r.f32")).unwrap();
        assert_eq!(r.samples, x);
        assert_eq!(r.sampling_rate_hz, 360.0);
        let err = decode_raw_signal(&bytes[..20], "r", Path::new("r.f32")).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Truncated {
                    offset: 20,
                    expected: 28,
                    ..
                }
            ),
            "{err}"
        );
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_raw_signal(&bad, "r", Path::new("r.f32")).is_err());
    }

    #[test]
    fn dispatch_by_extension() {
        assert_eq!(
            SignalFormat::from_path(Path::new("a.CSV")).unwrap(),
            SignalFormat::Csv
        );
        assert_eq!(
            SignalFormat::from_path(Path::new("a.hea")).unwrap(),
            SignalFormat::Wfdb
        );
        assert!(SignalFormat::from_path(Path::new("a.wav")).is_err());
    }

    #[test]
    fn wfdb_output_uses_template_gain() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("den.hea");
        write_signal_file(&out, &[0.0, 0.5, -0.5], 360.0, None).unwrap();
        let r = read_signal_file(&out).unwrap();
        assert_eq!(r[0].samples, vec![0.0, 0.5, -0.5]);
    }
}
