//! WFDB header parsing and format-212 signal files.
//!
//! Format 212 packs two 12-bit two's-complement samples into three bytes:
//!
//! ```text
//! s0 = b0 | (b1 & 0x0f) << 8
//! s1 = b2 | (b1 & 0xf0) << 4
//! ```
//!
//! Samples of all signals stored in one file are interleaved frame by frame.
//! An odd trailing sample occupies two bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::SignalRecord;
use crate::error::{Error, Result};

/// Default ADC gain (units per mV) when the header leaves it out or gives 0.
pub const DEFAULT_GAIN: f64 = 200.0;
/// Default sampling frequency when the header leaves it out.
pub const DEFAULT_FS: f64 = 250.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WfdbSignalSpec {
    pub file_name: String,
    pub format: u32,
    /// Byte offset of the first sample in the signal file.
    pub byte_offset: usize,
    pub gain: f64,
    pub baseline: i32,
    pub units: String,
    pub adc_resolution: u32,
    pub adc_zero: i32,
    pub initial_value: Option<i32>,
    pub checksum: Option<i32>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WfdbHeader {
    pub record_name: String,
    pub sampling_rate_hz: f64,
    /// Samples per signal; `None` when the header does not say.
    pub samples_per_signal: Option<usize>,
    pub signals: Vec<WfdbSignalSpec>,
}

fn header_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Header {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn leading_number(s: &str) -> &str {
    let end = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == 'e'
                || c == 'E'
                || (i == 0 && (c == '-' || c == '+')))
        })
        .map_or(s.len(), |(i, _)| i);
    &s[..end]
}

/// Parses the text of a `.hea` file. `path` is only used in error messages.
pub fn parse_wfdb_header(text: &str, path: &Path) -> Result<WfdbHeader> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (ln, record_line) = lines
        .next()
        .ok_or_else(|| header_err(path, 1, "empty header"))?;
    let fields: Vec<&str> = record_line.split_whitespace().collect();
    if fields.len() < 2 {
        return Err(header_err(
            path,
            ln,
            "record line needs a name and a signal count",
        ));
    }
    let record_name = fields[0].split('/').next().unwrap_or_default().to_string();
    if fields[0].contains('/') {
        return Err(header_err(
            path,
            ln,
            "multi-segment records are not supported",
        ));
    }
    let n_signals: usize = fields[1]
        .parse()
        .map_err(|_| header_err(path, ln, format!("invalid signal count '{}'", fields[1])))?;
    let sampling_rate_hz = match fields.get(2) {
        Some(f) => {
            let num = leading_number(f);
            let fs: f64 = num
                .parse()
                .map_err(|_| header_err(path, ln, format!("invalid sampling frequency '{f}'")))?;
            if !(fs > 0.0) {
                return Err(header_err(path, ln, "sampling frequency must be positive"));
            }
            fs
        }
        None => DEFAULT_FS,
    };
    let samples_per_signal = match fields.get(3) {
        Some(f) => {
            let n: usize = f
                .parse()
                .map_err(|_| header_err(path, ln, format!("invalid sample count '{f}'")))?;
            (n > 0).then_some(n)
        }
        None => None,
    };
    if n_signals == 0 {
        return Err(header_err(path, ln, "record declares no signals"));
    }

    let mut signals = Vec::with_capacity(n_signals);
    for _ in 0..n_signals {
        let (ln, line) = lines.next().ok_or_else(|| {
            header_err(
                path,
                ln,
                format!("expected {n_signals} signal lines, found {}", signals.len()),
            )
        })?;
        signals.push(parse_signal_line(line, ln, path)?);
    }
    Ok(WfdbHeader {
        record_name,
        sampling_rate_hz,
        samples_per_signal,
        signals,
    })
}

/// Whitespace tokens; whatever is left after the last `next` stays in `.0`.
struct Tokens<'a>(&'a str);

impl<'a> Iterator for Tokens<'a> {
    type Item = &'a str;

    fn next(&mut self) -> Option<&'a str> {
        let s = self.0.trim_start();
        if s.is_empty() {
            self.0 = s;
            return None;
        }
        let end = s.find(char::is_whitespace).unwrap_or(s.len());
        self.0 = &s[end..];
        Some(&s[..end])
    }
}

fn parse_signal_line(line: &str, ln: usize, path: &Path) -> Result<WfdbSignalSpec> {
    let mut parts = Tokens(line);
    let file_name = parts
        .next()
        .ok_or_else(|| header_err(path, ln, "missing file name"))?
        .to_string();
    let fmt_field = parts
        .next()
        .ok_or_else(|| header_err(path, ln, "missing format"))?;
    let digits: String = fmt_field.chars().take_while(char::is_ascii_digit).collect();
    let format: u32 = digits
        .parse()
        .map_err(|_| header_err(path, ln, format!("invalid format field '{fmt_field}'")))?;
    let rest = &fmt_field[digits.len()..];
    let byte_offset = if let Some(off) = rest.strip_prefix('+') {
        off.parse()
            .map_err(|_| header_err(path, ln, format!("invalid byte offset in '{fmt_field}'")))?
    } else if rest.is_empty() {
        0
    } else {
        return Err(header_err(
            path,
            ln,
            format!("sample multiplicity and skew are not supported ('{fmt_field}')"),
        ));
    };

    let mut gain = DEFAULT_GAIN;
    let mut baseline = None;
    let mut units = "mV".to_string();
    if let Some(g) = parts.next() {
        let (g, unit_part) = g.split_once('/').map_or((g, None), |(a, b)| (a, Some(b)));
        if let Some(u) = unit_part {
            units = u.to_string();
        }
        let (g, base) = match g.split_once('(') {
            Some((a, b)) => (a, Some(b.trim_end_matches(')'))),
            None => (g, None),
        };
        let parsed: f64 = g
            .parse()
            .map_err(|_| header_err(path, ln, format!("invalid gain '{g}'")))?;
        if parsed != 0.0 {
            gain = parsed;
        }
        if let Some(b) = base {
            baseline = Some(
                b.parse()
                    .map_err(|_| header_err(path, ln, format!("invalid baseline '{b}'")))?,
            );
        }
    }
    let mut int_field = |name: &str| -> Result<Option<i32>> {
        match parts.next() {
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| header_err(path, ln, format!("invalid {name} '{v}'"))),
            None => Ok(None),
        }
    };
    let adc_resolution = int_field("ADC resolution")?.unwrap_or(12) as u32;
    let adc_zero = int_field("ADC zero")?.unwrap_or(0);
    let initial_value = int_field("initial value")?;
    let checksum = int_field("checksum")?;
    let _block_size = int_field("block size")?;
    let description = parts.0.trim().to_string();
    Ok(WfdbSignalSpec {
        file_name,
        format,
        byte_offset,
        gain,
        baseline: baseline.unwrap_or(adc_zero),
        units,
        adc_resolution,
        adc_zero,
        initial_value,
        checksum,
        description,
    })
}

/// Sign-extends a 12-bit two's-complement value.
#[inline]
pub fn sign_extend_12(v: u16) -> i32 {
    let v = (v & 0x0fff) as i32;
    if v & 0x800 != 0 {
        v - 0x1000
    } else {
        v
    }
}

/// Number of bytes holding `n` format-212 samples.
pub fn packed_212_len(n: usize) -> usize {
    n / 2 * 3 + (n % 2) * 2
}

/// Unpacks `n` samples. `data` must hold at least [`packed_212_len`]`(n)` bytes.
pub fn unpack_212(data: &[u8], n: usize) -> Vec<i32> {
    let mut out = Vec::with_capacity(n);
    for chunk in data[..packed_212_len(n)].chunks(3) {
        let b0 = chunk[0] as u16;
        let b1 = chunk[1] as u16;
        out.push(sign_extend_12(b0 | (b1 & 0x0f) << 8));
        if chunk.len() == 3 {
            out.push(sign_extend_12(chunk[2] as u16 | (b1 & 0xf0) << 4));
        }
    }
    out
}

/// Packs samples in `[-2048, 2047]`.
pub fn pack_212(samples: &[i32]) -> Result<Vec<u8>> {
    if let Some((i, v)) = samples
        .iter()
        .enumerate()
        .find(|(_, v)| !(-2048..=2047).contains(*v))
    {
        return Err(Error::invalid(format!(
            "sample {i} = {v} does not fit in 12 bits"
        )));
    }
    let mut out = Vec::with_capacity(packed_212_len(samples.len()));
    for pair in samples.chunks(2) {
        let s0 = (pair[0] & 0x0fff) as u16;
        out.push((s0 & 0xff) as u8);
        match pair.get(1) {
            Some(&v) => {
                let s1 = (v & 0x0fff) as u16;
                out.push(((s0 >> 8) as u8) | (((s1 >> 8) as u8) << 4));
                out.push((s1 & 0xff) as u8);
            }
            None => out.push((s0 >> 8) as u8),
        }
    }
    Ok(out)
}

/// Raw ADC values per signal, in header order.
pub fn read_wfdb_adc(
    header_path: &Path,
    signal_dir: Option<&Path>,
) -> Result<(WfdbHeader, Vec<Vec<i32>>)> {
    let text = std::fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = parse_wfdb_header(&text, header_path)?;
    let dir = signal_dir
        .map(Path::to_path_buf)
        .or_else(|| header_path.parent().map(Path::to_path_buf))
        .unwrap_or_default();

    let mut adc = vec![Vec::new(); header.signals.len()];
    let mut files: Vec<&str> = Vec::new();
    for s in &header.signals {
        if !files.contains(&s.file_name.as_str()) {
            files.push(&s.file_name);
        }
    }
    for file in files {
        let members: Vec<usize> = (0..header.signals.len())
            .filter(|&i| header.signals[i].file_name == file)
            .collect();
        let path: PathBuf = dir.join(file);
        for &i in &members {
            let s = &header.signals[i];
            if s.format != 212 {
                return Err(Error::UnsupportedFormat {
                    path: path.clone(),
                    code: s.format,
                });
            }
        }
        let offset = header.signals[members[0]].byte_offset;
        let data = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if data.len() < offset {
            return Err(Error::Truncated {
                path,
                offset: data.len(),
                expected: offset,
            });
        }
        let body = &data[offset..];
        let per_frame = members.len();
        let total = match header.samples_per_signal {
            Some(n) => {
                let total = n * per_frame;
                let need = packed_212_len(total);
                if body.len() < need {
                    return Err(Error::Truncated {
                        path,
                        offset: offset + body.len(),
                        expected: offset + need,
                    });
                }
                total
            }
            None => body.len() * 2 / 3 / per_frame * per_frame,
        };
        let flat = unpack_212(body, total);
        for (k, &i) in members.iter().enumerate() {
            adc[i] = flat.iter().skip(k).step_by(per_frame).copied().collect();
        }
    }
    Ok((header, adc))
}

/// Reads a format-212 record: one [`SignalRecord`] per channel, in physical
/// units `(adc - baseline) / gain`. Channel 0 keeps the record name; further
/// channels are named `<record>.<channel>`.
pub fn read_wfdb_record(
    header_path: &Path,
    signal_dir: Option<&Path>,
) -> Result<Vec<SignalRecord>> {
    let (header, adc) = read_wfdb_adc(header_path, signal_dir)?;
    header
        .signals
        .iter()
        .zip(adc)
        .enumerate()
        .map(|(ch, (spec, values))| {
            let name = if ch == 0 {
                header.record_name.clone()
            } else {
                format!("{}.{ch}", header.record_name)
            };
            let samples = values
                .iter()
                .map(|&v| (v - spec.baseline) as f64 / spec.gain)
                .collect();
            SignalRecord::new(name, samples, header.sampling_rate_hz).map_err(|e| Error::Parse {
                path: header_path.to_path_buf(),
                offset: 0,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// One channel to be written by [`write_wfdb_record`].
#[derive(Debug, Clone, PartialEq)]
pub struct WfdbChannel {
    pub adc: Vec<i32>,
    pub gain: f64,
    pub baseline: i32,
    pub units: String,
    pub description: String,
}

/// 16-bit signed checksum of a channel, as stored in headers.
pub fn wfdb_checksum(adc: &[i32]) -> i32 {
    let sum = adc.iter().fold(0i64, |a, &v| a + v as i64);
    (sum as u16) as i16 as i32
}

/// Writes `<dir>/<name>.hea` and `<dir>/<name>.dat` (all channels interleaved
/// in one format-212 file). Returns the header path.
pub fn write_wfdb_record(
    dir: &Path,
    name: &str,
    fs: f64,
    channels: &[WfdbChannel],
) -> Result<PathBuf> {
    let n = channels
        .first()
        .map(|c| c.adc.len())
        .ok_or_else(|| Error::invalid("no channels to write"))?;
    if channels.iter().any(|c| c.adc.len() != n) {
        return Err(Error::invalid("all channels must have the same length"));
    }
    let dat_name = format!("{name}.dat");
    let mut header = String::new();
    let _ = writeln!(header, "{name} {} {fs} {n}", channels.len());
    for c in channels {
        let _ = write!(
            header,
            "{dat_name} 212 {}({})/{} 12 0 {} {} 0",
            c.gain,
            c.baseline,
            c.units,
            c.adc.first().copied().unwrap_or(0),
            wfdb_checksum(&c.adc)
        );
        if c.description.is_empty() {
            header.push('\n');
        } else {
            let _ = writeln!(header, " {}", c.description);
        }
    }
    let mut interleaved = Vec::with_capacity(n * channels.len());
    for i in 0..n {
        interleaved.extend(channels.iter().map(|c| c.adc[i]));
    }
    let bytes = pack_212(&interleaved)?;
    let hea = dir.join(format!("{name}.hea"));
    let dat = dir.join(&dat_name);
    std::fs::write(&dat, bytes).map_err(|e| Error::io(&dat, e))?;
    std::fs::write(&hea, header).map_err(|e| Error::io(&hea, e))?;
    Ok(hea)
}
