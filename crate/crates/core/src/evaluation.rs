//! Metrics, per-SNR reports and wavelet band exports.
//!
//! Definitions (all on normalised amplitudes):
//!
//! * `rmse = sqrt(mean((clean - denoised)^2))`
//! * `snr(x) = 10 log10(sum clean^2 / sum (x - clean)^2)`, and
//!   `snr_improvement = snr(denoised) - snr(noisy)`; a perfect reconstruction
//!   reports `+inf`.
//! * `prd = 100 sqrt(sum (clean - denoised)^2 / sum clean^2)`
//!
//! Metrics are computed per window and then averaged.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::architecture::{Network, Variant};
use crate::config::parse_variant_label;
use crate::dataset::PairSet;
use crate::error::{Error, Result};
use crate::par;
use crate::wavelet::{make_db6_filters, wavedec, waverec};

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("empty window"));
    }
    Ok(())
}

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rmse(clean: &[f64], denoised: &[f64]) -> Result<f64> {
    check_len(clean, denoised)?;
    Ok((sq_err(clean, denoised) / clean.len() as f64).sqrt())
}

/// Returns `f64::INFINITY` when `denoised == clean`.
pub fn snr_improvement(clean: &[f64], noisy: &[f64], denoised: &[f64]) -> Result<f64> {
    check_len(clean, noisy)?;
    check_len(clean, denoised)?;
    let e_in = sq_err(noisy, clean);
    if e_in == 0.0 {
        return Err(Error::invalid("noisy window equals the clean window"));
    }
    let e_out = sq_err(denoised, clean);
    if e_out == 0.0 {
        return Ok(f64::INFINITY);
    }
    // the clean energy cancels out of the difference
    Ok(10.0 * (e_in / e_out).log10())
}

pub fn prd(clean: &[f64], denoised: &[f64]) -> Result<f64> {
    check_len(clean, denoised)?;
    let e = energy(clean);
    if e == 0.0 {
        return Err(Error::invalid(
            "PRD is undefined for a zero-energy clean window",
        ));
    }
    Ok(100.0 * (sq_err(clean, denoised) / e).sqrt())
}

/// Mean metrics over the test windows at one input SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrMetrics {
    pub snr_db: f64,
    pub windows: usize,
    pub rmse: f64,
    pub snr_improvement_db: f64,
    pub prd_percent: f64,
    /// RMSE of the noisy input, for reference.
    pub input_rmse: f64,
}

/// Denoises every test window in inference mode and averages the metrics per
/// input SNR, in the order of `snrs`.
pub fn evaluate_model(
    net: &Network,
    test: &PairSet,
    snrs: &[f64],
    batch: usize,
) -> Result<Vec<SnrMetrics>> {
    let batch = batch.max(1);
    let chunks = test.pairs.len().div_ceil(batch);
    let denoised: Vec<Vec<Vec<f64>>> = par::map_range(chunks, |c| {
        let pairs = &test.pairs[c * batch..((c + 1) * batch).min(test.pairs.len())];
        let noisy: Vec<&[f64]> = pairs.iter().map(|p| p.noisy.as_slice()).collect();
        net.denoise_windows(&noisy, batch)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let denoised: Vec<Vec<f64>> = denoised.into_iter().flatten().collect();

    snrs.iter()
        .map(|&snr| {
            let idx = test.indices_at(snr);
            if idx.is_empty() {
                return Err(Error::MissingGroup(snr));
            }
            let mut m = SnrMetrics {
                snr_db: snr,
                windows: idx.len(),
                rmse: 0.0,
                snr_improvement_db: 0.0,
                prd_percent: 0.0,
                input_rmse: 0.0,
            };
            for &i in &idx {
                let p = &test.pairs[i];
                m.rmse += rmse(&p.clean, &denoised[i])?;
                m.snr_improvement_db += snr_improvement(&p.clean, &p.noisy, &denoised[i])?;
                m.prd_percent += prd(&p.clean, &denoised[i])?;
                m.input_rmse += rmse(&p.clean, &p.noisy)?;
            }
            let n = idx.len() as f64;
            m.rmse /= n;
            m.snr_improvement_db /= n;
            m.prd_percent /= n;
            m.input_rmse /= n;
            Ok(m)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Rmse,
    SnrImprovement,
    Prd,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Rmse, Metric::SnrImprovement, Metric::Prd];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::SnrImprovement => "snr_improvement_db",
            Metric::Prd => "prd_percent",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            Metric::Rmse => "RMSE",
            Metric::SnrImprovement => "SNR improvement (dB)",
            Metric::Prd => "PRD (%)",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Metric::ALL.into_iter().find(|m| m.name() == s)
    }

    fn of(&self, m: &SnrMetrics) -> f64 {
        match self {
            Metric::Rmse => m.rmse,
            Metric::SnrImprovement => m.snr_improvement_db,
            Metric::Prd => m.prd_percent,
        }
    }
}

/// Mean and sample standard deviation over repetitions (0 for one run).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub rmse: Stat,
    pub snr_improvement_db: Stat,
    pub prd_percent: Stat,
}

impl Cell {
    pub fn get(&self, m: Metric) -> Stat {
        match m {
            Metric::Rmse => self.rmse,
            Metric::SnrImprovement => self.snr_improvement_db,
            Metric::Prd => self.prd_percent,
        }
    }

    fn get_mut(&mut self, m: Metric) -> &mut Stat {
        match m {
            Metric::Rmse => &mut self.rmse,
            Metric::SnrImprovement => &mut self.snr_improvement_db,
            Metric::Prd => &mut self.prd_percent,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub id: usize,
    pub variant: Variant,
    /// One cell per column of [`MetricsReport::snrs`].
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub snrs: Vec<f64>,
    pub rows: Vec<ReportRow>,
}

pub const REPORT_HEADER: &str = "id,variant,family,k,snr_db,metric,mean,std";

impl MetricsReport {
    pub fn new(snrs: &[f64]) -> Self {
        MetricsReport {
            snrs: snrs.to_vec(),
            rows: Vec::new(),
        }
    }

    /// Adds a row aggregated over repetitions; every run must cover the
    /// report's SNR columns in order.
    pub fn add_row(&mut self, id: usize, variant: Variant, runs: &[Vec<SnrMetrics>]) -> Result<()> {
        if runs.is_empty() {
            return Err(Error::invalid("no runs to aggregate"));
        }
        let mut cells = Vec::with_capacity(self.snrs.len());
        for (col, &snr) in self.snrs.iter().enumerate() {
            let mut cell = Cell {
                rmse: Stat {
                    mean: 0.0,
                    std: 0.0,
                },
                snr_improvement_db: Stat {
                    mean: 0.0,
                    std: 0.0,
                },
                prd_percent: Stat {
                    mean: 0.0,
                    std: 0.0,
                },
            };
            for m in Metric::ALL {
                let values = runs
                    .iter()
                    .map(|r| match r.get(col) {
                        Some(x) if x.snr_db == snr => Ok(m.of(x)),
                        _ => Err(Error::MissingGroup(snr)),
                    })
                    .collect::<Result<Vec<f64>>>()?;
                *cell.get_mut(m) = Stat::of(&values);
            }
            cells.push(cell);
        }
        self.rows.push(ReportRow { id, variant, cells });
        Ok(())
    }

    pub fn row(&self, variant: Variant) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// One line per variant x SNR x metric.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            for (snr, cell) in self.snrs.iter().zip(&r.cells) {
                for m in Metric::ALL {
                    let st = cell.get(m);
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{}",
                        r.id,
                        r.variant.label(),
                        r.variant.family(),
                        r.variant.k(),
                        snr,
                        m.name(),
                        st.mean,
                        st.std
                    );
                }
            }
        }
        s
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Text {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == REPORT_HEADER => {}
            _ => return Err(err(1, format!("expected header '{REPORT_HEADER}'"))),
        }
        let mut report = MetricsReport::new(&[]);
        for (i, line) in lines {
            let ln = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(err(ln, format!("expected 8 fields, got {}", f.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| err(ln, format!("invalid number '{s}'")))
            };
            let id: usize = f[0]
                .parse()
                .map_err(|_| err(ln, format!("invalid id '{}'", f[0])))?;
            let variant = parse_variant_label(f[1]).map_err(|e| err(ln, e.to_string()))?;
            let snr = num(f[4])?;
            let metric =
                Metric::parse(f[5]).ok_or_else(|| err(ln, format!("unknown metric '{}'", f[5])))?;
            let stat = Stat {
                mean: num(f[6])?,
                std: num(f[7])?,
            };
            let col = match report.snrs.iter().position(|&s| s == snr) {
                Some(c) => c,
                None => {
                    report.snrs.push(snr);
                    for r in &mut report.rows {
                        r.cells.push(empty_cell());
                    }
                    report.snrs.len() - 1
                }
            };
            let row = match report
                .rows
                .iter()
                .position(|r| r.id == id && r.variant == variant)
            {
                Some(r) => r,
                None => {
                    report.rows.push(ReportRow {
                        id,
                        variant,
                        cells: vec![empty_cell(); report.snrs.len()],
                    });
                    report.rows.len() - 1
                }
            };
            *report.rows[row].cells[col].get_mut(metric) = stat;
        }
        Ok(report)
    }

    /// Aligned tables, one per metric: rows are variants, columns input SNRs.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for m in Metric::ALL {
            let _ = writeln!(s, "{}", m.title());
            let _ = write!(s, "{:>4} {:>8} {:>3} {:>3}", "ID", "variant", "k", "F/B");
            for snr in &self.snrs {
                let _ = write!(s, " {:>17}", format!("{snr} dB"));
            }
            s.push('\n');
            for r in &self.rows {
                let fb = match r.variant {
                    Variant::Forward(_) => "F",
                    Variant::Backward(_) => "B",
                    Variant::AllWavelet => "all",
                    Variant::Fcn => "-",
                };
                let _ = write!(
                    s,
                    "{:>4} {:>8} {:>3} {:>3}",
                    r.id,
                    r.variant.label(),
                    r.variant.k(),
                    fb
                );
                for c in &r.cells {
                    let st = c.get(m);
                    let _ = write!(s, " {:>17}", format!("{:.4}±{:.4}", st.mean, st.std));
                }
                s.push('\n');
            }
            s.push('\n');
        }
        s
    }
}

fn empty_cell() -> Cell {
    let z = Stat {
        mean: f64::NAN,
        std: f64::NAN,
    };
    Cell {
        rmse: z,
        snr_improvement_db: z,
        prd_percent: z,
    }
}

/// One wavelet band: its coefficients and the signal rebuilt from that band
/// alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
    pub coefficients: Vec<f64>,
    pub reconstruction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    pub sampling_rate_hz: f64,
    pub signal: Vec<f64>,
    /// `D1..DL` then `A`.
    pub bands: Vec<Band>,
}

/// db6 decomposition of `signal` into `levels` detail bands and the final
/// approximation, with single-band reconstructions.
pub fn decomposition_report(signal: &[f64], levels: usize, fs: f64) -> Result<DecompositionReport> {
    let bank = make_db6_filters();
    let dec = wavedec(signal, levels, &bank, fs)?;
    let mut bands = Vec::with_capacity(levels + 1);
    for k in 0..levels {
        let mut only = dec.zeros_like();
        only.details[k].clone_from(&dec.details[k]);
        let (lo, hi) = dec.detail_band(k + 1);
        bands.push(Band {
            name: format!("D{}", k + 1),
            low_hz: lo,
            high_hz: hi,
            coefficients: dec.details[k].clone(),
            reconstruction: waverec(&only, &bank)?,
        });
    }
    let mut only = dec.zeros_like();
    only.approx.clone_from(&dec.approx);
    let (lo, hi) = dec.approx_band();
    bands.push(Band {
        name: "A".into(),
        low_hz: lo,
        high_hz: hi,
        coefficients: dec.approx.clone(),
        reconstruction: waverec(&only, &bank)?,
    });
    Ok(DecompositionReport {
        sampling_rate_hz: fs,
        signal: signal.to_vec(),
        bands,
    })
}

impl DecompositionReport {
    /// Fraction of the signal energy carried by each band's reconstruction.
    pub fn energy_fractions(&self) -> Vec<f64> {
        let total = energy(&self.signal);
        self.bands
            .iter()
            .map(|b| energy(&b.reconstruction) / total)
            .collect()
    }

    pub fn band_csv(band: &Band) -> String {
        let mut s = format!(
            "# {} {}-{} Hz\nindex,reconstruction,coefficient\n",
            band.name, band.low_hz, band.high_hz
        );
        for (i, r) in band.reconstruction.iter().enumerate() {
            match band.coefficients.get(i) {
                Some(c) => writeln!(s, "{i},{r},{c}"),
                None => writeln!(s, "{i},{r},"),
            }
            .expect("writing to a String");
        }
        s
    }

    /// Stacked line plot of the signal and every band reconstruction.
    pub fn to_svg(&self) -> String {
        let (w, h_row, pad) = (900.0, 110.0, 40.0);
        let rows = self.bands.len() + 1;
        let height = rows as f64 * h_row + pad;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        );
        let series = std::iter::once(("signal".to_string(), &self.signal)).chain(
            self.bands.iter().map(|b| {
                (
                    format!("{} ({:.1}-{:.1} Hz)", b.name, b.low_hz, b.high_hz),
                    &b.reconstruction,
                )
            }),
        );
        for (row, (label, y)) in series.enumerate() {
            let top = pad / 2.0 + row as f64 * h_row;
            let (lo, hi) = y
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                });
            let span = if hi > lo { hi - lo } else { 1.0 };
            let n = y.len().max(2) as f64 - 1.0;
            let pts: Vec<String> = y
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let px = 60.0 + i as f64 / n * (w - 80.0);
                    let py = top + 20.0 + (1.0 - (v - lo) / span) * (h_row - 30.0);
                    format!("{px:.2},{py:.2}")
                })
                .collect();
            let _ = writeln!(s, "<text x=\"4\" y=\"{:.1}\">{label}</text>", top + 12.0);
            let _ = writeln!(
                s,
                "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1\" points=\"{}\"/>",
                pts.join(" ")
            );
        }
        s.push_str("</svg>\n");
        s
    }

    /// Writes `band_<name>.csv` for every band and, if asked, `bands.svg`.
    pub fn write(&self, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = Vec::new();
        for b in &self.bands {
            let p = dir.join(format!("band_{}.csv", b.name));
            std::fs::write(&p, Self::band_csv(b)).map_err(|e| Error::io(&p, e))?;
            out.push(p);
        }
        if svg {
            let p = dir.join("bands.svg");
            std::fs::write(&p, self.to_svg()).map_err(|e| Error::io(&p, e))?;
            out.push(p);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::architecture::{build_model, ModelSpec};
    use crate::dataset::{NoiseKind, Pair, Role};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn rmse_cases() {
        let a = random(64, 1);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        assert!((rmse(&a, &b).unwrap() - 0.1).abs() < 1e-15);
        let c = random(64, 2);
        let oracle = (a.iter().zip(&c).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 64.0).sqrt();
        assert!((rmse(&a, &c).unwrap() - oracle).abs() < 1e-12);
        assert!(rmse(&a, &c[..3]).is_err());
    }

    #[test]
    fn snr_improvement_cases() {
        let clean = random(128, 3);
        let noise = random(128, 4);
        let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + n).collect();
        assert_eq!(snr_improvement(&clean, &noisy, &noisy).unwrap(), 0.0);
        let half: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + 0.5 * n).collect();
        assert!(
            (snr_improvement(&clean, &noisy, &half).unwrap() - 20.0 * 2f64.log10()).abs() < 1e-12
        );
        assert_eq!(
            snr_improvement(&clean, &noisy, &clean).unwrap(),
            f64::INFINITY
        );
        assert!(snr_improvement(&clean, &clean, &noisy).is_err());

        let den = random(128, 5);
        let snr = |x: &[f64]| {
            let pc: f64 = clean.iter().map(|v| v * v).sum();
            let pe: f64 = x.iter().zip(&clean).map(|(a, b)| (a - b).powi(2)).sum();
            10.0 * (pc / pe).log10()
        };
        let oracle = snr(&den) - snr(&noisy);
        assert!((snr_improvement(&clean, &noisy, &den).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn prd_cases() {
        let a = random(32, 6);
        assert_eq!(prd(&a, &a).unwrap(), 0.0);
        assert!((prd(&a, &[0.0; 32]).unwrap() - 100.0).abs() < 1e-12);
        assert!(prd(&[0.0; 32], &a).is_err());
        let b = random(32, 7);
        let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = a.iter().map(|x| x * x).sum();
        assert!((prd(&a, &b).unwrap() - 100.0 * (num / den).sqrt()).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn metrics_permutation_invariant(seed in any::<u64>(), rot in 1usize..63) {
            let a = random(64, seed);
            let b = random(64, seed ^ 1);
            let perm: Vec<usize> = (0..64).map(|i| (i * 5 + rot) % 64).collect();
            let pa: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
            let pb: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
            prop_assert!((rmse(&a, &b).unwrap() - rmse(&pa, &pb).unwrap()).abs() < 1e-12);
            prop_assert!((prd(&a, &b).unwrap() - prd(&pa, &pb).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn no_change_means_no_improvement(seed in any::<u64>()) {
            let c = random(32, seed);
            let n = random(32, seed.wrapping_add(9));
            prop_assert_eq!(snr_improvement(&c, &n, &n).unwrap(), 0.0);
        }
    }

    fn sample_metrics(snrs: &[f64], base: f64) -> Vec<SnrMetrics> {
        snrs.iter()
            .enumerate()
            .map(|(i, &s)| SnrMetrics {
                snr_db: s,
                windows: 10,
                rmse: base + i as f64 * 0.01,
                snr_improvement_db: 10.0 - i as f64,
                prd_percent: 30.0 + base,
                input_rmse: 0.3,
            })
            .collect()
    }

    #[test]
    fn report_aggregates_and_round_trips() {
        let snrs = [-10.0, -7.0, -3.0, -1.0, 3.0, 7.0, 10.0];
        let mut r = MetricsReport::new(&snrs);
        r.add_row(
            1,
            Variant::Fcn,
            &[sample_metrics(&snrs, 0.2), sample_metrics(&snrs, 0.3)],
        )
        .unwrap();
        r.add_row(6, Variant::Backward(1), &[sample_metrics(&snrs, 0.1)])
            .unwrap();
        let c = r.rows[0].cells[0];
        assert!((c.rmse.mean - 0.25).abs() < 1e-15);
        assert!((c.rmse.std - (0.005f64).sqrt()).abs() < 1e-12);
        assert_eq!(r.rows[1].cells[3].rmse.std, 0.0);

        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * 7 * 3);
        let back = MetricsReport::parse_csv(&csv, Path::new("r.csv")).unwrap();
        assert_eq!(back, r);
        let table = r.to_table();
        assert!(table.contains("RMSE") && table.contains("B1") && table.contains("-10 dB"));
        assert!(MetricsReport::parse_csv("nope\n", Path::new("r.csv")).is_err());
    }

    #[test]
    fn report_infinity_round_trips() {
        let mut m = sample_metrics(&[0.0], 0.1);
        m[0].snr_improvement_db = f64::INFINITY;
        let mut r = MetricsReport::new(&[0.0]);
        r.add_row(1, Variant::Fcn, &[m]).unwrap();
        let back = MetricsReport::parse_csv(&r.to_csv(), Path::new("r.csv")).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn missing_group_is_reported() {
        let mut r = MetricsReport::new(&[0.0, 5.0]);
        let err = r
            .add_row(1, Variant::Fcn, &[sample_metrics(&[0.0], 0.1)])
            .unwrap_err();
        assert!(matches!(err, Error::MissingGroup(s) if s == 5.0));
    }

    fn small_net() -> Network {
        let mut spec = ModelSpec::new(Variant::Fcn, 1);
        spec.input_length = 64;
        build_model(&spec).unwrap()
    }

    #[test]
    fn evaluate_groups_by_snr() {
        let net = small_net();
        let mut test = PairSet::new(Role::Test, 64);
        for (i, snr) in [0.0, 0.0, 5.0].into_iter().enumerate() {
            let clean: Vec<f64> = (0..64).map(|t| (t as f64 * 0.2).sin()).collect();
            let noisy: Vec<f64> = clean
                .iter()
                .zip(random(64, i as u64))
                .map(|(c, n)| c + 0.3 * n)
                .collect();
            test.pairs.push(Pair {
                record: "r".into(),
                start: i * 64,
                noise: NoiseKind::Ma,
                noise_start: 0,
                snr_db: snr,
                clean,
                noisy,
            });
        }
        let m = evaluate_model(&net, &test, &[0.0, 5.0], 2).unwrap();
        assert_eq!(m[0].windows, 2);
        assert_eq!(m[1].windows, 1);
        let den = net
            .denoise_windows(&[test.pairs[2].noisy.clone()], 1)
            .unwrap();
        assert_eq!(m[1].rmse, rmse(&test.pairs[2].clean, &den[0]).unwrap());
        let seq = par::with_mode(par::ExecMode::Sequential, || {
            evaluate_model(&net, &test, &[0.0, 5.0], 2).unwrap()
        });
        assert_eq!(seq, m);
        assert!(matches!(
            evaluate_model(&net, &test, &[0.0, 7.0], 2).unwrap_err(),
            Error::MissingGroup(s) if s == 7.0
        ));
    }

    #[test]
    fn decomposition_shapes_and_sum() {
        let x = random(1024, 8);
        let r = decomposition_report(&x, 3, 360.0).unwrap();
        let lens: Vec<usize> = r.bands.iter().map(|b| b.coefficients.len()).collect();
        assert_eq!(lens, vec![512, 256, 128, 128]);
        assert_eq!((r.bands[0].low_hz, r.bands[0].high_hz), (90.0, 180.0));
        assert_eq!((r.bands[2].low_hz, r.bands[2].high_hz), (22.5, 45.0));
        for i in 0..1024 {
            let s: f64 = r.bands.iter().map(|b| b.reconstruction[i]).sum();
            assert!((s - x[i]).abs() < 1e-8);
        }
        assert!(decomposition_report(&x[..1020], 3, 360.0).is_err());
    }

    #[test]
    fn thirty_hz_lands_in_d3() {
        let x: Vec<f64> = (0..1024)
            .map(|i| (2.0 * PI * 30.0 * i as f64 / 360.0).sin())
            .collect();
        let r = decomposition_report(&x, 3, 360.0).unwrap();
        let f = r.energy_fractions();
        assert!(f[2] > 0.6, "{f:?}");
    }

    #[test]
    fn decomposition_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = decomposition_report(&random(256, 9), 3, 360.0).unwrap();
        let files = r.write(dir.path(), true).unwrap();
        assert_eq!(files.len(), 5);
        let d1 = std::fs::read_to_string(dir.path().join("band_D1.csv")).unwrap();
        assert!(d1.starts_with("# D1 90-180 Hz\n"));
        assert_eq!(d1.lines().count(), 2 + 256);
        assert!(std::fs::read_to_string(dir.path().join("bands.svg"))
            .unwrap()
            .contains("<polyline"));
    }
}
