//! Seeded pseudo-ECG and noise generators for runs without external data.
//!
//! Beats are sums of Gaussian bumps (P, Q, R, S, T) with jittered RR
//! intervals and per-record morphology. Noise generators imitate the three
//! stress-test noise types in character only: slow baseline wander, bursty
//! low-frequency electrode motion and broadband muscle artifact.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{NoiseBank, NoiseKind, SignalRecord};
use crate::rng::stream;

const BEAT_WAVES: [(f64, f64, f64); 5] = [
    // (offset s, width s, amplitude mV)
    (-0.20, 0.025, 0.12),
    (-0.035, 0.010, -0.12),
    (0.0, 0.011, 1.0),
    (0.035, 0.010, -0.25),
    (0.26, 0.045, 0.30),
];

/// `n` samples of pseudo-ECG in millivolts.
pub fn synthetic_ecg(n: usize, fs: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[0xec9]);
    let heart_rate = rng.gen_range(60.0..90.0);
    let mean_rr = 60.0 / heart_rate;
    let waves: Vec<(f64, f64, f64)> = BEAT_WAVES
        .iter()
        .map(|&(o, w, a)| {
            (
                o,
                w * rng.gen_range(0.85..1.15),
                a * rng.gen_range(0.8..1.2),
            )
        })
        .collect();

    let mut x = vec![0.0; n];
    let duration = n as f64 / fs;
    let mut t = rng.gen_range(0.3..0.3 + mean_rr);
    while t < duration + 0.5 {
        let scale = 1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal);
        for &(offset, width, amp) in &waves {
            let centre = t + offset;
            let lo = (((centre - 4.0 * width) * fs).floor().max(0.0)) as usize;
            let hi = (((centre + 4.0 * width) * fs).ceil().max(0.0) as usize).min(n);
            for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
                let d = (i as f64 / fs - centre) / width;
                *v += scale * amp * (-0.5 * d * d).exp();
            }
        }
        let jitter = 0.05 * rng.sample::<f64, _>(StandardNormal);
        t += mean_rr * (1.0 + jitter.clamp(-0.15, 0.15));
    }
    x
}

fn one_pole_lowpass(x: &mut [f64], cutoff_hz: f64, fs: f64) {
    let a = 1.0 - (-2.0 * PI * cutoff_hz / fs).exp();
    let mut y = 0.0;
    for v in x.iter_mut() {
        y += a * (*v - y);
        *v = y;
    }
}

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `n` samples of synthetic noise of the given kind (zero mean, roughly unit
/// scale; mixing rescales it anyway).
pub fn synthetic_noise(kind: NoiseKind, n: usize, fs: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[0x9015e, kind as u64]);
    let mut x: Vec<f64> = match kind {
        NoiseKind::Bw => {
            let tones: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| {
                    (
                        rng.gen_range(0.05..0.4),
                        rng.gen_range(0.2..0.6),
                        rng.gen_range(0.0..2.0 * PI),
                    )
                })
                .collect();
            let mut drift = gaussian(&mut rng, n);
            one_pole_lowpass(&mut drift, 0.3, fs);
            let sd = (drift.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
            let drift_scale = if sd > 0.0 { 0.3 / sd } else { 0.0 };
            (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    tones
                        .iter()
                        .map(|&(f, a, p)| a * (2.0 * PI * f * t + p).sin())
                        .sum::<f64>()
                        + drift_scale * drift[i]
                })
                .collect()
        }
        NoiseKind::Em => {
            let mut base = gaussian(&mut rng, n);
            one_pole_lowpass(&mut base, 8.0, fs);
            let mut env = vec![0.0; n];
            let mut i = 0;
            let mut on = false;
            while i < n {
                let mean_s = if on { 1.0 } else { 2.0 };
                let len = ((rng.gen_range(0.2..1.8) * mean_s * fs) as usize).max(1);
                let level = if on { rng.gen_range(0.7..1.3) } else { 0.15 };
                env[i..(i + len).min(n)].iter_mut().for_each(|e| *e = level);
                i += len;
                on = !on;
            }
            one_pole_lowpass(&mut env, 2.0, fs);
            base.iter().zip(&env).map(|(b, e)| b * e).collect()
        }
        NoiseKind::Ma => {
            let white = gaussian(&mut rng, n);
            let f = rng.gen_range(0.1..0.3);
            let p = rng.gen_range(0.0..2.0 * PI);
            white
                .iter()
                .enumerate()
                .map(|(i, w)| w * (1.0 + 0.5 * (2.0 * PI * f * i as f64 / fs + p).sin()))
                .collect()
        }
    };
    let mean = x.iter().sum::<f64>() / n.max(1) as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    x
}

/// `count` records named `syn000`, `syn001`, ...
pub fn synthetic_records(count: usize, seconds: f64, fs: f64, seed: u64) -> Vec<SignalRecord> {
    let n = (seconds * fs).round() as usize;
    (0..count)
        .map(|i| SignalRecord {
            name: format!("syn{i:03}"),
            samples: synthetic_ecg(n, fs, crate::rng::derive_seed(seed, &[i as u64])),
            sampling_rate_hz: fs,
        })
        .collect()
}

pub fn synthetic_noise_bank(samples: usize, fs: f64, seed: u64) -> NoiseBank {
    NoiseBank::new(
        synthetic_noise(NoiseKind::Bw, samples, fs, seed),
        synthetic_noise(NoiseKind::Em, samples, fs, seed),
        synthetic_noise(NoiseKind::Ma, samples, fs, seed),
    )
    .expect("synthetic noise is non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecg_is_seeded_and_peaky() {
        let a = synthetic_ecg(3600, 360.0, 1);
        assert_eq!(a, synthetic_ecg(3600, 360.0, 1));
        assert_ne!(a, synthetic_ecg(3600, 360.0, 2));
        let max = a.iter().cloned().fold(f64::MIN, f64::max);
        assert!(max > 0.7 && max < 1.6, "{max}");
        // 10 s at 60-90 bpm: count R peaks above half the maximum
        let peaks = (1..a.len() - 1)
            .filter(|&i| a[i] > 0.5 * max && a[i] >= a[i - 1] && a[i] > a[i + 1])
            .count();
        assert!((9..=16).contains(&peaks), "{peaks}");
    }

    #[test]
    fn noise_kinds_differ_in_spectrum() {
        let fs = 360.0;
        let n = 36000;
        let lowness = |x: &[f64]| {
            // fraction of energy left after a 1 Hz low-pass
            let mut y = x.to_vec();
            one_pole_lowpass(&mut y, 1.0, fs);
            y.iter().map(|v| v * v).sum::<f64>() / x.iter().map(|v| v * v).sum::<f64>()
        };
        let bw = synthetic_noise(NoiseKind::Bw, n, fs, 3);
        let ma = synthetic_noise(NoiseKind::Ma, n, fs, 3);
        let em = synthetic_noise(NoiseKind::Em, n, fs, 3);
        assert!(lowness(&bw) > 0.8, "{}", lowness(&bw));
        assert!(lowness(&ma) < 0.05, "{}", lowness(&ma));
        assert!(lowness(&em) < lowness(&bw));
        for x in [&bw, &ma, &em] {
            assert!(x.iter().sum::<f64>().abs() / (n as f64) < 1e-12);
        }
    }
}
