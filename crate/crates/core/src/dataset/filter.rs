//! Butterworth filters as cascaded biquads, zero-phase application and
//! moving-average smoothing.

use std::f64::consts::PI;

/// One second-order section `b0 + b1 z^-1 + b2 z^-2 / (1 + a1 z^-1 + a2 z^-2)`.
/// First-order sections have `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    LowPass,
    HighPass,
}

/// Digital Butterworth design by the bilinear transform with frequency
/// prewarping, so the -3 dB point lands exactly on `cutoff_hz`.
///
/// # Panics
/// If `order == 0` or the cutoff is not strictly inside `(0, fs / 2)`.
pub fn butterworth(order: usize, cutoff_hz: f64, fs: f64, kind: FilterKind) -> Vec<Biquad> {
    assert!(order > 0, "filter order must be positive");
    assert!(
        cutoff_hz > 0.0 && cutoff_hz < fs / 2.0,
        "cutoff {cutoff_hz} Hz outside (0, {}) Hz",
        fs / 2.0
    );
    let k = 2.0 * fs;
    let wc = k * (PI * cutoff_hz / fs).tan();
    let mut sections = Vec::with_capacity(order.div_ceil(2));
    for i in 0..order / 2 {
        // analog section s^2 + 2 zeta wc s + wc^2
        let two_zeta = 2.0 * (PI * (2 * i + 1) as f64 / (2 * order) as f64).sin();
        let a0 = k * k + two_zeta * wc * k + wc * wc;
        let a1 = 2.0 * (wc * wc - k * k);
        let a2 = k * k - two_zeta * wc * k + wc * wc;
        let b = match kind {
            FilterKind::LowPass => [wc * wc, 2.0 * wc * wc, wc * wc],
            FilterKind::HighPass => [k * k, -2.0 * k * k, k * k],
        };
        sections.push(Biquad {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [a1 / a0, a2 / a0],
        });
    }
    if order % 2 == 1 {
        let a0 = k + wc;
        let a1 = wc - k;
        let b = match kind {
            FilterKind::LowPass => [wc, wc],
            FilterKind::HighPass => [k, -k],
        };
        sections.push(Biquad {
            b: [b[0] / a0, b[1] / a0, 0.0],
            a: [a1 / a0, 0.0],
        });
    }
    sections
}

/// Causal filtering from a zero state (transposed direct form II).
pub fn sosfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for s in sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in y.iter_mut() {
            let input = *v;
            let out = s.b[0] * input + z1;
            z1 = s.b[1] * input - s.a[0] * out + z2;
            z2 = s.b[2] * input - s.a[1] * out;
            *v = out;
        }
    }
    y
}

/// Zero-phase filtering: forward pass, then backward pass, over a signal
/// extended at both ends by `pad` samples of odd reflection
/// (`2 x[0] - x[i]`), which keeps the value and slope continuous at the edges.
/// The magnitude response is squared (effective order doubles).
pub fn filtfilt(sections: &[Biquad], x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = pad.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    let mut y = sosfilt(sections, &ext);
    y.reverse();
    let mut y = sosfilt(sections, &y);
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Centred moving average of odd width; windows shrink at the edges so the
/// output has the input length and is never biased towards zero.
pub fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &v in x {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Magnitude response of a cascade at `freq_hz`.
pub fn magnitude(sections: &[Biquad], freq_hz: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * freq_hz / fs;
    let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
    sections
        .iter()
        .map(|s| {
            let nr = s.b[0] + s.b[1] * c1 + s.b[2] * c2;
            let ni = -(s.b[1] * s1 + s.b[2] * s2);
            let dr = 1.0 + s.a[0] * c1 + s.a[1] * c2;
            let di = -(s.a[0] * s1 + s.a[1] * s2);
            ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
        })
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn butterworth_magnitude_shape() {
        let fs = 360.0;
        let lp = butterworth(5, 100.0, fs, FilterKind::LowPass);
        assert_eq!(lp.len(), 3);
        assert!((magnitude(&lp, 0.0, fs) - 1.0).abs() < 1e-12);
        assert!((magnitude(&lp, 100.0, fs) - 0.5f64.sqrt()).abs() < 1e-9);
        let hp = butterworth(5, 0.67, fs, FilterKind::HighPass);
        assert!((magnitude(&hp, 180.0, fs) - 1.0).abs() < 1e-12);
        assert!((magnitude(&hp, 0.67, fs) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!(magnitude(&hp, 0.0, fs) < 1e-12);
    }

    #[test]
    fn analog_prototype_magnitude() {
        // |H| = 1 / sqrt(1 + (wa / wc)^(2n)) with wa the prewarped frequency
        let fs = 360.0;
        let lp = butterworth(5, 100.0, fs, FilterKind::LowPass);
        for f in [10.0, 50.0, 120.0, 170.0] {
            let ratio = (PI * f / fs).tan() / (PI * 100.0 / fs).tan();
            let expected = 1.0 / (1.0 + ratio.powi(10)).sqrt();
            assert!((magnitude(&lp, f, fs) - expected).abs() < 1e-12, "{f}");
        }
    }

    #[test]
    fn moving_average_edges() {
        let y = moving_average(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 5);
        assert_eq!(y.len(), 6);
        assert!((y[0] - 2.0).abs() < 1e-15);
        assert!((y[2] - 3.0).abs() < 1e-15);
        assert!((y[5] - 5.0).abs() < 1e-15);
        assert_eq!(moving_average(&[7.0; 3], 5), vec![7.0; 3]);
    }

    #[test]
    fn filtfilt_is_zero_phase() {
        let fs = 360.0;
        let lp = butterworth(5, 100.0, fs, FilterKind::LowPass);
        let x: Vec<f64> = (0..3600)
            .map(|i| (2.0 * PI * 5.0 * i as f64 / fs).sin())
            .collect();
        let y = filtfilt(&lp, &x, 1080);
        let err: f64 = x[360..3240]
            .iter()
            .zip(&y[360..3240])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
        assert!(rms(&y) > 0.7);
    }
}
