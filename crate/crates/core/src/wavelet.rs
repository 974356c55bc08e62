//! Daubechies-6 filter bank and periodic discrete wavelet transforms.
//!
//! # Conventions
//!
//! Boundaries are periodic: a length-`N` signal yields two length-`N/2`
//! branches at every level and the transform is exactly orthogonal.
//!
//! Analysis is a circular convolution followed by keeping the odd-indexed
//! samples:
//!
//! ```text
//! approx[n] = sum_k dec_lo[k] * x[(2n + 1 - k) mod N]
//! detail[n] = sum_k dec_hi[k] * x[(2n + 1 - k) mod N]
//! ```
//!
//! Synthesis upsamples each branch, convolves with `rec_lo` / `rec_hi` and
//! sums, with a fixed delay of `taps - 2` samples so that the round trip is
//! the identity:
//!
//! ```text
//! x[(2n + 2 - taps + j) mod N] += rec_lo[j] * approx[n] + rec_hi[j] * detail[n]
//! ```
//!
//! which is the exact transpose of the analysis operator.

use crate::error::{Error, Result};

/// Orthonormal db6 decomposition low-pass filter (12 taps), from the
/// minimum-phase spectral factorization evaluated in extended precision.
const DB6_DEC_LO: [f64; 12] = [
    -0.001_077_301_085_308_479_6,
    0.004_777_257_510_945_510_6,
    0.000_553_842_201_161_496_14,
    -0.031_582_039_317_486_029,
    0.027_522_865_530_305_728,
    0.097_501_605_587_323_049,
    -0.129_766_867_567_261_94,
    -0.226_264_693_965_439_82,
    0.315_250_351_709_197_63,
    0.751_133_908_021_095_35,
    0.494_623_890_398_453_09,
    0.111_540_743_350_109_46,
];

/// Decomposition/reconstruction low- and high-pass filter quadruple.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub dec_lo: Vec<f64>,
    pub dec_hi: Vec<f64>,
    pub rec_lo: Vec<f64>,
    pub rec_hi: Vec<f64>,
}

impl FilterBank {
    /// Builds an orthogonal bank from its decomposition low-pass filter.
    ///
    /// `dec_hi[n] = (-1)^n dec_lo[len-1-n]`; reconstruction filters are the
    /// time reverses of the decomposition filters.
    pub fn from_dec_lo(dec_lo: &[f64]) -> Result<Self> {
        let n = dec_lo.len();
        if n < 2 || n % 2 != 0 {
            return Err(Error::invalid(format!(
                "orthogonal filter length must be even and >= 2, got {n}"
            )));
        }
        let dec_hi: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * dec_lo[n - 1 - i])
            .collect();
        let rec_lo: Vec<f64> = dec_lo.iter().rev().copied().collect();
        let rec_hi: Vec<f64> = dec_hi.iter().rev().copied().collect();
        let bank = FilterBank {
            dec_lo: dec_lo.to_vec(),
            dec_hi,
            rec_lo,
            rec_hi,
        };
        bank.validate(1e-10)?;
        Ok(bank)
    }

    pub fn taps(&self) -> usize {
        self.dec_lo.len()
    }

    /// Checks the orthonormal-bank invariants at tolerance `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.dec_lo.len();
        if [&self.dec_hi, &self.rec_lo, &self.rec_hi]
            .iter()
            .any(|f| f.len() != n)
        {
            return Err(Error::invalid("filter lengths differ"));
        }
        let lo_sum: f64 = self.dec_lo.iter().sum();
        let hi_sum: f64 = self.dec_hi.iter().sum();
        let energy: f64 = self.dec_lo.iter().map(|c| c * c).sum();
        if (lo_sum - std::f64::consts::SQRT_2).abs() > tol {
            return Err(Error::invalid(format!("dec_lo sums to {lo_sum}")));
        }
        if hi_sum.abs() > tol {
            return Err(Error::invalid(format!("dec_hi sums to {hi_sum}")));
        }
        if (energy - 1.0).abs() > tol {
            return Err(Error::invalid(format!("dec_lo energy is {energy}")));
        }
        for i in 0..n {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            if (self.dec_hi[i] - sign * self.dec_lo[n - 1 - i]).abs() > tol
                || (self.rec_lo[i] - self.dec_lo[n - 1 - i]).abs() > tol
                || (self.rec_hi[i] - self.dec_hi[n - 1 - i]).abs() > tol
            {
                return Err(Error::invalid(format!("QMF relation fails at tap {i}")));
            }
        }
        Ok(())
    }
}

/// The 12-tap orthonormal Daubechies-6 bank.
pub fn make_db6_filters() -> FilterBank {
    FilterBank::from_dec_lo(&DB6_DEC_LO).expect("embedded db6 coefficients are valid")
}

/// One analysis level: `(approx, detail)`, each of length `N/2`.
pub fn dwt_step(signal: &[f64], bank: &FilterBank) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = signal.len();
    if n < 2 || n % 2 != 0 {
        return Err(Error::invalid(format!(
            "dwt_step needs an even length >= 2, got {n}"
        )));
    }
    let half = n / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    analysis_strided(signal, n, 1, bank, &mut approx, &mut detail, 1);
    Ok((approx, detail))
}

/// One synthesis level; inverse of [`dwt_step`].
pub fn idwt_step(approx: &[f64], detail: &[f64], bank: &FilterBank) -> Result<Vec<f64>> {
    if approx.len() != detail.len() || approx.is_empty() {
        return Err(Error::invalid(format!(
            "idwt_step needs equal non-empty branches, got {} and {}",
            approx.len(),
            detail.len()
        )));
    }
    let mut out = vec![0.0; approx.len() * 2];
    synthesis_strided(approx, detail, approx.len(), 1, bank, &mut out, 1);
    Ok(out)
}

/// Strided analysis used by both the 1D API and the DWT network layer.
///
/// Reads `n` samples `x[i * stride]` and writes `n/2` outputs at
/// `approx[i * out_stride]` / `detail[i * out_stride]`.
pub(crate) fn analysis_strided(
    x: &[f64],
    n: usize,
    stride: usize,
    bank: &FilterBank,
    approx: &mut [f64],
    detail: &mut [f64],
    out_stride: usize,
) {
    let taps = bank.taps();
    for i in 0..n / 2 {
        let mut a = 0.0;
        let mut d = 0.0;
        // index (2i + 1 - k) mod n, computed without signed arithmetic
        let base = 2 * i + 1 + taps * n;
        for k in 0..taps {
            let v = x[((base - k) % n) * stride];
            a += bank.dec_lo[k] * v;
            d += bank.dec_hi[k] * v;
        }
        approx[i * out_stride] = a;
        detail[i * out_stride] = d;
    }
}

/// Strided synthesis; accumulates into `out`, which must be zeroed by the
/// caller when a pure reconstruction is wanted.
pub(crate) fn synthesis_strided(
    approx: &[f64],
    detail: &[f64],
    half: usize,
    in_stride: usize,
    bank: &FilterBank,
    out: &mut [f64],
    out_stride: usize,
) {
    let taps = bank.taps();
    let n = 2 * half;
    for i in 0..half {
        let a = approx[i * in_stride];
        let d = detail[i * in_stride];
        // (2i + 2 - taps + j) mod n
        let base = 2 * i + 2 + taps * n - taps;
        for j in 0..taps {
            out[((base + j) % n) * out_stride] += bank.rec_lo[j] * a + bank.rec_hi[j] * d;
        }
    }
}

/// Multi-level decomposition with frequency-band bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    /// Final-level approximation `A`.
    pub approx: Vec<f64>,
    /// `D1..DL`, finest first.
    pub details: Vec<Vec<f64>>,
    pub levels: usize,
    pub original_length: usize,
    pub sampling_rate_hz: f64,
}

impl WaveletDecomposition {
    /// Frequency band `(low, high)` in Hz covered by detail level `k` (1-based).
    pub fn detail_band(&self, k: usize) -> (f64, f64) {
        detail_band(self.sampling_rate_hz, k)
    }

    /// Frequency band of the final approximation.
    pub fn approx_band(&self) -> (f64, f64) {
        (
            0.0,
            self.sampling_rate_hz / 2f64.powi(self.levels as i32 + 1),
        )
    }

    /// Same shape, all coefficients zero.
    pub fn zeros_like(&self) -> Self {
        WaveletDecomposition {
            approx: vec![0.0; self.approx.len()],
            details: self.details.iter().map(|d| vec![0.0; d.len()]).collect(),
            ..*self
        }
    }

    /// Total coefficient energy.
    pub fn energy(&self) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        sq(&self.approx) + self.details.iter().map(|d| sq(d)).sum::<f64>()
    }
}

/// `(fs / 2^(k+1), fs / 2^k)` for detail level `k`.
pub fn detail_band(fs: f64, k: usize) -> (f64, f64) {
    let hi = fs / 2f64.powi(k as i32);
    (hi / 2.0, hi)
}

pub fn wavedec(
    signal: &[f64],
    levels: usize,
    bank: &FilterBank,
    sampling_rate_hz: f64,
) -> Result<WaveletDecomposition> {
    let n = signal.len();
    if levels == 0 {
        return Err(Error::invalid("wavedec needs at least one level"));
    }
    if levels >= usize::BITS as usize || n == 0 || n % (1usize << levels) != 0 {
        return Err(Error::invalid(format!(
            "length {n} is not divisible by 2^{levels}"
        )));
    }
    let mut details = Vec::with_capacity(levels);
    let mut current = signal.to_vec();
    for _ in 0..levels {
        let (a, d) = dwt_step(&current, bank)?;
        details.push(d);
        current = a;
    }
    Ok(WaveletDecomposition {
        approx: current,
        details,
        levels,
        original_length: n,
        sampling_rate_hz,
    })
}

pub fn waverec(dec: &WaveletDecomposition, bank: &FilterBank) -> Result<Vec<f64>> {
    if dec.levels == 0 || dec.details.len() != dec.levels {
        return Err(Error::invalid(format!(
            "decomposition declares {} levels but holds {} detail bands",
            dec.levels,
            dec.details.len()
        )));
    }
    for (k, d) in dec.details.iter().enumerate() {
        let expected = dec.original_length >> (k + 1);
        if d.len() != expected || dec.original_length % (1 << (k + 1)) != 0 {
            return Err(Error::invalid(format!(
                "D{} has {} coefficients, expected {expected}",
                k + 1,
                d.len()
            )));
        }
    }
    if dec.approx.len() != dec.original_length >> dec.levels {
        return Err(Error::invalid(format!(
            "approximation has {} coefficients, expected {}",
            dec.approx.len(),
            dec.original_length >> dec.levels
        )));
    }
    let mut current = dec.approx.clone();
    for d in dec.details.iter().rev() {
        current = idwt_step(&current, d, bank)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Direct filter-then-decimate with explicit convolution indices.
    fn naive_dwt(x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = x.len() as i64;
        let conv: Vec<f64> = (0..n)
            .map(|m| {
                (0..h.len())
                    .map(|k| h[k] * x[(m - k as i64).rem_euclid(n) as usize])
                    .sum()
            })
            .collect();
        conv.iter().skip(1).step_by(2).copied().collect()
    }

    /// Upsample (odd slots), circular convolution with rec filter, advance by taps - 1.
    fn naive_idwt(a: &[f64], d: &[f64], bank: &FilterBank) -> Vec<f64> {
        let n = 2 * a.len();
        let mut ua = vec![0.0; n];
        let mut ud = vec![0.0; n];
        for i in 0..a.len() {
            ua[2 * i + 1] = a[i];
            ud[2 * i + 1] = d[i];
        }
        let taps = bank.taps() as i64;
        (0..n as i64)
            .map(|m| {
                let t = m + taps - 1;
                (0..taps)
                    .map(|j| {
                        let idx = (t - j).rem_euclid(n as i64) as usize;
                        bank.rec_lo[j as usize] * ua[idx] + bank.rec_hi[j as usize] * ud[idx]
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn db6_sums() {
        let b = make_db6_filters();
        assert!(b.dec_hi.iter().sum::<f64>().abs() < 1e-10);
        assert!((b.dec_lo.iter().sum::<f64>() - 2f64.sqrt()).abs() < 1e-9);
        b.validate(1e-10).unwrap();
    }

    #[test]
    fn constant_signal() {
        let b = make_db6_filters();
        let (a, d) = dwt_step(&[0.7; 64], &b).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-12));
        assert!(a
            .iter()
            .all(|v| (v - std::f64::consts::SQRT_2 * 0.7).abs() < 1e-10));
    }

    #[test]
    fn output_lengths_halve() {
        let b = make_db6_filters();
        let (a, d) = dwt_step(&random(1024, 1), &b).unwrap();
        assert_eq!((a.len(), d.len()), (512, 512));
    }

    #[test]
    fn rejects_odd_and_empty() {
        let b = make_db6_filters();
        assert!(dwt_step(&[1.0, 2.0, 3.0], &b).is_err());
        assert!(dwt_step(&[], &b).is_err());
        assert!(idwt_step(&[1.0], &[1.0, 2.0], &b).is_err());
    }

    #[test]
    fn matches_naive_analysis() {
        let b = make_db6_filters();
        let x = random(16, 2);
        let (a, d) = dwt_step(&x, &b).unwrap();
        for (u, v) in a.iter().zip(naive_dwt(&x, &b.dec_lo)) {
            assert!((u - v).abs() < 1e-12);
        }
        for (u, v) in d.iter().zip(naive_dwt(&x, &b.dec_hi)) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_synthesis() {
        let b = make_db6_filters();
        let a = random(8, 3);
        let d = random(8, 4);
        let x = idwt_step(&a, &d, &b).unwrap();
        for (u, v) in x.iter().zip(naive_idwt(&a, &d, &b)) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn single_level_round_trip() {
        let b = make_db6_filters();
        let x = random(128, 5);
        let (a, d) = dwt_step(&x, &b).unwrap();
        let y = idwt_step(&a, &d, &b).unwrap();
        assert!(x.iter().zip(&y).all(|(u, v)| (u - v).abs() < 1e-10));
        let z = idwt_step(&[0.0; 4], &[0.0; 4], &b).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn short_signals_round_trip() {
        // filter longer than the signal: periodization wraps several times
        let b = make_db6_filters();
        for n in [2, 4, 6, 8, 10] {
            let x = random(n, n as u64);
            let (a, d) = dwt_step(&x, &b).unwrap();
            let y = idwt_step(&a, &d, &b).unwrap();
            assert!(
                x.iter().zip(&y).all(|(u, v)| (u - v).abs() < 1e-12),
                "n={n}"
            );
        }
    }

    #[test]
    fn wavedec_lengths_and_bands() {
        let b = make_db6_filters();
        let dec = wavedec(&random(1024, 6), 3, &b, 360.0).unwrap();
        let lens: Vec<usize> = dec.details.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![512, 256, 128]);
        assert_eq!(dec.approx.len(), 128);
        assert_eq!(dec.detail_band(3), (22.5, 45.0));
        assert_eq!(dec.detail_band(1), (90.0, 180.0));
        assert!(wavedec(&random(100, 1), 3, &b, 360.0).is_err());
    }

    #[test]
    fn five_level_round_trip() {
        let b = make_db6_filters();
        let x = random(1024, 7);
        let y = waverec(&wavedec(&x, 5, &b, 360.0).unwrap(), &b).unwrap();
        assert!(x.iter().zip(&y).all(|(u, v)| (u - v).abs() < 1e-8));
    }

    #[test]
    fn zero_decomposition_and_band_isolation() {
        let b = make_db6_filters();
        let x = random(256, 8);
        let dec = wavedec(&x, 3, &b, 360.0).unwrap();
        let zero = waverec(&dec.zeros_like(), &b).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));

        let mut only_d1 = dec.zeros_like();
        only_d1.details[0] = dec.details[0].clone();
        let mut without_d1 = dec.clone();
        without_d1.details[0].iter_mut().for_each(|v| *v = 0.0);
        let a = waverec(&only_d1, &b).unwrap();
        let c = waverec(&without_d1, &b).unwrap();
        for i in 0..x.len() {
            assert!((a[i] - (x[i] - c[i])).abs() < 1e-8);
        }
    }

    #[test]
    fn waverec_rejects_inconsistent() {
        let b = make_db6_filters();
        let mut dec = wavedec(&random(64, 9), 2, &b, 360.0).unwrap();
        dec.details[1].pop();
        assert!(waverec(&dec, &b).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn perfect_reconstruction(seed in any::<u64>(), levels in 1usize..=5, mult in 1usize..=128) {
                let n = mult << levels;
                prop_assume!(n <= 4096);
                let b = make_db6_filters();
                let x = random(n, seed);
                let dec = wavedec(&x, levels, &b, 360.0).unwrap();
                let y = waverec(&dec, &b).unwrap();
                let err = x.iter().zip(&y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                prop_assert!(err < 1e-8);
                let ex: f64 = x.iter().map(|v| v * v).sum();
                prop_assert!((ex - dec.energy()).abs() <= 1e-8 * ex);
            }

            #[test]
            fn linearity(seed in any::<u64>(), a in -3.0f64..3.0, c in -3.0f64..3.0) {
                let b = make_db6_filters();
                let x = random(64, seed);
                let y = random(64, seed ^ 0x55);
                let z: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + c * v).collect();
                let (xa, xd) = dwt_step(&x, &b).unwrap();
                let (ya, yd) = dwt_step(&y, &b).unwrap();
                let (za, zd) = dwt_step(&z, &b).unwrap();
                for i in 0..32 {
                    prop_assert!((za[i] - (a * xa[i] + c * ya[i])).abs() < 1e-10);
                    prop_assert!((zd[i] - (a * xd[i] + c * yd[i])).abs() < 1e-10);
                }
            }

            #[test]
            fn shift_by_two_covariance(seed in any::<u64>()) {
                let b = make_db6_filters();
                let x = random(64, seed);
                let mut shifted = x.clone();
                shifted.rotate_right(2);
                let (a, d) = dwt_step(&x, &b).unwrap();
                let (sa, sd) = dwt_step(&shifted, &b).unwrap();
                for i in 0..32 {
                    prop_assert!((sa[(i + 1) % 32] - a[i]).abs() < 1e-12);
                    prop_assert!((sd[(i + 1) % 32] - d[i]).abs() < 1e-12);
                }
            }
        }
    }
}
