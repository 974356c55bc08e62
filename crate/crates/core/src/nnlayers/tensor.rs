use crate::error::{Error, Result};

/// Dense `(batch, length, channels)` array of `f64`.
///
/// Layout is row-major with channels fastest:
/// `data[(b * length + l) * channels + c]`. Each sample is one contiguous
/// `length * channels` block, which is also the checkpoint layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    batch: usize,
    length: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(batch: usize, length: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if batch == 0 || length == 0 || channels == 0 {
            return Err(Error::shape(format!(
                "tensor dimensions must be >= 1, got ({batch}, {length}, {channels})"
            )));
        }
        if data.len() != batch * length * channels {
            return Err(Error::shape(format!(
                "({batch}, {length}, {channels}) needs {} values, got {}",
                batch * length * channels,
                data.len()
            )));
        }
        Ok(Tensor3 {
            batch,
            length,
            channels,
            data,
        })
    }

    pub fn zeros(batch: usize, length: usize, channels: usize) -> Self {
        Tensor3::new(
            batch,
            length,
            channels,
            vec![0.0; batch * length * channels],
        )
        .expect("zeros with nonzero dimensions")
    }

    /// Stacks single-channel windows into a `(n, len, 1)` tensor.
    pub fn from_windows<W: AsRef<[f64]>>(windows: &[W]) -> Result<Self> {
        let len = windows.first().map(|w| w.as_ref().len()).unwrap_or(0);
        if windows.iter().any(|w| w.as_ref().len() != len) {
            return Err(Error::shape("windows differ in length"));
        }
        let data = windows
            .iter()
            .flat_map(|w| w.as_ref().iter().copied())
            .collect();
        Tensor3::new(windows.len(), len, 1, data)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.length, self.channels)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn sample_len(&self) -> usize {
        self.length * self.channels
    }

    pub fn sample(&self, b: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn at(&self, b: usize, l: usize, c: usize) -> f64 {
        self.data[(b * self.length + l) * self.channels + c]
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Tensor3 {
        Tensor3 {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn dot(&self, other: &Tensor3) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn same_shape(&self, other: &Tensor3) -> bool {
        self.shape() == other.shape()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Splits along channels into `[0, at)` and `[at, channels)`.
    pub fn split_channels(&self, at: usize) -> (Tensor3, Tensor3) {
        let (b, l, c) = self.shape();
        let mut left = Vec::with_capacity(b * l * at);
        let mut right = Vec::with_capacity(b * l * (c - at));
        for row in self.data.chunks(c) {
            left.extend_from_slice(&row[..at]);
            right.extend_from_slice(&row[at..]);
        }
        (
            Tensor3::new(b, l, at, left).expect("split shape"),
            Tensor3::new(b, l, c - at, right).expect("split shape"),
        )
    }

    /// Concatenates along channels; batch and length must agree.
    pub fn concat_channels(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
        if a.batch != b.batch || a.length != b.length {
            return Err(Error::shape(format!(
                "cannot concatenate {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let c = a.channels + b.channels;
        let mut data = Vec::with_capacity(a.batch * a.length * c);
        for (ra, rb) in a.data.chunks(a.channels).zip(b.data.chunks(b.channels)) {
            data.extend_from_slice(ra);
            data.extend_from_slice(rb);
        }
        Tensor3::new(a.batch, a.length, c, data)
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor3) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::shape(format!(
                "cannot add {:?} and {:?}",
                other.shape(),
                self.shape()
            )));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor3::new(0, 4, 1, vec![]).is_err());
        assert!(Tensor3::new(1, 4, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn split_concat_inverse() {
        let t = Tensor3::new(2, 3, 5, (0..30).map(|v| v as f64).collect()).unwrap();
        let (a, b) = t.split_channels(2);
        assert_eq!(a.shape(), (2, 3, 2));
        assert_eq!(a.at(1, 2, 1), t.at(1, 2, 1));
        assert_eq!(b.at(0, 1, 0), t.at(0, 1, 2));
        assert_eq!(Tensor3::concat_channels(&a, &b).unwrap(), t);
    }
}
