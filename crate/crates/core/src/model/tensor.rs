use crate::Scalar;

/// Row-major 2-D buffer: one row per batch item.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self { rows: rows.len(), cols, data: rows.concat() }
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Columns `[start, start + width)` of every row.
    pub fn columns(&self, start: usize, width: usize) -> Self {
        assert!(start + width <= self.cols);
        let mut out = Self::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }
}

/// Batch of multichannel 1-D signals laid out as `[batch][channel][time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    pub batch: usize,
    pub channels: usize,
    pub len: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Signal<T> {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self { batch, channels, len, data: vec![T::zero(); batch * channels * len] }
    }

    /// Single-channel batch from equal-length waveforms.
    pub fn from_waveforms(waves: &[&[T]]) -> Self {
        let len = waves.first().map_or(0, |w| w.len());
        assert!(waves.iter().all(|w| w.len() == len), "waveforms must share a length");
        Self { batch: waves.len(), channels: 1, len, data: waves.concat() }
    }

    pub fn lane(&self, b: usize, c: usize) -> &[T] {
        let start = (b * self.channels + c) * self.len;
        &self.data[start..start + self.len]
    }
}
