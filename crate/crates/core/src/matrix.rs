use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// Dense row-major matrix. Rows index the pre-synaptic side and columns the
/// post-synaptic side, so `m[(i, j)]` is the synapse from `i` onto `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("Matrix::from_vec", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|x| *x *= k);
    }

    pub(crate) fn check_shape(
        &self,
        context: &'static str,
        rows: usize,
        cols: usize,
    ) -> Result<()> {
        check_len(context, rows, self.rows)?;
        check_len(context, cols, self.cols)
    }

    /// `self += k * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Matrix, k: f64) -> Result<()> {
        other.check_shape("Matrix::add_scaled", self.rows, self.cols)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    /// Accumulates the rows selected by `active` into `out` (out_j += Σ_{i active} m_ij).
    pub fn accumulate_active_rows(&self, active: &[bool], out: &mut [f64]) -> Result<()> {
        check_len(
            "Matrix::accumulate_active_rows (rows)",
            self.rows,
            active.len(),
        )?;
        check_len(
            "Matrix::accumulate_active_rows (cols)",
            self.cols,
            out.len(),
        )?;
        for (i, _) in active.iter().enumerate().filter(|(_, &on)| on) {
            for (o, w) in out.iter_mut().zip(self.row(i)) {
                *o += w;
            }
        }
        Ok(())
    }

    /// `out_i = Σ_j m_ij · v_j`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("Matrix::mul_vec", self.cols, v.len())?;
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `out_j = Σ_i m_ij · v_i`.
    pub fn transpose_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("Matrix::transpose_mul_vec", self.rows, v.len())?;
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(i)) {
                *o += vi * w;
            }
        }
        Ok(out)
    }

    /// Order-sensitive checksum over the raw bit patterns.
    pub fn checksum(&self) -> u64 {
        self.data.iter().fold(0xcbf2_9ce4_8422_2325_u64, |h, x| {
            (h ^ x.to_bits()).wrapping_mul(0x0100_0000_01b3)
        })
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_indexing() {
        let m = Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        assert_eq!(m.mul_vec(&[1.0, 2.0]).unwrap(), vec![2.0, 8.0, 14.0]);
        assert_eq!(
            m.transpose_mul_vec(&[1.0, 0.0, 1.0]).unwrap(),
            vec![4.0, 6.0]
        );
        let mut acc = vec![0.0; 2];
        m.accumulate_active_rows(&[true, false, true], &mut acc)
            .unwrap();
        assert_eq!(acc, vec![4.0, 6.0]);
    }

    #[test]
    fn shape_errors() {
        let m = Matrix::zeros(2, 3);
        assert!(m.mul_vec(&[0.0; 2]).is_err());
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn checksum_tracks_single_bit_changes() {
        let mut m = Matrix::zeros(4, 4);
        let before = m.checksum();
        m[(3, 3)] = f64::from_bits(1);
        assert_ne!(before, m.checksum());
    }
}
