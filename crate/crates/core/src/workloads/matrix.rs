use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major integer matrix. Operands hold INT8 values; results use the
/// full i32 range.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> i32) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn identity(n: usize) -> Matrix {
        Matrix::from_fn(n, n, |r, c| (r == c) as i32)
    }

    pub fn from_rows(rows: &[Vec<i32>]) -> Result<Matrix> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: i32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn add_at(&mut self, r: usize, c: usize, v: i32) {
        let e = &mut self.data[r * self.cols + c];
        *e = e.wrapping_add(v);
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn sparsity(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        1.0 - self.nnz() as f64 / self.data.len() as f64
    }

    pub fn row(&self, r: usize) -> &[i32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Copy padded with zeros to at least `rows` × `cols`.
    pub fn padded(&self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows.max(self.rows), cols.max(self.cols), |r, c| {
            if r < self.rows && c < self.cols {
                self.get(r, c)
            } else {
                0
            }
        })
    }

    pub fn cropped(&self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |r, c| self.get(r, c))
    }

    pub fn check_int8(&self, what: &str) -> Result<()> {
        if let Some(v) = self.data.iter().find(|v| i8::try_from(**v).is_err()) {
            return Err(Error::ShapeMismatch(format!("{what} holds {v}, outside INT8")));
        }
        Ok(())
    }
}

/// Output mask for sampled products.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskPattern {
    Unstructured(Mask),
    /// Band of `width` columns per row, clamped to the matrix.
    Window { width: usize, seq_len: usize },
    Nm { n: usize, m: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, value: bool) -> Mask {
        Mask {
            rows,
            cols,
            bits: vec![value; rows * cols],
        }
    }

    pub fn from_matrix(m: &Matrix) -> Mask {
        Mask {
            rows: m.rows,
            cols: m.cols,
            bits: m.data.iter().map(|&v| v != 0).collect(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// First column of row `i` in a sliding window of `width` over `seq`.
    pub fn window_start(i: usize, width: usize, seq: usize) -> usize {
        (i as i64 - (width / 2) as i64).clamp(0, (seq - width) as i64) as usize
    }

    pub fn window(width: usize, seq: usize) -> Result<Mask> {
        if width == 0 || width > seq {
            return Err(Error::DegenerateShape(format!("window {width} over {seq}")));
        }
        let mut m = Mask::new(seq, seq, false);
        for i in 0..seq {
            let s = Mask::window_start(i, width, seq);
            for j in s..s + width {
                m.bits[i * seq + j] = true;
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_population() {
        let m = Mask::window(4, 16).unwrap();
        assert_eq!(m.count(), 64);
        assert!(m.get(0, 0) && m.get(0, 3) && !m.get(0, 4));
        assert!(m.get(15, 12) && m.get(15, 15));
        assert_eq!(Mask::window(16, 16).unwrap().count(), 256);
    }

    #[test]
    fn padding_roundtrip() {
        let a = Matrix::from_fn(3, 5, |r, c| (r * 5 + c) as i32);
        let p = a.padded(4, 8);
        assert_eq!((p.rows, p.cols), (4, 8));
        assert_eq!(p.cropped(3, 5), a);
        assert_eq!(p.get(3, 7), 0);
    }
}
