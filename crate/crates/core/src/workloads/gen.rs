use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{Mask, Matrix};
use crate::error::{Error, Result};

/// Highest sparsity covered by the evaluated ranges.
pub const MAX_EVALUATED_SPARSITY: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SparsityKind {
    UniformRandom { rate: f64 },
    Nm { n: usize, m: usize },
    Window { width: usize, seq: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsitySpec {
    #[serde(flatten)]
    pub kind: SparsityKind,
    pub seed: u64,
}

impl SparsitySpec {
    pub fn uniform(rate: f64, seed: u64) -> Self {
        SparsitySpec {
            kind: SparsityKind::UniformRandom { rate },
            seed,
        }
    }

    pub fn nm(n: usize, m: usize, seed: u64) -> Self {
        SparsitySpec {
            kind: SparsityKind::Nm { n, m },
            seed,
        }
    }

    /// Warning text when the spec leaves the evaluated sparsity range.
    pub fn range_warning(&self) -> Option<String> {
        match self.kind {
            SparsityKind::UniformRandom { rate } if rate > MAX_EVALUATED_SPARSITY => Some(format!(
                "sparsity {rate} is outside the evaluated range (<= {MAX_EVALUATED_SPARSITY})"
            )),
            _ => None,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn nonzero_i8(r: &mut ChaCha8Rng) -> i32 {
    loop {
        let v: i8 = r.gen();
        if v != 0 {
            return v as i32;
        }
    }
}

/// Number of nonzeros a uniform spec yields for `size` elements.
pub fn exact_nnz(rate: f64, size: usize) -> usize {
    ((1.0 - rate) * size as f64).round() as usize
}

/// Deterministic sparse INT8 matrix following `spec`.
pub fn gen_matrix(rows: usize, cols: usize, spec: &SparsitySpec) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::DegenerateShape(format!("{rows}x{cols}")));
    }
    if let Some(w) = spec.range_warning() {
        log::warn!("{w}");
    }
    let mut r = rng(spec.seed);
    let mut out = Matrix::zeros(rows, cols);
    match spec.kind {
        SparsityKind::UniformRandom { rate } => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("sparsity rate {rate} not in [0,1]")));
            }
            let size = rows * cols;
            let mut picks = sample(&mut r, size, exact_nnz(rate, size)).into_vec();
            picks.sort_unstable();
            for i in picks {
                out.data[i] = nonzero_i8(&mut r);
            }
        }
        SparsityKind::Nm { n, m } => {
            if n == 0 || n > m {
                return Err(Error::Config(format!("N:M pattern {n}:{m} needs 1 <= n <= m")));
            }
            for row in 0..rows {
                for b in (0..cols).step_by(m) {
                    let len = m.min(cols - b);
                    let mut picks = sample(&mut r, len, n.min(len)).into_vec();
                    picks.sort_unstable();
                    for p in picks {
                        out.set(row, b + p, nonzero_i8(&mut r));
                    }
                }
            }
        }
        SparsityKind::Window { width, seq } => {
            if rows != seq || cols != seq {
                return Err(Error::ShapeMismatch(format!(
                    "window over {seq} needs a {seq}x{seq} matrix, got {rows}x{cols}"
                )));
            }
            let mask = Mask::window(width, seq)?;
            for (i, b) in mask.bits.iter().enumerate() {
                if *b {
                    out.data[i] = nonzero_i8(&mut r);
                }
            }
        }
    }
    Ok(out)
}

/// Dense INT8 matrix with uniformly random entries.
pub fn gen_dense(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    Matrix::from_fn(rows, cols, |_, _| r.gen::<i8>() as i32)
}

/// Mask with an exact number of set positions.
pub fn gen_mask(rows: usize, cols: usize, rate: f64, seed: u64) -> Mask {
    let mut r = rng(seed);
    let mut m = Mask::new(rows, cols, false);
    for i in sample(&mut r, rows * cols, exact_nnz(rate, rows * cols)) {
        m.bits[i] = true;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_when_rate_zero() {
        let m = gen_matrix(16, 16, &SparsitySpec::uniform(0.0, 1)).unwrap();
        assert_eq!(m.nnz(), 256);
    }

    #[test]
    fn exact_count() {
        let m = gen_matrix(100, 100, &SparsitySpec::uniform(0.9, 42)).unwrap();
        assert_eq!(m.nnz(), 1000);
    }

    #[test]
    fn nm_blocks() {
        let m = gen_matrix(8, 8, &SparsitySpec::nm(2, 4, 3)).unwrap();
        for r in 0..8 {
            for b in [0, 4] {
                assert_eq!(m.row(r)[b..b + 4].iter().filter(|v| **v != 0).count(), 2);
            }
        }
    }

    #[test]
    fn deterministic() {
        let s = SparsitySpec::uniform(0.6, 9);
        assert_eq!(gen_matrix(32, 17, &s).unwrap(), gen_matrix(32, 17, &s).unwrap());
        assert_ne!(
            gen_matrix(32, 17, &s).unwrap(),
            gen_matrix(32, 17, &SparsitySpec::uniform(0.6, 10)).unwrap()
        );
    }

    #[test]
    fn high_sparsity_warns_but_generates() {
        let s = SparsitySpec::uniform(0.97, 1);
        assert!(s.range_warning().is_some());
        assert_eq!(gen_matrix(10, 10, &s).unwrap().nnz(), 3);
        assert!(SparsitySpec::uniform(0.95, 1).range_warning().is_none());
    }
}
