//! Operand generation, matrix file formats and reference oracles.

mod gen;
mod matrix;
mod mtx;
mod oracle;

pub use gen::{exact_nnz, gen_dense, gen_mask, gen_matrix, rng, SparsityKind, SparsitySpec, MAX_EVALUATED_SPARSITY};
pub use matrix::{Mask, MaskPattern, Matrix};
pub use mtx::{read_dense_text, read_matrix_file, read_matrix_market, write_dense_text, write_matrix_market};
pub use oracle::{oracle_sddmm, oracle_spmm, oracle_spmm_rowwise};
