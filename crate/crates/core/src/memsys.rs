//! Dense-stationary tiling and the off-chip traffic / roofline model.
//!
//! B is kept on-chip and split into contiguous row-major chunks that fit the
//! SRAM; the sparse A stream is replayed once per chunk. A streamed nonzero
//! costs one value plus two coordinate bytes, and every row end two bytes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workloads::Matrix;

pub const COORD_BYTES: u64 = 2;
pub const ROWEND_BYTES: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePhase {
    /// Resident B elements, as a half-open range of row-major indices.
    pub b_lo: u64,
    pub b_hi: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSchedule {
    pub m: u64,
    pub k: u64,
    pub n: u64,
    pub nnz_a: u64,
    pub sram_bytes: u64,
    pub phases: Vec<TilePhase>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    Compute,
    Bandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub phases: u64,
    pub bytes_in_a: u64,
    pub bytes_in_b: u64,
    pub bytes_out_c: u64,
    pub total: u64,
}

/// Splits B (INT8, one byte per element) into SRAM-sized resident phases.
pub fn plan_tiles(m: u64, k: u64, n: u64, nnz_a: u64, sram_bytes: u64) -> Result<TileSchedule> {
    if m == 0 || k == 0 || n == 0 {
        return Err(Error::DegenerateShape(format!("{m}x{k}x{n}")));
    }
    if sram_bytes < n {
        return Err(Error::InfeasibleTiling(format!(
            "{sram_bytes} B of SRAM cannot hold one {n}-element row of B"
        )));
    }
    let total = k * n;
    let phases = (0..total.div_ceil(sram_bytes))
        .map(|p| TilePhase {
            b_lo: p * sram_bytes,
            b_hi: ((p + 1) * sram_bytes).min(total),
        })
        .collect();
    Ok(TileSchedule {
        m,
        k,
        n,
        nnz_a,
        sram_bytes,
        phases,
    })
}

pub fn offchip_traffic(s: &TileSchedule, element_bytes: u64) -> TrafficReport {
    let phases = s.phases.len() as u64;
    let stream = s.nnz_a * (element_bytes + COORD_BYTES) + ROWEND_BYTES * s.m;
    let bytes_in_a = phases * stream;
    let bytes_in_b = s.k * s.n * element_bytes;
    let bytes_out_c = s.m * s.n * element_bytes;
    TrafficReport {
        phases,
        bytes_in_a,
        bytes_in_b,
        bytes_out_c,
        total: bytes_in_a + bytes_in_b + bytes_out_c,
    }
}

/// `max(compute, ceil(total / bw))`, labelled with the term that wins.
pub fn bandwidth_bound_runtime(r: &TrafficReport, compute_cycles: u64, bw_bytes_per_cycle: u64) -> (u64, Bound) {
    assert!(bw_bytes_per_cycle > 0, "bandwidth must be positive");
    let bw_cycles = r.total.div_ceil(bw_bytes_per_cycle);
    if bw_cycles > compute_cycles {
        (bw_cycles, Bound::Bandwidth)
    } else {
        (compute_cycles, Bound::Compute)
    }
}

/// Executes the product phase by phase, each phase seeing only its resident
/// slice of B.
pub fn replay_schedule(a: &Matrix, b: &Matrix, s: &TileSchedule) -> Result<Matrix> {
    if a.cols != b.rows || a.rows as u64 != s.m || b.rows as u64 != s.k || b.cols as u64 != s.n {
        return Err(Error::ShapeMismatch("schedule does not match operands".into()));
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    for p in &s.phases {
        for idx in p.b_lo..p.b_hi {
            let (k, n) = ((idx / s.n) as usize, (idx % s.n) as usize);
            let bv = b.get(k, n);
            for m in 0..a.rows {
                let av = a.get(m, k);
                if av != 0 {
                    c.add_at(m, n, av.wrapping_mul(bv));
                }
            }
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::{gen_dense, gen_matrix, oracle_spmm, SparsitySpec};

    #[test]
    fn fits_on_chip() {
        let s = plan_tiles(64, 64, 64, 4096, 4096).unwrap();
        assert_eq!(s.phases.len(), 1);
        let r = offchip_traffic(&s, 1);
        assert_eq!(r.bytes_in_b, 4096);
        assert_eq!(r.bytes_out_c, 4096);
        assert_eq!(r.bytes_in_a, 4096 * 3 + 2 * 64);
    }

    #[test]
    fn two_phases_replay_a_twice() {
        let s = plan_tiles(64, 64, 64, 100, 2048).unwrap();
        assert_eq!(s.phases.len(), 2);
        let one = offchip_traffic(&plan_tiles(64, 64, 64, 100, 4096).unwrap(), 1);
        assert_eq!(offchip_traffic(&s, 1).bytes_in_a, 2 * one.bytes_in_a);
    }

    #[test]
    fn zero_nnz_costs_row_ends_only() {
        let r = offchip_traffic(&plan_tiles(10, 8, 8, 0, 64).unwrap(), 1);
        assert_eq!(r.bytes_in_a, 20);
    }

    #[test]
    fn infeasible_when_row_does_not_fit() {
        assert!(matches!(plan_tiles(4, 4, 64, 1, 63), Err(Error::InfeasibleTiling(_))));
    }

    #[test]
    fn roofline_examples() {
        let r = TrafficReport {
            phases: 1,
            bytes_in_a: 1700,
            bytes_in_b: 0,
            bytes_out_c: 0,
            total: 1700,
        };
        assert_eq!(bandwidth_bound_runtime(&r, 50, 17), (100, Bound::Bandwidth));
        assert_eq!(bandwidth_bound_runtime(&r, 1_000_000, 17), (1_000_000, Bound::Compute));
        assert_eq!(bandwidth_bound_runtime(&r, 100, 17), (100, Bound::Compute));
    }

    #[test]
    fn traffic_non_increasing_in_sram() {
        let mut last = u64::MAX;
        for sram in (64..=8192).step_by(64) {
            let t = offchip_traffic(&plan_tiles(128, 64, 64, 800, sram).unwrap(), 1).total;
            assert!(t <= last);
            if sram >= 4096 {
                assert_eq!(t, offchip_traffic(&plan_tiles(128, 64, 64, 800, 4096).unwrap(), 1).total);
            }
            last = t;
        }
    }

    #[test]
    fn replay_matches_untiled() {
        let a = gen_matrix(12, 20, &SparsitySpec::uniform(0.6, 4)).unwrap();
        let b = gen_dense(20, 7, 5);
        let s = plan_tiles(12, 20, 7, a.nnz() as u64, 9).unwrap();
        assert!(s.phases.len() > 10);
        assert_eq!(replay_schedule(&a, &b, &s).unwrap(), oracle_spmm(&a, &b).unwrap());
    }
}
