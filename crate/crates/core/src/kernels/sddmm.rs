use super::plan::{plan_sddmm, MappingPlan};
use crate::error::{Error, Result};
use crate::fabric::{FabricConfig, FabricState, Launch, RowSource};
use crate::memsys::{offchip_traffic, plan_tiles};
use crate::metrics::Metrics;
use crate::microcode::builtin_program;
use crate::orchestrator::{AddrParams, StreamToken};
use crate::pe::VecWord;
use crate::workloads::{Mask, MaskPattern, Matrix};

use super::spmm::cycle_budget;

/// Concrete mask for a pattern. N:M masks keep the leading `n` positions
/// of every aligned block.
pub fn mask_for(pattern: &MaskPattern, rows: usize, cols: usize) -> Result<Mask> {
    let m = match pattern {
        MaskPattern::Unstructured(m) => m.clone(),
        MaskPattern::Window { width, seq_len } => Mask::window(*width, *seq_len)?,
        MaskPattern::Nm { n, m } => {
            if *n == 0 || n > m {
                return Err(Error::Config(format!("N:M pattern {n}:{m} needs 1 <= n <= m")));
            }
            let mut mask = Mask::new(rows, cols, false);
            for r in 0..rows {
                for c in 0..cols {
                    mask.bits[r * cols + c] = c % m < *n;
                }
            }
            mask
        }
    };
    if m.rows != rows || m.cols != cols {
        return Err(Error::ShapeMismatch(format!(
            "mask is {}x{}, output is {rows}x{cols}",
            m.rows, m.cols
        )));
    }
    Ok(m)
}

fn vec_at(mat: &Matrix, row: usize, k0: usize, by_col: bool) -> VecWord {
    let mut lanes = [0i32; 4];
    for (l, lane) in lanes.iter_mut().enumerate() {
        let k = k0 + l;
        *lane = match by_col {
            false if k < mat.cols => mat.get(row, k),
            true if k < mat.rows => mat.get(k, row),
            _ => 0,
        };
    }
    VecWord(lanes)
}

fn sddmm_streams(mask: &Mask, plan: &MappingPlan) -> Vec<Vec<StreamToken>> {
    (0..plan.y_dim)
        .map(|y| {
            let mut s = Vec::new();
            for m in 0..mask.rows {
                let before = s.len();
                for n in y * plan.h..((y + 1) * plan.h).min(mask.cols) {
                    if mask.get(m, n) {
                        s.push(StreamToken::nnz(m as u32, n as u32, 0));
                    }
                }
                if s.len() > before {
                    s.push(StreamToken::row_end(m as u32));
                }
            }
            s.push(StreamToken::end());
            s
        })
        .collect()
}

/// Output of an SDDMM run beyond C and the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SddmmStats {
    /// A rows moved into scratchpad rings, summed over PE rows.
    pub a_row_loads: u64,
    /// Distinct (PE row, A row) pairs that needed an operand row.
    pub a_rows_needed: u64,
    /// B data written to data memories after the initial preload.
    pub b_reloads: u64,
}

pub fn run_sddmm_detailed(
    a: &Matrix,
    b: &Matrix,
    mask: &Mask,
    config: &FabricConfig,
) -> Result<(Matrix, Metrics, SddmmStats, FabricState)> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch(format!("A is {}x{}, B is {}x{}", a.rows, a.cols, b.rows, b.cols)));
    }
    if mask.rows != a.rows || mask.cols != b.cols {
        return Err(Error::ShapeMismatch("mask does not match the output".into()));
    }
    a.check_int8("A")?;
    b.check_int8("B")?;
    let plan = plan_sddmm(a.rows, a.cols, b.cols, config)?;
    let (xd, w, h) = (plan.x_dim, plan.w, plan.h);

    let mut f = FabricState::new(config.clone())?;
    for t in &plan.placement {
        for j in 0..h {
            let n = t.n_lo + j;
            for s in 0..w {
                let v = if n < b.cols { vec_at(b, n, t.k_lo + s * 4, true) } else { VecWord::ZERO };
                f.pe_mut(t.x, t.y).write_dmem_vec(((j * w + s) * 4) as u16, v);
            }
        }
    }
    let rows = (0..a.rows)
        .map(|m| (0..xd * w).map(|i| vec_at(a, m, i * 4, false)).collect())
        .collect();
    let streams = sddmm_streams(mask, &plan);
    let needed: u64 = streams
        .iter()
        .map(|s| s.iter().filter(|t| t.tag == crate::orchestrator::TAG_ROWEND).count() as u64)
        .sum();
    let budget = cycle_budget(&streams, xd, plan.y_dim) * (w as u64 + 1);
    f.load(Launch {
        program: builtin_program("sddmm")?,
        params: AddrParams { dmem_base: 0, h: h as u32, w: w as u32 },
        streams,
        group: 0,
        ring_rows: config.spad_entries / w,
        row_source: Some(RowSource { rows }),
    })?;
    let cycles = f.run_to_completion(budget)?;

    let mut c = Matrix::zeros(a.rows, b.cols);
    let mut written = Mask::new(a.rows, b.cols, false);
    for r in &f.east_out {
        let (m, n) = (r.rid as usize, r.cid as usize);
        if written.get(m, n) {
            return Err(Error::EdgeProtocol { cycle: r.cycle, detail: format!("({m},{n}) produced twice") });
        }
        written.bits[m * b.cols + n] = true;
        c.set(m, n, r.value);
    }
    if written != *mask {
        return Err(Error::EdgeProtocol {
            cycle: f.cycle,
            detail: format!("{} outputs for {} mask positions", written.count(), mask.count()),
        });
    }
    let mut metrics = Metrics::from_fabric(&f, cycles);
    metrics.logical_lane_ops = (mask.count() * a.cols) as u64;
    let sram = (config.pes() * config.dmem_bytes) as u64;
    let sched = plan_tiles(a.rows as u64, a.cols as u64, b.cols as u64, (a.rows * a.cols) as u64, sram.max(b.cols as u64))?;
    metrics.offchip_bytes = offchip_traffic(&sched, 1).total;
    let stats = SddmmStats {
        a_row_loads: f.counters.mover_writes / (xd * w) as u64,
        a_rows_needed: needed,
        b_reloads: metrics.dmem_writes,
    };
    Ok((c, metrics, stats, f))
}

pub fn run_sddmm(a: &Matrix, b: &Matrix, mask: &MaskPattern, config: &FabricConfig) -> Result<(Matrix, Metrics)> {
    let mask = mask_for(mask, a.rows, b.cols)?;
    let (c, m, _, _) = run_sddmm_detailed(a, b, &mask, config)?;
    Ok((c, m))
}

/// Sliding-window SDDMM. Each operand row is loaded once and reused for its
/// whole band; B stays resident, so no operand is fetched twice.
pub fn run_window_sddmm(
    a: &Matrix,
    b: &Matrix,
    width: usize,
    seq_len: usize,
    config: &FabricConfig,
) -> Result<(Matrix, Metrics)> {
    if a.rows != seq_len || b.cols != seq_len {
        return Err(Error::ShapeMismatch(format!(
            "window over {seq_len} needs {seq_len} rows of A and columns of B"
        )));
    }
    let mask = Mask::window(width, seq_len)?;
    let (c, m, stats, _) = run_sddmm_detailed(a, b, &mask, config)?;
    if stats.b_reloads != 0 || stats.a_row_loads != stats.a_rows_needed {
        return Err(Error::InfeasibleMapping(format!(
            "operand reuse broken: {} B reloads, {} A row loads for {} rows",
            stats.b_reloads, stats.a_row_loads, stats.a_rows_needed
        )));
    }
    Ok((c, m))
}
