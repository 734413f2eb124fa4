use serde::{Deserialize, Serialize};

use super::plan::{plan_spmm_aligned, MappingPlan};
use crate::error::{Error, Result};
use crate::fabric::{FabricConfig, FabricState, Launch};
use crate::memsys::{offchip_traffic, plan_tiles};
use crate::metrics::Metrics;
use crate::microcode::builtin_program;
use crate::orchestrator::{AddrParams, StreamToken, TAG_END, TAG_NNZ, TAG_ROWEND};
use crate::pe::VecWord;
use crate::workloads::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpmmPattern {
    Unstructured,
    Nm { n: usize, m: usize },
}

/// Which row program drives an unstructured run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpmmProgram {
    /// Scratchpad context window with asynchronous psum merging.
    #[default]
    Buffered,
    /// Every psum goes south as soon as its row ends.
    Direct,
}

/// Cycle budget for one launch before it is declared hung.
pub fn cycle_budget(streams: &[Vec<StreamToken>], x_dim: usize, y_dim: usize) -> u64 {
    let tokens: usize = streams.iter().map(Vec::len).sum();
    10_000 + 8 * (tokens as u64 + 16) * (x_dim + y_dim) as u64
}

/// Row-major, CID-ascending token stream for every PE row, one ROWEND per
/// output row per row block.
pub fn spmm_streams(a: &Matrix, plan: &MappingPlan) -> Vec<Vec<StreamToken>> {
    (0..plan.y_dim)
        .map(|y| {
            let mut s = Vec::new();
            for m in 0..a.rows {
                for k in y * plan.h..((y + 1) * plan.h).min(a.cols) {
                    let v = a.get(m, k);
                    if v != 0 {
                        s.push(StreamToken::nnz(m as u32, k as u32, v));
                    }
                }
                s.push(StreamToken::row_end(m as u32));
            }
            s.push(StreamToken::end());
            s
        })
        .collect()
}

/// N:M streams: every aligned block contributes exactly `n` entries, zero
/// filled where the block holds fewer nonzeros.
pub fn nm_streams(a: &Matrix, plan: &MappingPlan, n: usize, blk: usize) -> Result<Vec<Vec<StreamToken>>> {
    let mut out = Vec::with_capacity(plan.y_dim);
    for y in 0..plan.y_dim {
        let mut s = Vec::new();
        for m in 0..a.rows {
            for b in (y * plan.h..(y + 1) * plan.h).step_by(blk) {
                let nz: Vec<usize> = (b..b + blk)
                    .filter(|&k| k < a.cols && a.get(m, k) != 0)
                    .collect();
                if nz.len() > n {
                    return Err(Error::MalformedStream(format!(
                        "row {m} block at {b} has {} nonzeros, pattern allows {n}",
                        nz.len()
                    )));
                }
                let mut picks = nz.clone();
                picks.extend((b..b + blk).filter(|k| !nz.contains(k)).take(n - nz.len()));
                picks.sort_unstable();
                for k in picks {
                    let v = if k < a.cols { a.get(m, k) } else { 0 };
                    s.push(StreamToken::nnz(m as u32, k as u32, v));
                }
            }
        }
        s.push(StreamToken::end());
        out.push(s);
    }
    Ok(out)
}

/// Checks the ordering rules of an unstructured row stream.
pub fn validate_stream(tokens: &[StreamToken]) -> Result<()> {
    let mut row: Option<u32> = None;
    let mut last_cid: Option<u32> = None;
    let mut ended = false;
    for (i, t) in tokens.iter().enumerate() {
        let bad = |msg: String| Err(Error::MalformedStream(format!("token {i}: {msg}")));
        if ended {
            return bad("token after END".into());
        }
        let next = row.map_or(0, |r| r + 1);
        match t.tag {
            TAG_NNZ => {
                if t.rid != next {
                    return bad(format!("nonzero of row {} while row {next} is open", t.rid));
                }
                if last_cid.is_some_and(|c| t.cid <= c) {
                    return bad(format!("column {} not ascending", t.cid));
                }
                last_cid = Some(t.cid);
            }
            TAG_ROWEND => {
                if t.rid != next {
                    return bad(format!("row end {} out of order, expected {next}", t.rid));
                }
                row = Some(t.rid);
                last_cid = None;
            }
            TAG_END => ended = true,
            _ => return bad(format!("unknown tag {}", t.tag)),
        }
    }
    if !ended {
        return Err(Error::MalformedStream("missing END".into()));
    }
    Ok(())
}

fn preload_b(f: &mut FabricState, b: &Matrix, plan: &MappingPlan) {
    for t in &plan.placement {
        for (j, k) in (t.k_lo..t.k_hi).enumerate() {
            let mut lanes = [0i32; 4];
            for (l, n) in (t.n_lo..t.n_hi).enumerate() {
                if k < b.rows && n < b.cols {
                    lanes[l] = b.get(k, n);
                }
            }
            f.pe_mut(t.x, t.y)
                .write_dmem_vec(t.dmem_base + (j * 4) as u16, VecWord(lanes));
        }
    }
}

/// Runs prepared streams through every column pass and gathers C.
pub fn run_spmm_streams(
    streams: Vec<Vec<StreamToken>>,
    b: &Matrix,
    m_rows: usize,
    plan: &MappingPlan,
    config: &FabricConfig,
    program: &str,
) -> Result<(Matrix, Metrics, FabricState)> {
    b.check_int8("B")?;
    let prog = builtin_program(program)?;
    let mut f = FabricState::new(config.clone())?;
    preload_b(&mut f, b, plan);
    let budget = cycle_budget(&streams, plan.x_dim, plan.y_dim);
    let mut c = Matrix::zeros(m_rows, plan.n_pad);
    let mut cycles = 0;
    for pass in 0..plan.passes {
        let first = f.south_out.len();
        f.load(Launch {
            program: prog.clone(),
            params: AddrParams {
                dmem_base: (pass * plan.h * plan.v) as u16,
                h: plan.h as u32,
                w: 1,
            },
            streams: streams.clone(),
            group: plan.control.group,
            ring_rows: 0,
            row_source: None,
        })?;
        cycles += f.run_to_completion(budget)?;
        for r in &f.south_out[first..] {
            let base = pass * plan.x_dim * plan.v + r.col * plan.v;
            for (l, v) in r.value.0.iter().enumerate() {
                c.add_at(r.rid as usize, base + l, *v);
            }
        }
    }
    let fc = f.counters;
    if fc.psums_injected != fc.psums_merged + fc.psums_collected {
        return Err(Error::EdgeProtocol {
            cycle: f.cycle,
            detail: format!(
                "psum conservation: {} injected, {} merged, {} collected",
                fc.psums_injected, fc.psums_merged, fc.psums_collected
            ),
        });
    }
    let metrics = Metrics::from_fabric(&f, cycles);
    Ok((c.cropped(m_rows, b.cols), metrics, f))
}

fn finish(mut metrics: Metrics, a: &Matrix, b: &Matrix, config: &FabricConfig) -> Result<Metrics> {
    let nnz = a.nnz() as u64;
    metrics.logical_lane_ops = nnz * b.cols as u64;
    let sram = (config.pes() * config.dmem_bytes) as u64;
    let sched = plan_tiles(a.rows as u64, a.cols as u64, b.cols as u64, nnz, sram.max(b.cols as u64))?;
    metrics.offchip_bytes = offchip_traffic(&sched, 1).total;
    Ok(metrics)
}

pub fn run_spmm_with(
    a: &Matrix,
    b: &Matrix,
    config: &FabricConfig,
    pattern: SpmmPattern,
    program: SpmmProgram,
) -> Result<(Matrix, Metrics)> {
    let (c, m, _) = run_spmm_detailed(a, b, config, pattern, program)?;
    Ok((c, m))
}

/// As [`run_spmm_with`], also returning the final array state.
pub fn run_spmm_detailed(
    a: &Matrix,
    b: &Matrix,
    config: &FabricConfig,
    pattern: SpmmPattern,
    program: SpmmProgram,
) -> Result<(Matrix, Metrics, FabricState)> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch(format!("A is {}x{}, B is {}x{}", a.rows, a.cols, b.rows, b.cols)));
    }
    a.check_int8("A")?;
    let (plan, streams, prog) = match pattern {
        SpmmPattern::Unstructured => {
            let plan = plan_spmm_aligned(a.rows, a.cols, b.cols, config, 1)?;
            let streams = spmm_streams(a, &plan);
            let prog = match program {
                SpmmProgram::Buffered => "spmm_buffered",
                SpmmProgram::Direct => "spmm_direct",
            };
            (plan, streams, prog)
        }
        SpmmPattern::Nm { n, m } => {
            if n == 0 || n > m {
                return Err(Error::Config(format!("N:M pattern {n}:{m} needs 1 <= n <= m")));
            }
            let mut plan = plan_spmm_aligned(a.rows, a.cols, b.cols, config, m)?;
            plan.control.group = (plan.h / m * n) as u32;
            plan.control.program = "spmm_nm".into();
            plan.control.drain = "flush after every group of entries".into();
            (plan.clone(), nm_streams(a, &plan, n, m)?, "spmm_nm")
        }
    };
    let (c, metrics, f) = run_spmm_streams(streams, b, a.rows, &plan, config, prog)?;
    Ok((c, finish(metrics, a, b, config)?, f))
}

pub fn run_spmm(a: &Matrix, b: &Matrix, config: &FabricConfig, pattern: SpmmPattern) -> Result<(Matrix, Metrics)> {
    run_spmm_with(a, b, config, pattern, SpmmProgram::Buffered)
}

/// Dense GEMM on the SpMM path: a fully dense stream and no psum buffering.
pub fn run_gemm(a: &Matrix, b: &Matrix, config: &FabricConfig) -> Result<(Matrix, Metrics)> {
    let (c, m, _) = run_gemm_detailed(a, b, config)?;
    Ok((c, m))
}

pub fn run_gemm_detailed(a: &Matrix, b: &Matrix, config: &FabricConfig) -> Result<(Matrix, Metrics, FabricState)> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch(format!("A is {}x{}, B is {}x{}", a.rows, a.cols, b.rows, b.cols)));
    }
    a.check_int8("A")?;
    let plan = plan_spmm_aligned(a.rows, a.cols, b.cols, config, 1)?;
    let streams: Vec<Vec<StreamToken>> = (0..plan.y_dim)
        .map(|y| {
            let mut s = Vec::new();
            for m in 0..a.rows {
                for k in y * plan.h..(y + 1) * plan.h {
                    let v = if k < a.cols { a.get(m, k) } else { 0 };
                    s.push(StreamToken::nnz(m as u32, k as u32, v));
                }
                s.push(StreamToken::row_end(m as u32));
            }
            s.push(StreamToken::end());
            s
        })
        .collect();
    let (c, mut metrics, f) = run_spmm_streams(streams, b, a.rows, &plan, config, "spmm_direct")?;
    metrics = finish(metrics, a, b, config)?;
    metrics.logical_lane_ops = (a.rows * a.cols * b.cols) as u64;
    Ok((c, metrics, f))
}
