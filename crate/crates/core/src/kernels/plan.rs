//! Mapping plans: data provision (streams), placement (which B tile sits in
//! which PE's data memory) and control (program, drain policy).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fabric::FabricConfig;
use crate::isa::DMEM_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BPlacement {
    pub pass: usize,
    pub x: usize,
    pub y: usize,
    pub dmem_base: u16,
    /// Half-open ranges of B rows and columns held by the PE.
    pub k_lo: usize,
    pub k_hi: usize,
    pub n_lo: usize,
    pub n_hi: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlPlan {
    pub program: String,
    pub spad_entries: usize,
    pub drain: String,
    /// Entries per output row per PE row, for counter-driven flushing.
    pub group: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub kernel: String,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub k_pad: usize,
    pub n_pad: usize,
    pub x_dim: usize,
    pub y_dim: usize,
    pub v: usize,
    /// Rows of B (SpMM) or output columns (SDDMM) per PE row.
    pub h: usize,
    /// Vectors per PE per row of work.
    pub w: usize,
    pub passes: usize,
    pub control: ControlPlan,
    pub placement: Vec<BPlacement>,
    /// Tokens per orchestrator row, filled once the sparse operand is known.
    pub stream_tokens: Vec<usize>,
}

impl MappingPlan {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_toml(s: &str) -> Result<MappingPlan> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn round_up(v: usize, to: usize) -> usize {
    v.div_ceil(to) * to
}

fn check_dims(m: usize, k: usize, n: usize) -> Result<()> {
    if m == 0 || k == 0 || n == 0 {
        return Err(Error::DegenerateShape(format!("{m}x{k}x{n}")));
    }
    Ok(())
}

/// Row-wise SpMM tiling: PE row y holds B rows `[y·H, (y+1)·H)`, PE column x
/// holds V output columns of every column pass. K is padded to a multiple
/// of `Y·k_align`, N to a multiple of `X·V`.
pub fn plan_spmm_aligned(m: usize, k: usize, n: usize, config: &FabricConfig, k_align: usize) -> Result<MappingPlan> {
    check_dims(m, k, n)?;
    config.validate()?;
    let (xd, yd, v) = (config.x_dim, config.y_dim, config.simd_width);
    let k_pad = round_up(k, yd * k_align);
    let n_pad = round_up(n, xd * v);
    let h = k_pad / yd;
    let passes = n_pad / (xd * v);
    let bytes = passes * h * v;
    if bytes > DMEM_BYTES as usize {
        return Err(Error::InfeasibleMapping(format!(
            "B tile of {bytes} B per PE exceeds data memory"
        )));
    }
    let mut placement = Vec::with_capacity(passes * xd * yd);
    for pass in 0..passes {
        for y in 0..yd {
            for x in 0..xd {
                let n_lo = pass * xd * v + x * v;
                placement.push(BPlacement {
                    pass,
                    x,
                    y,
                    dmem_base: (pass * h * v) as u16,
                    k_lo: y * h,
                    k_hi: (y + 1) * h,
                    n_lo,
                    n_hi: n_lo + v,
                });
            }
        }
    }
    Ok(MappingPlan {
        kernel: "spmm".into(),
        m,
        k,
        n,
        k_pad,
        n_pad,
        x_dim: xd,
        y_dim: yd,
        v,
        h,
        w: n_pad / passes / xd,
        passes,
        control: ControlPlan {
            program: "spmm_buffered".into(),
            spad_entries: config.spad_entries,
            drain: "flush window oldest-first at end of stream".into(),
            group: 0,
        },
        placement,
        stream_tokens: Vec::new(),
    })
}

pub fn plan_spmm(m: usize, k: usize, n: usize, config: &FabricConfig) -> Result<MappingPlan> {
    plan_spmm_aligned(m, k, n, config, 1)
}

/// Inner-product SDDMM tiling: PE column x holds K slice
/// `[x·W·V, (x+1)·W·V)`, PE row y holds output columns `[y·H, (y+1)·H)`.
pub fn plan_sddmm(m: usize, k: usize, n: usize, config: &FabricConfig) -> Result<MappingPlan> {
    check_dims(m, k, n)?;
    config.validate()?;
    let (xd, yd, v) = (config.x_dim, config.y_dim, config.simd_width);
    let k_pad = round_up(k, xd * v);
    let n_pad = round_up(n, yd);
    let w = k_pad / (xd * v);
    let h = n_pad / yd;
    if w > config.spad_entries {
        return Err(Error::InfeasibleMapping(format!(
            "an A row needs {w} scratchpad entries, only {} available",
            config.spad_entries
        )));
    }
    let bytes = h * w * v;
    if bytes > DMEM_BYTES as usize {
        return Err(Error::InfeasibleMapping(format!(
            "B tile of {bytes} B per PE exceeds data memory"
        )));
    }
    let mut placement = Vec::with_capacity(xd * yd);
    for y in 0..yd {
        for x in 0..xd {
            placement.push(BPlacement {
                pass: 0,
                x,
                y,
                dmem_base: 0,
                k_lo: x * w * v,
                k_hi: (x + 1) * w * v,
                n_lo: y * h,
                n_hi: (y + 1) * h,
            });
        }
    }
    Ok(MappingPlan {
        kernel: "sddmm".into(),
        m,
        k,
        n,
        k_pad,
        n_pad,
        x_dim: xd,
        y_dim: yd,
        v,
        h,
        w,
        passes: 1,
        control: ControlPlan {
            program: "sddmm".into(),
            spad_entries: config.spad_entries,
            drain: "release operand row after the last PE has read it".into(),
            group: 0,
        },
        placement,
        stream_tokens: Vec::new(),
    })
}
