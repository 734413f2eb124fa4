//! Experiment runner.
//!
//! A TOML config names one kernel, a shape, and grids of sparsities,
//! scratchpad depths and seeds:
//!
//! ```toml
//! name = "spad_sweep"
//! kernel = "spmm"          # spmm | spmm_direct | gemm | spmm_nm | sddmm | window_sddmm
//! m = 512
//! k = 128
//! n = 32
//! sparsity = [0.6, 0.8, 0.95]
//! spad_depths = [1, 2, 4, 8, 16]
//! seeds = [0, 1, 2]
//! scale_m_by_density = false   # m becomes round(m / (1 - sparsity))
//! nm = { n = 2, m = 4 }        # spmm_nm only
//! window = 4                   # window_sddmm only; sequence length is m
//!
//! [fabric]                     # optional, any FabricConfig field
//! x_dim = 8
//! y_dim = 8
//! ```
//!
//! Every point of the grid becomes one report row. Rows run in parallel and
//! are reported in grid order (sparsity, then depth, then seed). A failing
//! run produces a row with `error` set; the remaining rows still run.
//!
//! CSV columns, in order: the fields of [`ReportRow`] as declared.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fabric::FabricConfig;
use crate::kernels::{run_gemm_detailed, run_sddmm_detailed, run_spmm_detailed, SpmmPattern, SpmmProgram};
use crate::memsys::{bandwidth_bound_runtime, Bound, TrafficReport};
use crate::metrics::Metrics;
use crate::workloads::{
    gen_dense, gen_mask, gen_matrix, oracle_sddmm, oracle_spmm, Mask, Matrix, SparsitySpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Spmm,
    SpmmDirect,
    Gemm,
    SpmmNm,
    Sddmm,
    WindowSddmm,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Spmm => "spmm",
            KernelKind::SpmmDirect => "spmm_direct",
            KernelKind::Gemm => "gemm",
            KernelKind::SpmmNm => "spmm_nm",
            KernelKind::Sddmm => "sddmm",
            KernelKind::WindowSddmm => "window_sddmm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NmSpec {
    pub n: usize,
    pub m: usize,
}

fn default_sparsity() -> Vec<f64> {
    vec![0.0]
}

fn default_depths() -> Vec<usize> {
    vec![crate::pe::SPAD_ENTRIES]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kernel: KernelKind,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    #[serde(default = "default_sparsity")]
    pub sparsity: Vec<f64>,
    #[serde(default = "default_depths")]
    pub spad_depths: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub scale_m_by_density: bool,
    #[serde(default)]
    pub nm: Option<NmSpec>,
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub fabric: FabricConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Replaces grid axes or the array shape with single values.
    pub fn apply_overrides(&mut self, seed: Option<u64>, spad: Option<usize>, array: Option<(usize, usize)>) {
        if let Some(s) = seed {
            self.seeds = vec![s];
        }
        if let Some(d) = spad {
            self.spad_depths = vec![d];
        }
        if let Some((x, y)) = array {
            self.fabric.x_dim = x;
            self.fabric.y_dim = y;
        }
    }

    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &sparsity in &self.sparsity {
            for &spad in &self.spad_depths {
                for &seed in &self.seeds {
                    let m = if self.scale_m_by_density {
                        (self.m as f64 / (1.0 - sparsity).max(1e-9)).round() as usize
                    } else {
                        self.m
                    };
                    jobs.push(Job {
                        index: jobs.len(),
                        name: self.name.clone(),
                        kernel: self.kernel,
                        m,
                        k: self.k,
                        n: self.n,
                        sparsity,
                        spad,
                        seed,
                        nm: self.nm,
                        window: self.window,
                        fabric: FabricConfig {
                            spad_entries: spad,
                            ..self.fabric.clone()
                        },
                    });
                }
            }
        }
        jobs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub index: usize,
    pub name: String,
    pub kernel: KernelKind,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub sparsity: f64,
    pub spad: usize,
    pub seed: u64,
    pub nm: Option<NmSpec>,
    pub window: Option<usize>,
    pub fabric: FabricConfig,
}

/// One report line. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub index: usize,
    pub name: String,
    pub kernel: String,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub sparsity: f64,
    pub spad_entries: usize,
    pub seed: u64,
    pub x_dim: usize,
    pub y_dim: usize,
    pub nnz: u64,
    pub cycles: u64,
    pub active_lane_cycles: u64,
    pub total_lane_cycles: u64,
    pub utilization: f64,
    pub logical_utilization: f64,
    pub spad_reads: u64,
    pub spad_writes: u64,
    pub dmem_reads: u64,
    pub dmem_writes: u64,
    pub noc_transfers: u64,
    pub fsm_transitions: u64,
    pub offchip_bytes: u64,
    pub bound_cycles: u64,
    pub bound: String,
    pub mac_ops: u64,
    pub vsum_ops: u64,
    pub psums_injected: u64,
    pub psums_merged: u64,
    pub psums_collected: u64,
    pub bypasses: u64,
    pub staggered_violations: u64,
    pub oracle_match: bool,
    pub warning: String,
    pub error: String,
}

impl ReportRow {
    fn new(job: &Job) -> Self {
        ReportRow {
            index: job.index,
            name: job.name.clone(),
            kernel: job.kernel.name().into(),
            m: job.m,
            k: job.k,
            n: job.n,
            sparsity: job.sparsity,
            spad_entries: job.spad,
            seed: job.seed,
            x_dim: job.fabric.x_dim,
            y_dim: job.fabric.y_dim,
            nnz: 0,
            cycles: 0,
            active_lane_cycles: 0,
            total_lane_cycles: 0,
            utilization: 0.0,
            logical_utilization: 0.0,
            spad_reads: 0,
            spad_writes: 0,
            dmem_reads: 0,
            dmem_writes: 0,
            noc_transfers: 0,
            fsm_transitions: 0,
            offchip_bytes: 0,
            bound_cycles: 0,
            bound: String::new(),
            mac_ops: 0,
            vsum_ops: 0,
            psums_injected: 0,
            psums_merged: 0,
            psums_collected: 0,
            bypasses: 0,
            staggered_violations: 0,
            oracle_match: false,
            warning: String::new(),
            error: String::new(),
        }
    }

    fn fill(&mut self, m: &Metrics, bw: u64) {
        self.cycles = m.cycles;
        self.active_lane_cycles = m.active_lane_cycles;
        self.total_lane_cycles = m.total_lane_cycles;
        self.utilization = m.utilization();
        self.logical_utilization = m.logical_utilization();
        self.spad_reads = m.spad_reads;
        self.spad_writes = m.spad_writes;
        self.dmem_reads = m.dmem_reads;
        self.dmem_writes = m.dmem_writes;
        self.noc_transfers = m.noc_transfers;
        self.fsm_transitions = m.fsm_transitions;
        self.offchip_bytes = m.offchip_bytes;
        let report = TrafficReport {
            phases: 1,
            bytes_in_a: 0,
            bytes_in_b: 0,
            bytes_out_c: 0,
            total: m.offchip_bytes,
        };
        let (cycles, bound) = bandwidth_bound_runtime(&report, m.cycles, bw);
        self.bound_cycles = cycles;
        self.bound = match bound {
            Bound::Compute => "compute",
            Bound::Bandwidth => "bandwidth",
        }
        .into();
        self.mac_ops = m.mac_ops;
        self.vsum_ops = m.vsum_ops;
        self.psums_injected = m.psums_injected;
        self.psums_merged = m.psums_merged;
        self.psums_collected = m.psums_collected;
        self.bypasses = m.bypasses;
        self.staggered_violations = m.staggered_violations;
    }
}

/// Result of one job, before formatting.
pub struct JobOutput {
    pub c: Matrix,
    pub expected: Matrix,
    pub metrics: Metrics,
    pub nnz: u64,
    pub trace_log: Option<String>,
}

fn seeds_for(seed: u64) -> (u64, u64, u64) {
    let s = seed.wrapping_mul(3);
    (s, s.wrapping_add(1), s.wrapping_add(2))
}

/// Generates the operands of a job, runs it and evaluates the oracle.
pub fn execute_job(job: &Job) -> Result<JobOutput> {
    let (sa, sb, sm) = seeds_for(job.seed);
    let f = &job.fabric;
    let sparse = || gen_matrix(job.m, job.k, &SparsitySpec::uniform(job.sparsity, sa));
    let (c, expected, metrics, nnz, fab) = match job.kernel {
        KernelKind::Spmm | KernelKind::SpmmDirect | KernelKind::SpmmNm => {
            let (a, pattern) = match (job.kernel, job.nm) {
                (KernelKind::SpmmNm, Some(nm)) => (
                    gen_matrix(job.m, job.k, &SparsitySpec::nm(nm.n, nm.m, sa))?,
                    SpmmPattern::Nm { n: nm.n, m: nm.m },
                ),
                (KernelKind::SpmmNm, None) => {
                    return Err(Error::Config("spmm_nm needs an nm = { n, m } entry".into()))
                }
                _ => (sparse()?, SpmmPattern::Unstructured),
            };
            let b = gen_dense(job.k, job.n, sb);
            let program = if job.kernel == KernelKind::SpmmDirect {
                SpmmProgram::Direct
            } else {
                SpmmProgram::Buffered
            };
            let (c, m, fab) = run_spmm_detailed(&a, &b, f, pattern, program)?;
            (c, oracle_spmm(&a, &b)?, m, a.nnz() as u64, fab)
        }
        KernelKind::Gemm => {
            let a = gen_dense(job.m, job.k, sa);
            let b = gen_dense(job.k, job.n, sb);
            let (c, m, fab) = run_gemm_detailed(&a, &b, f)?;
            (c, oracle_spmm(&a, &b)?, m, (job.m * job.k) as u64, fab)
        }
        KernelKind::Sddmm | KernelKind::WindowSddmm => {
            let a = gen_dense(job.m, job.k, sa);
            let (n, mask) = if job.kernel == KernelKind::WindowSddmm {
                let w = job
                    .window
                    .ok_or_else(|| Error::Config("window_sddmm needs a window width".into()))?;
                (job.m, Mask::window(w, job.m)?)
            } else {
                (job.n, gen_mask(job.m, job.n, job.sparsity, sm))
            };
            let b = gen_dense(job.k, n, sb);
            let (c, m, stats, fab) = run_sddmm_detailed(&a, &b, &mask, f)?;
            if job.kernel == KernelKind::WindowSddmm
                && (stats.b_reloads != 0 || stats.a_row_loads != stats.a_rows_needed)
            {
                return Err(Error::InfeasibleMapping("window operand reuse broken".into()));
            }
            (c, oracle_sddmm(&a, &b, &mask)?, m, mask.count() as u64, fab)
        }
    };
    Ok(JobOutput {
        c,
        expected,
        metrics,
        nnz,
        trace_log: fab.trace_log,
    })
}

pub fn run_job(job: &Job) -> ReportRow {
    let mut row = ReportRow::new(job);
    if let Some(w) = SparsitySpec::uniform(job.sparsity, 0).range_warning() {
        row.warning = w;
    }
    match execute_job(job) {
        Ok(out) => {
            row.nnz = out.nnz;
            row.fill(&out.metrics, job.fabric.offchip_bw_bytes_per_cycle);
            row.oracle_match = out.c == out.expected;
        }
        Err(e) => row.error = e.to_string(),
    }
    row
}

pub fn run_experiment(config: &ExperimentConfig) -> Vec<ReportRow> {
    config.jobs().par_iter().map(run_job).collect()
}

/// Event log of one job, with the fabric trace enabled.
pub fn trace_job(job: &Job) -> Result<String> {
    let mut job = job.clone();
    job.fabric.trace_log = true;
    let out = execute_job(&job)?;
    Ok(out.trace_log.unwrap_or_default())
}

pub fn write_csv<W: Write>(rows: &[ReportRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(rows: &[ReportRow], mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, rows).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = r#"
        name = "t"
        kernel = "spmm"
        m = 16
        k = 16
        n = 32
        sparsity = [0.5, 0.9]
        spad_depths = [1, 16]
        seeds = [1, 2]
        [fabric]
        x_dim = 4
        y_dim = 4
    "#;

    #[test]
    fn grid_expansion_order() {
        let c = ExperimentConfig::from_toml(CFG).unwrap();
        let jobs = c.jobs();
        assert_eq!(jobs.len(), 8);
        assert_eq!((jobs[0].sparsity, jobs[0].spad, jobs[0].seed), (0.5, 1, 1));
        assert_eq!((jobs[1].sparsity, jobs[1].spad, jobs[1].seed), (0.5, 1, 2));
        assert_eq!((jobs[7].sparsity, jobs[7].spad, jobs[7].seed), (0.9, 16, 2));
        assert_eq!(jobs[3].fabric.spad_entries, 16);
        assert_eq!(jobs[3].fabric.x_dim, 4);
    }

    #[test]
    fn rows_in_index_order_and_match() {
        let c = ExperimentConfig::from_toml(CFG).unwrap();
        let rows = run_experiment(&c);
        assert!(rows.iter().enumerate().all(|(i, r)| r.index == i));
        assert!(rows.iter().all(|r| r.oracle_match && r.error.is_empty()), "{rows:?}");
    }

    #[test]
    fn error_row_does_not_abort() {
        let mut c = ExperimentConfig::from_toml(CFG).unwrap();
        c.kernel = KernelKind::SpmmNm;
        let rows = run_experiment(&c);
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| !r.error.is_empty() && !r.oracle_match));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("name='x'\nkernel='spmm'\nm=1\nk=1\nn=1\nbogus=3\n").is_err());
    }

    #[test]
    fn csv_header_order() {
        let c = ExperimentConfig::from_toml(CFG).unwrap();
        let rows = run_experiment(&c);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("index,name,kernel,m,k,n,sparsity,spad_entries,seed"));
        assert!(header.ends_with("oracle_match,warning,error"));
        assert_eq!(text.lines().count(), 9);
    }
}
