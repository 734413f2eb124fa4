use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::fabric::FabricState;

/// Counters of one kernel run. Lane counts are in lane-cycles: a MAC
/// instruction occupies all V lanes of one PE for one cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub cycles: u64,
    pub active_lane_cycles: u64,
    pub total_lane_cycles: u64,
    /// Lane multiplies that touch unpadded operand elements.
    pub logical_lane_ops: u64,
    pub spad_reads: u64,
    pub spad_writes: u64,
    pub dmem_reads: u64,
    pub dmem_writes: u64,
    pub noc_transfers: u64,
    pub fsm_transitions: u64,
    pub offchip_bytes: u64,
    pub instructions: u64,
    pub mac_ops: u64,
    pub vsum_ops: u64,
    pub psums_injected: u64,
    pub psums_merged: u64,
    pub psums_collected: u64,
    pub bypasses: u64,
    pub staggered_violations: u64,
}

impl Metrics {
    /// Counters accumulated by a fabric over `cycles` cycles.
    pub fn from_fabric(f: &FabricState, cycles: u64) -> Metrics {
        let pe = f.pe_counters();
        let fc = f.counters;
        Metrics {
            cycles,
            active_lane_cycles: pe.active_lanes,
            total_lane_cycles: cycles * f.config.pes() as u64 * f.config.simd_width as u64,
            logical_lane_ops: 0,
            spad_reads: pe.spad_reads,
            spad_writes: pe.spad_writes,
            dmem_reads: pe.dmem_reads,
            dmem_writes: pe.dmem_writes,
            noc_transfers: pe.noc_transfers,
            fsm_transitions: fc.fsm_transitions,
            offchip_bytes: 0,
            instructions: pe.instructions,
            mac_ops: pe.mac_ops,
            vsum_ops: pe.vsum_ops,
            psums_injected: fc.psums_injected,
            psums_merged: fc.psums_merged,
            psums_collected: fc.psums_collected,
            bypasses: fc.bypasses,
            staggered_violations: fc.staggered_violations,
        }
    }

    pub fn utilization(&self) -> f64 {
        if self.total_lane_cycles == 0 {
            return 0.0;
        }
        self.active_lane_cycles as f64 / self.total_lane_cycles as f64
    }

    pub fn logical_utilization(&self) -> f64 {
        if self.total_lane_cycles == 0 {
            return 0.0;
        }
        self.logical_lane_ops as f64 / self.total_lane_cycles as f64
    }
}

impl AddAssign for Metrics {
    fn add_assign(&mut self, o: Metrics) {
        self.cycles += o.cycles;
        self.active_lane_cycles += o.active_lane_cycles;
        self.total_lane_cycles += o.total_lane_cycles;
        self.logical_lane_ops += o.logical_lane_ops;
        self.spad_reads += o.spad_reads;
        self.spad_writes += o.spad_writes;
        self.dmem_reads += o.dmem_reads;
        self.dmem_writes += o.dmem_writes;
        self.noc_transfers += o.noc_transfers;
        self.fsm_transitions += o.fsm_transitions;
        self.offchip_bytes += o.offchip_bytes;
        self.instructions += o.instructions;
        self.mac_ops += o.mac_ops;
        self.vsum_ops += o.vsum_ops;
        self.psums_injected += o.psums_injected;
        self.psums_merged += o.psums_merged;
        self.psums_collected += o.psums_collected;
        self.bypasses += o.bypasses;
        self.staggered_violations += o.staggered_violations;
    }
}
