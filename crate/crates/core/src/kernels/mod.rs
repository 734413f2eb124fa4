//! Kernel mappings onto the array and the affine mappability check.

mod affine;
mod plan;
mod sddmm;
mod spmm;

pub use affine::{check_affine_mappability, AccessFunction, AffineWitness, DimAccess};
pub use plan::{plan_sddmm, plan_spmm, plan_spmm_aligned, round_up, BPlacement, ControlPlan, MappingPlan};
pub use sddmm::{mask_for, run_sddmm, run_sddmm_detailed, run_window_sddmm, SddmmStats};
pub use spmm::{
    cycle_budget, nm_streams, run_gemm, run_gemm_detailed, run_spmm, run_spmm_detailed, run_spmm_streams, run_spmm_with, spmm_streams,
    validate_stream, SpmmPattern, SpmmProgram,
};
