//! Orchestrator microcode: the FSM program text format, its compilation to
//! a 1024-entry lookup table, and a rule interpreter used as an independent
//! reference for the compiled table.

mod lut;
mod program;

pub use lut::{
    assemble, interpret_step, lut_index, read_bitstream, verify_equivalence, write_bitstream,
    AddrGen, LutEntry, Lut, MetaAction, OperandSel, PayloadSel, LUT_ENTRIES,
};
pub use program::{parse_program, CondPattern, Program, Rule};

/// Shipped programs, keyed by name.
pub const BUILTIN_PROGRAMS: [(&str, &str); 4] = [
    ("spmm_buffered", include_str!("../../programs/spmm_buffered.fsm")),
    ("spmm_direct", include_str!("../../programs/spmm_direct.fsm")),
    ("spmm_nm", include_str!("../../programs/spmm_nm.fsm")),
    ("sddmm", include_str!("../../programs/sddmm.fsm")),
];

pub fn builtin_program(name: &str) -> crate::Result<Program> {
    let (_, text) = BUILTIN_PROGRAMS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| crate::Error::Config(format!("unknown program {name}")))?;
    parse_program(text)
}
