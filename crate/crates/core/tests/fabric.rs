use canon_core::fabric::{FabricConfig, FabricState};
use canon_core::isa::{Address, Instruction, Opcode};
use canon_core::kernels::*;
use canon_core::pe::PIPELINE_DEPTH;
use canon_core::workloads::*;

fn traced(x: usize, y: usize) -> FabricConfig {
    FabricConfig {
        record_traces: true,
        ..FabricConfig::with_array(x, y)
    }
}

#[test]
fn empty_fabric_is_idle() {
    let mut f = FabricState::new(FabricConfig::with_array(4, 4)).unwrap();
    for _ in 0..20 {
        f.tick().unwrap();
    }
    let c = f.pe_counters();
    assert_eq!(c.instructions, 0);
    assert_eq!(c.noc_transfers, 0);
    assert_eq!(f.counters.fsm_transitions, 0);
    assert!(f.quiescent().unwrap());
}

#[test]
fn neighbour_loads_three_cycles_later() {
    let a = Matrix::from_rows(&[vec![1, 0, 2, 0]]).unwrap();
    let b = gen_dense(4, 8, 3);
    let (c, m, f) =
        run_spmm_detailed(&a, &b, &traced(2, 1), SpmmPattern::Unstructured, SpmmProgram::Buffered).unwrap();
    assert_eq!(c, oracle_spmm(&a, &b).unwrap());
    assert_eq!(m.staggered_violations, 0);
    let t0 = f.staggered_trace(0, 0);
    let t1 = f.staggered_trace(0, 1);
    assert!(!t0.is_empty());
    assert_eq!(t0.len(), t1.len());
    for (p, q) in t0.iter().zip(t1) {
        assert_eq!(q.0, p.0 + PIPELINE_DEPTH);
        assert_eq!(q.1, p.1);
    }
}

#[test]
fn staggered_law_holds_on_every_row() {
    let a = gen_matrix(32, 32, &SparsitySpec::uniform(0.7, 5)).unwrap();
    let b = gen_dense(32, 32, 6);
    let (_, m, f) =
        run_spmm_detailed(&a, &b, &traced(4, 4), SpmmPattern::Unstructured, SpmmProgram::Buffered).unwrap();
    assert_eq!(m.staggered_violations, 0);
    for y in 0..4 {
        let t0 = f.staggered_trace(y, 0);
        for x in 1..4 {
            let shifted: Vec<_> = t0.iter().map(|(c, i)| (c + PIPELINE_DEPTH * x as u64, *i)).collect();
            assert_eq!(f.staggered_trace(y, x), &shifted[..]);
        }
    }
}

#[test]
fn gemm_shares_one_opcode_stream() {
    let a = gen_dense(16, 16, 1);
    let b = gen_dense(16, 16, 2);
    let (_, _, f) = run_gemm_detailed(&a, &b, &traced(4, 4)).unwrap();
    let ops = |y, x| {
        let mut v: Vec<Opcode> = f.staggered_trace(y, x).iter().map(|(_, i)| i.op).collect();
        v.sort();
        v
    };
    let reference = ops(0, 0);
    for y in 0..4 {
        for x in 0..4 {
            assert_eq!(ops(y, x), reference, "PE ({x}, {y})");
        }
    }
}

fn mov_imm(v: u32) -> Instruction {
    Instruction::new(Opcode::Mov, Address::IMM, Address::NULL, Address::vreg(0)).with_imm(v)
}

#[test]
fn spatial_configuration_takes_three_cycles_per_column() {
    for (x, want) in [(1, 3), (4, 12), (8, 24)] {
        let mut f = FabricState::new(FabricConfig::with_array(x, 2)).unwrap();
        let per_pe: Vec<Vec<Instruction>> =
            (0..2).map(|y| (0..x).map(|i| mov_imm((y * x + i) as u32)).collect()).collect();
        assert_eq!(f.spatial_configure(&per_pe).unwrap(), want);
        for y in 0..2 {
            for i in 0..x {
                assert_eq!(f.pe(i, y).held, Some(per_pe[y][i]));
            }
        }
    }
}

#[test]
fn spatial_mode_keeps_latched_instruction() {
    let mut f = FabricState::new(FabricConfig::with_array(4, 1)).unwrap();
    let per_pe = vec![(0..4).map(|i| mov_imm(i as u32 + 1)).collect::<Vec<_>>()];
    f.spatial_configure(&per_pe).unwrap();
    let before = f.pe_counters().instructions;
    f.run_spatial(10).unwrap();
    assert_eq!(f.pe_counters().instructions - before, 40);
    for i in 0..4 {
        assert_eq!(f.pe(i, 0).held, Some(per_pe[0][i]));
    }
}

#[test]
fn hold_is_rejected_as_a_latched_instruction() {
    let mut f = FabricState::new(FabricConfig::with_array(1, 1)).unwrap();
    let hold = Instruction::new(Opcode::Hold, Address::NULL, Address::NULL, Address::NULL);
    assert!(f.spatial_configure(&[vec![hold]]).is_err());
}
