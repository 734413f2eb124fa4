//! Cycle-by-cycle event log of a 2x2 SpMM micro-run against a checked-in
//! fixture. Set `CANON_BLESS=1` to rewrite the fixture after an intended
//! timing change.

use canon_core::fabric::FabricConfig;
use canon_core::kernels::{run_spmm_detailed, SpmmPattern, SpmmProgram};
use canon_core::workloads::{oracle_spmm, Matrix};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/spmm_2x2.trace");

fn micro_run() -> String {
    let a = Matrix::from_rows(&[vec![1, 0, 2, 0], vec![0, 3, 0, 0], vec![0, 0, 0, 4], vec![5, 0, 0, 6]]).unwrap();
    let b = Matrix::from_fn(4, 8, |r, c| (r * 8 + c) as i32 - 10);
    let cfg = FabricConfig {
        trace_log: true,
        ..FabricConfig::with_array(2, 2)
    };
    let (c, m, f) = run_spmm_detailed(&a, &b, &cfg, SpmmPattern::Unstructured, SpmmProgram::Buffered).unwrap();
    assert_eq!(c, oracle_spmm(&a, &b).unwrap());
    assert_eq!(m.staggered_violations, 0);
    f.trace_log.expect("trace log enabled")
}

#[test]
fn spmm_2x2_matches_fixture() {
    let log = micro_run();
    if std::env::var_os("CANON_BLESS").is_some() {
        std::fs::write(FIXTURE, &log).unwrap();
    }
    let want = std::fs::read_to_string(FIXTURE).expect("fixture missing; run with CANON_BLESS=1");
    for (i, (g, w)) in log.lines().zip(want.lines()).enumerate() {
        assert_eq!(g, w, "first difference at line {}", i + 1);
    }
    assert_eq!(log.lines().count(), want.lines().count());
}

#[test]
fn micro_run_is_repeatable() {
    assert_eq!(micro_run(), micro_run());
}
