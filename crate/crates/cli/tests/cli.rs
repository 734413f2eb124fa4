use std::path::Path;
use std::process::Command;

fn canon(args: &[&str], dir: &Path) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_canon"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const CONFIG: &str = "name = 'cli'\nkernel = 'spmm'\nm = 24\nk = 16\nn = 16\nsparsity = [0.5, 0.9]\n";

#[test]
fn run_emits_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    let out = canon(&["run", "c.toml", "--array", "4x4", "--seed", "3"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("index,name,kernel"));
    assert!(lines[1].contains(",4,4,"));
    assert!(lines.iter().skip(1).all(|l| l.contains(",true,")));

    canon(&["run", "c.toml", "--format", "json", "--out", "r.json"], dir.path());
    let json = std::fs::read_to_string(dir.path().join("r.json")).unwrap();
    assert_eq!(json.matches("\"oracle_match\": true").count(), 2);
}

#[test]
fn asm_writes_full_bitstream() {
    let dir = tempfile::tempdir().unwrap();
    canon(&["asm", "sddmm", "--out", "s.bin"], dir.path());
    assert_eq!(std::fs::metadata(dir.path().join("s.bin")).unwrap().len(), 1024 * 8);
}

#[test]
fn oracle_multiplies_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("a.mtx"), "%%MatrixMarket matrix coordinate integer general\n2 2 2\n1 1 2\n2 2 3\n").unwrap();
    std::fs::write(d.join("b.txt"), "1 2\n3 4\n").unwrap();
    let out = canon(&["oracle", "spmm", "a.mtx", "b.txt"], d);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.split_whitespace().collect::<Vec<_>>(), ["2", "4", "9", "12"]);
}

#[test]
fn trace_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    let a = canon(&["trace", "c.toml"], dir.path()).stdout;
    let b = canon(&["trace", "c.toml"], dir.path()).stdout;
    assert!(!a.is_empty());
    assert_eq!(a, b);
}
