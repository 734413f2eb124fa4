use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use canon_core::harness::{run_experiment, trace_job, write_csv, write_json, ExperimentConfig};
use canon_core::microcode::{
    assemble, builtin_program, parse_program, verify_equivalence, write_bitstream, LUT_ENTRIES,
};
use canon_core::workloads::{
    oracle_sddmm, oracle_spmm, read_matrix_file, write_dense_text, write_matrix_market, Mask,
};

#[derive(Parser)]
#[command(name = "canon", about = "Cycle-level model of an FSM-orchestrated SIMD PE array")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Overrides the seed list of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the scratchpad depth list of the config.
    #[arg(long, global = true)]
    spad_depth: Option<usize>,
    /// Array shape, e.g. 8x8.
    #[arg(long, global = true, value_parser = parse_array)]
    array: Option<(usize, usize)>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Runs every point of an experiment config and prints one row per run.
    Run { config: PathBuf },
    /// Assembles an FSM program (builtin name or file) into a LUT bitstream.
    Asm { program: String },
    /// Computes a reference result: spmm A B, or sddmm A B MASK.
    Oracle {
        kernel: String,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Prints the cycle event log of the first run of a config.
    Trace { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn parse_array(s: &str) -> Result<(usize, usize), String> {
    let (x, y) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected XxY, got {s}"))?;
    let p = |v: &str| v.parse::<usize>().map_err(|e| format!("{v}: {e}"));
    Ok((p(x)?, p(y)?))
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_config(cli: &Cli, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    cfg.apply_overrides(cli.seed, cli.spad_depth, cli.array);
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match &cli.cmd {
        Cmd::Run { config } => {
            let cfg = load_config(&cli, config)?;
            info!("{}: {} runs", cfg.name, cfg.jobs().len());
            let rows = run_experiment(&cfg);
            let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
            let w = output(&cli.out)?;
            match cli.format {
                Format::Csv => write_csv(&rows, w)?,
                Format::Json => write_json(&rows, w)?,
            }
            if failed > 0 {
                log::warn!("{failed} of {} runs reported errors", rows.len());
            }
        }
        Cmd::Asm { program } => {
            let p = if Path::new(program).exists() {
                parse_program(&std::fs::read_to_string(program)?)?
            } else {
                builtin_program(program)?
            };
            let lut = assemble(&p)?;
            if let Some(i) = verify_equivalence(&p, &lut) {
                bail!("LUT entry {i:#05x} differs from the rule interpreter");
            }
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.bin", p.name)));
            write_bitstream(&lut, BufWriter::new(File::create(&out)?))?;
            let valid = lut.words.iter().filter(|w| **w != 0).count();
            println!(
                "{}: {} rules, {valid}/{LUT_ENTRIES} valid entries, verified, wrote {}",
                p.name,
                p.rules.len(),
                out.display()
            );
        }
        Cmd::Oracle { kernel, inputs } => {
            let mats = inputs
                .iter()
                .map(|p| read_matrix_file(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let c = match (kernel.as_str(), mats.as_slice()) {
                ("spmm" | "gemm", [a, b]) => oracle_spmm(a, b)?,
                ("sddmm", [a, b, m]) => oracle_sddmm(a, b, &Mask::from_matrix(m))?,
                _ => bail!("usage: oracle spmm A B | oracle sddmm A B MASK"),
            };
            let w = output(&cli.out)?;
            let mtx = cli.out.as_ref().is_some_and(|p| p.extension().is_some_and(|e| e == "mtx"));
            if mtx {
                write_matrix_market(&c, w)?;
            } else {
                write_dense_text(&c, w)?;
            }
        }
        Cmd::Trace { config } => {
            let cfg = load_config(&cli, config)?;
            let job = cfg.jobs().into_iter().next().context("config has no runs")?;
            let log = trace_job(&job)?;
            output(&cli.out)?.write_all(log.as_bytes())?;
        }
    }
    Ok(())
}
