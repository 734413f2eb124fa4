pub mod error;
pub mod fabric;
pub mod harness;
pub mod isa;
pub mod kernels;
pub mod memsys;
pub mod metrics;
pub mod microcode;
pub mod orchestrator;
pub mod pe;
pub mod workloads;

pub use error::{Error, Result};
