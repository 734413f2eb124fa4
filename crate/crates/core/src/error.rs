use thiserror::Error;

use crate::isa::Direction;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("malformed instruction word {word:#024x}: {reason}")]
    MalformedInstruction { word: u128, reason: &'static str },

    #[error("invalid instruction: {0}")]
    InvalidInstruction(String),

    #[error("operand shape mismatch for {op}: {detail}")]
    OperandShape { op: &'static str, detail: &'static str },

    #[error("rendezvous violation at cycle {cycle}, PE ({x},{y}): read from {dir:?} with no driven value")]
    RendezvousViolation { cycle: u64, x: usize, y: usize, dir: Direction },

    #[error("value driven onto {dir:?} input of PE ({x},{y}) at cycle {cycle} was never consumed")]
    UnconsumedValue { cycle: u64, x: usize, y: usize, dir: Direction },

    #[error("router conflict at cycle {cycle}, PE ({x},{y}): two writes to {dir:?}")]
    RouterConflict { cycle: u64, x: usize, y: usize, dir: Direction },

    #[error("edge collector protocol error at cycle {cycle}: {detail}")]
    EdgeProtocol { cycle: u64, detail: String },

    #[error("scratchpad full")]
    BufferFull,

    #[error("scratchpad empty")]
    BufferEmpty,

    #[error("illegal FSM transition: LUT index {index:#05x} is unreachable")]
    IllegalTransition { index: u16 },

    #[error("program declares {0} states, at most 8 fit the state field")]
    TooManyStates(usize),

    #[error("program declares {0} input tags, at most 8 fit the tag field")]
    TooManyTags(usize),

    #[error("program declares {0} message ids, at most 4 fit the message field")]
    TooManyMessages(usize),

    #[error("rules {first} and {second} overlap at LUT index {index:#05x} without distinct priorities")]
    AmbiguousRules { first: usize, second: usize, index: u16 },

    #[error("program parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("bitstream must hold exactly 1024 entries, got {0}")]
    BitstreamLength(usize),

    #[error("degenerate shape: {0}")]
    DegenerateShape(String),

    #[error("malformed stream: {0}")]
    MalformedStream(String),

    #[error("infeasible tiling: {0}")]
    InfeasibleTiling(String),

    #[error("infeasible mapping: {0}")]
    InfeasibleMapping(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation did not finish within {0} cycles")]
    Timeout(u64),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
