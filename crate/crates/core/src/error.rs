use thiserror::Error;

/// Errors raised by the simulator and controller operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),

    #[error("program schedule is not monotone at page {page}")]
    NonMonotoneSchedule { page: usize },

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("retention age must be non-negative, got {0}")]
    NegativeAge(f64),

    #[error("page {0} is not programmed")]
    UnprogrammedPage(usize),

    #[error("page {page} out of range (block has {pages} pages)")]
    PageOutOfRange { page: usize, pages: usize },

    #[error("block {0} out of range")]
    BlockOutOfRange(usize),

    #[error("block is erased")]
    ErasedBlock,

    #[error("read time {now} precedes program time {programmed}")]
    ReadBeforeProgram { now: f64, programmed: f64 },

    #[error("invalid read references ({va}, {vb}, {vc})")]
    InvalidRefs { va: u32, vb: u32, vc: u32 },

    #[error("population has no cells in state {0}")]
    MissingState(&'static str),

    #[error("reference window {lo}..{hi} leaves the voltage grid")]
    WindowOutOfRange { lo: i64, hi: i64 },

    #[error("cell {0} is not in the susceptible set")]
    NotSusceptible(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("trace parse error at line {line}: {msg}")]
    TraceParse { line: usize, msg: String },

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("clock cannot move backwards from {now} to {requested}")]
    ClockBackwards { now: f64, requested: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
