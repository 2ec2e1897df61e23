use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by fitting, voting, detection and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("normal at point {index} is not unit length (|n| = {norm})")]
    NonUnitNormal { index: usize, norm: f64 },

    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("degenerate basis (rank {rank}, expected {expected})")]
    DegenerateBasis { rank: usize, expected: usize },

    #[error("null-space coefficient system is rank deficient")]
    RankDeficient,

    #[error("no consensus: peak bin holds {votes} votes, need {needed}")]
    NoConsensus { votes: usize, needed: usize },

    #[error("point (Q p = 0) has no polar plane")]
    NoPolar,

    #[error("quadric has no finite center")]
    NotCentral,

    #[error("sphere coefficients give an imaginary radius")]
    ImaginaryRadius,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("neighborhood is degenerate")]
    DegenerateNeighborhood,

    #[error("basis selection exhausted after {attempts} attempts")]
    Exhausted { attempts: usize },

    #[error("surface could not be sampled inside the unit ball")]
    UnsampleableSurface,

    #[error("could not generate a random quadric of class {0}")]
    GenerationFailed(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: parse error at {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("{path}: unsupported format: {message}")]
    FormatUnsupported { path: PathBuf, message: String },

    #[error("{path}: I/O error")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, Error>;
