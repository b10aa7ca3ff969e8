use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("triple file {0} contains no triples")]
    EmptyGraph(PathBuf),

    #[error("graph is already reverse-augmented")]
    AlreadyAugmented,

    #[error("graph must be reverse-augmented first")]
    NotAugmented,

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite value produced by `{op}` (node {node})")]
    NonFinite { op: &'static str, node: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("synthetic capacity exhausted: pattern ({head_type}, {relation}, {tail_type}) holds {capacity} triples but {requested} were requested")]
    CapacityExhausted {
        head_type: usize,
        relation: usize,
        tail_type: usize,
        capacity: usize,
        requested: usize,
    },

    #[error("cannot construct a triple with an illegitimate type signature")]
    NoIllegitimateSignature,

    #[error("negative sampling exhausted after {attempts} attempts for triple ({head}, {relation}, {tail})")]
    SamplingExhausted {
        head: usize,
        relation: usize,
        tail: usize,
        attempts: usize,
    },

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("mask has {found} entries but the graph has {expected} triples")]
    MaskMismatch { expected: usize, found: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training aborted at epoch {epoch}, step {step}: {source}")]
    TrainingAborted {
        epoch: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an I/O error with the path it concerns.
    pub(crate) fn at(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::File {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
