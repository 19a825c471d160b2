use std::path::PathBuf;

use crate::model::Channel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Variants group into usage, data, and provider failures; see [`Error::kind`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // --- core model ---
    #[error("snippet text is empty")]
    EmptyText,
    #[error("time {t} outside [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("interval start {start} is after end {end}")]
    InvertedInterval { start: f64, end: f64 },
    #[error("video record has no fps")]
    MissingFps,
    #[error("invalid video record: {0}")]
    InvalidVideo(String),
    #[error("empty query")]
    EmptyQuery,

    // --- text index ---
    #[error("documents span more than one channel ({0} and {1})")]
    MixedChannels(Channel, Channel),
    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),
    #[error("unknown document id {0:?}")]
    UnknownDocId(String),
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),

    // --- vector index ---
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("duplicate vector id {0:?}")]
    DuplicateId(String),
    #[error("no embeddings for ids: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    // --- persistence ---
    #[error("bad magic bytes in {0}")]
    BadMagic(String),
    #[error("format version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt index file: {0}")]
    Corrupt(String),

    // --- temporal rescoring / frame selection ---
    #[error("frame list is empty")]
    EmptyFrameList,
    #[error("no frame has a stored embedding")]
    MissingFrameEmbeddings,
    #[error("every candidate has zero rescored mass")]
    AllZeroMass,
    #[error("length mismatch: {frames} frames but {sims} similarities")]
    LengthMismatch { frames: usize, sims: usize },

    // --- ingestion ---
    #[error("line {line}: malformed timestamp {text:?}")]
    MalformedTimestamp { line: usize, text: String },
    #[error("input is empty")]
    EmptyFile,
    #[error("missing WEBVTT header")]
    MissingHeader,
    #[error("line {line}: {message}")]
    BadLine { line: usize, message: String },
    #[error("line {line}: channel {found} in a {expected} file")]
    ChannelMismatch {
        line: usize,
        expected: Channel,
        found: Channel,
    },
    #[error("every line failed to parse ({} errors)", .0.len())]
    AllLinesFailed(Vec<LineError>),
    #[error("invalid box {0:?}")]
    InvalidBox([f64; 4]),

    // --- pipeline / providers ---
    #[error("index is empty")]
    EmptyIndex,
    #[error("prompt budget {0} is below the minimum of 256 tokens")]
    BudgetTooSmall(usize),
    #[error("provider unavailable: {message}")]
    ProviderUnavailable { message: String, retriable: bool },

    // --- eval ---
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    // --- config / io ---
    #[error("config error: {0}")]
    Config(String),
    #[error("no inputs")]
    NoInputs,
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A per-line failure collected by tolerant parsers.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Provider,
}

impl ErrorKind {
    /// Process exit code for this class of failure.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Provider => 3,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn provider(message: impl Into<String>, retriable: bool) -> Self {
        Error::ProviderUnavailable {
            message: message.into(),
            retriable,
        }
    }

    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::ProviderUnavailable { .. } => ErrorKind::Provider,
            Error::Config(_) | Error::BudgetTooSmall(_) | Error::InvalidParams(_) => {
                ErrorKind::Usage
            }
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub fn is_retriable(&self) -> bool {
        match self {
            Error::ProviderUnavailable { retriable, .. } => *retriable,
            Error::Stage { source, .. } => source.is_retriable(),
            _ => false,
        }
    }
}
