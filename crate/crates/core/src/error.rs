use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions {width}x{height}: {reason}")]
    Dimensions {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("no candidate regions received votes")]
    NoCandidates,

    #[error("only {found} character regions survived, identifier implausible")]
    LowConfidence { found: usize },

    #[error("image too small for feature extraction: {width}x{height}")]
    ImageTooSmall { width: usize, height: usize },

    #[error("need at least {needed} descriptors, got {got}")]
    TooFewDescriptors { needed: usize, got: usize },

    #[error("need at least 4 matches to fit a homography, got {0}")]
    InsufficientMatches(usize),

    #[error("thermal line sequence is empty")]
    EmptyInput,

    #[error("thermal timestamps decrease at line {index}")]
    NonMonotonicTimestamps { index: usize },

    #[error("prediction/ground-truth length mismatch: {predictions} vs {truths}")]
    LengthMismatch { predictions: usize, truths: usize },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("unknown stream role `{0}`")]
    UnknownRole(String),

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("unsupported manifest version `{0}`")]
    VersionMismatch(String),

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }
}
