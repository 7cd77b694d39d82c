use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid permutation {axes:?} for rank {rank}")]
    InvalidPermutation { axes: Vec<usize>, rank: usize },

    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("unsupported head dim {head_dim}: must be divisible by {required}")]
    UnsupportedHeadDim { head_dim: usize, required: usize },

    #[error("extent {extent} is not divisible by patch size {patch}")]
    IndivisibleExtent { extent: usize, patch: usize },

    #[error("lesion mask has no positive voxel")]
    EmptyMask,

    #[error("reference feature has zero norm")]
    ZeroReferenceFeature,

    #[error("power iteration did not converge for component {component} (residual {residual:e})")]
    ConvergenceFailure { component: usize, residual: f64 },

    #[error("malformed archive header: {0}")]
    MalformedHeader(String),

    #[error("overlapping or non-contiguous data ranges: {0}")]
    OverlappingRanges(String),

    #[error("truncated archive: {0}")]
    TruncatedFile(String),

    #[error("unsupported dtype {0}, only F32 is accepted")]
    UnsupportedDtype(String),

    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),

    #[error("missing tensor {0:?}")]
    MissingTensor(String),

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("i/o failure on {path}: {source}")]
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

    /// Stable machine-readable code printed by the command-line tool.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "E_SHAPE_MISMATCH",
            Error::InvalidPermutation { .. } => "E_INVALID_PERMUTATION",
            Error::InvalidLength(_) => "E_INVALID_LENGTH",
            Error::NonFinite { .. } => "E_NON_FINITE",
            Error::UnsupportedHeadDim { .. } => "E_UNSUPPORTED_HEAD_DIM",
            Error::IndivisibleExtent { .. } => "E_INDIVISIBLE_EXTENT",
            Error::EmptyMask => "E_EMPTY_MASK",
            Error::ZeroReferenceFeature => "E_ZERO_REFERENCE",
            Error::ConvergenceFailure { .. } => "E_PCA_CONVERGENCE",
            Error::MalformedHeader(_) => "E_MALFORMED_HEADER",
            Error::OverlappingRanges(_) => "E_OVERLAPPING_RANGES",
            Error::TruncatedFile(_) => "E_TRUNCATED_FILE",
            Error::UnsupportedDtype(_) => "E_UNSUPPORTED_DTYPE",
            Error::DuplicateName(_) => "E_DUPLICATE_NAME",
            Error::MissingTensor(_) => "E_MISSING_TENSOR",
            Error::InvalidArch(_) => "E_INVALID_ARCH",
            Error::InvalidSchedule(_) => "E_INVALID_SCHEDULE",
            Error::Io { .. } => "E_IO",
        }
    }
}
