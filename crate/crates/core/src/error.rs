use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("degenerate look-at direction: {0}")]
    DegenerateDirection(&'static str),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("image of {width}x{height} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },

    #[error("at least one view is required")]
    EmptyViews,

    #[error("need at least {required} views, got {got}")]
    TooFewViews { required: usize, got: usize },

    #[error("voxel grid has no occupied cells")]
    EmptyGrid,

    #[error("carving left an empty hull{}", .background_view.map(|k| format!(": view {k} has an all-background mask")).unwrap_or_default())]
    EmptyHull { background_view: Option<usize> },

    #[error("mesh has no triangle with positive area")]
    ZeroAreaMesh,

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("mesh is not visible in any view")]
    NotVisible,

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite gradient in {group} at index {index}")]
    NonFiniteGradient { group: &'static str, index: usize },

    #[error("optimization diverged: {group} of gaussian {index} is no longer finite")]
    Diverged { group: &'static str, index: usize },

    #[error("malformed {format} data: {message}")]
    Format {
        format: &'static str,
        message: String,
    },

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Png(#[from] ::image::ImageError),
}

impl Error {
    pub(crate) fn format(format: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            format,
            message: message.into(),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig(message.into())
    }

    /// Attaches a file path to an error.
    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::Path {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Numerical failures are reported separately from bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFiniteGradient { .. } | Error::Diverged { .. } | Error::ZeroAreaMesh => true,
            Error::Path { source, .. } | Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
