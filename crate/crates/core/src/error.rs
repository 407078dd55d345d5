use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: face has {count} vertex references, only quads are supported")]
    TriangleFaceFound { line: usize, count: usize },
    #[error("edge ({0}, {1}) is shared by more than two faces")]
    NonManifoldEdge(u32, u32),
    #[error("face {0} is degenerate")]
    DegenerateFace(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("inconsistent winding across edge ({0}, {1})")]
    Orientation(u32, u32),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("level mismatch: expected level {expected}, got {got}")]
    LevelMismatch { expected: usize, got: usize },
    #[error("hierarchy levels out of order: {0}")]
    Ordering(String),
    #[error("coarse face {face} of level {level} owns no fine faces")]
    EmptyGroup { level: usize, face: usize },
    #[error("face {0} has no real neighbours")]
    IsolatedFace(usize),
    #[error("non-finite {name} at step {step}")]
    Divergence { step: usize, name: String },
    #[error("checkpoint does not match: {0}")]
    ConfigMismatch(String),
    #[error("config: {0}")]
    Config(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input rather than an internal failure.
    pub fn is_precondition(&self) -> bool {
        match self {
            Error::Io(e) => matches!(e.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied),
            Error::Divergence { .. } => false,
            _ => true,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
