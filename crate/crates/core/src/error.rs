use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed MetaImage header {path}: {reason}")]
    Header { path: PathBuf, reason: String },

    #[error("invalid label code {code} at voxel {index}")]
    InvalidLabel { code: f32, index: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("registration failed: {0}")]
    Registration(String),

    #[error("empty label region for code {0}")]
    EmptyRegion(u8),

    #[error("non-manifold surface: {0}")]
    NonManifold(String),

    #[error("degenerate neighborhood at vertex {vertex}: {reason}")]
    DegenerateNeighborhood { vertex: usize, reason: String },

    #[error("inverted tetrahedra after wall offset at surface vertices {vertices:?}")]
    InvertedElements { vertices: Vec<usize> },

    #[error("singular stiffness system: {0}")]
    Singular(String),

    #[error("linear solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("field/surface mismatch: {0}")]
    FieldMismatch(String),

    #[error("degenerate index field: {0}")]
    Degenerate(String),

    #[error("malformed VTK file {path}: {reason}")]
    Vtk { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error("missing artifact {0}; run the upstream stage first")]
    MissingArtifact(PathBuf),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
