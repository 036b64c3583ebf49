use std::fmt;
use std::path::PathBuf;

/// Pipeline stage, used to tag errors raised inside the alternating loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Setup,
    Geodesics,
    GlobalCamera,
    Deform,
    LocalCameras,
    Energy,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Setup => "setup",
            Stage::Geodesics => "geodesics",
            Stage::GlobalCamera => "global-camera",
            Stage::Deform => "deform",
            Stage::LocalCameras => "local-cameras",
            Stage::Energy => "energy",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("line {line}: face has {count} vertices, only triangles are supported")]
    NonTriangleFace { line: usize, count: usize },
    #[error("face {face} references vertex {index}, mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("face {face} is degenerate (repeated vertex index)")]
    DegenerateFace { face: usize },
    #[error("vertex {0} has no incident face")]
    IsolatedVertex(usize),
    #[error("vertex {0}: cannot build a local frame (zero normal or degenerate tangent)")]
    DegenerateFrame(usize),
    #[error("vertex {vertex} is unreachable from source vertex {source_vertex}")]
    Unreachable { source_vertex: usize, vertex: usize },
    #[error("invalid vertex id {id} (mesh has {count} vertices)")]
    InvalidVertex { id: usize, count: usize },
    #[error("degenerate camera configuration{}: {reason}", vertex.map(|v| format!(" at vertex {v}")).unwrap_or_default())]
    DegenerateConfiguration {
        vertex: Option<usize>,
        reason: String,
    },
    #[error("need at least {required} correspondences, got {got}")]
    TooFewCorrespondences { required: usize, got: usize },
    #[error("linear solve failed: {0}")]
    Solver(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate vertex {0} in correspondences")]
    DuplicateVertex(usize),
    #[error("pixel {index} ({x}, {y}) lies outside the {width}x{height} image")]
    PixelOutOfBounds {
        index: usize,
        x: f64,
        y: f64,
        width: f64,
        height: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{stage} stage failed at iteration {iteration}: {source}")]
    Stage {
        stage: Stage,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image: {0}")]
    Image(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, stage: Stage, iteration: usize) -> Self {
        Error::Stage {
            stage,
            iteration,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
