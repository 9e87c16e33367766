use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid label {0}: expected 0 or 1")]
    Label(f64),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("degenerate configuration: {0}")]
    Rank(String),
    #[error("homogeneous coordinate is zero: point maps to infinity")]
    PointAtInfinity,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("corner extraction failed: {lines} merged lines yield {found} in-image intersections, need 2")]
    Extraction { lines: usize, found: usize },
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
