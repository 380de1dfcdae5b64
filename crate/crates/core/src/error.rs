use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("invalid profile: {0}")]
    Profile(String),

    #[error("hypothesis (H) violated: {0}")]
    Hypothesis(String),

    #[error("partition needs more than {max} intervals (reached interval width {width:e})")]
    PartitionExplosion { max: usize, width: f64 },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("{count} target node(s) outside the source mesh, first at ({x}, {y})")]
    OutsideDomain { count: usize, x: f64, y: f64 },

    #[error("mismatched mesh: {0}")]
    MeshMismatch(String),

    #[error("line search failed at iteration {iteration}: step fell below {min_step:e} (relative gradient {gradient:e})")]
    LineSearch {
        iteration: usize,
        min_step: f64,
        gradient: f64,
    },

    #[error("conjugate gradient did not converge: relative residual {residual:e} after {iterations} iterations")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("Newton iteration did not converge: relative gradient {gradient:e} after {iterations} iterations")]
    NotConverged { iterations: usize, gradient: f64 },

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("resolution policy violated: {0}")]
    Resolution(String),

    #[error("solve failed at x = {x}: {source}")]
    CellAt {
        x: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error at line {line}: {message}")]
    Format { line: usize, message: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for failures of an iterative solver, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::LineSearch { .. }
            | Error::CgNotConverged { .. }
            | Error::NotConverged { .. } => true,
            Error::CellAt { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
