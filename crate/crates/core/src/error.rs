use std::path::PathBuf;

use crate::mesh::Subdomain;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("boundary edge {edge} ({a:?} -> {b:?}) could not be tagged")]
    UntaggedEdge { edge: usize, a: [f64; 2], b: [f64; 2] },
    #[error("unsupported polynomial order {0}")]
    UnsupportedOrder(usize),
    #[error("non-conforming interface: {0}")]
    NonConformingInterface(String),
    #[error("the interface has no edges")]
    EmptyInterface,
    #[error("no quadrature rule of degree {0} (maximum is 4)")]
    QuadratureDegree(usize),
    #[error("degenerate element: measure {0:e}")]
    DegenerateElement(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("singular subproblem on {subdomain}: {detail}")]
    SingularSubproblem { subdomain: Subdomain, detail: String },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("PCG breakdown at iteration {iteration}: <p, Kp> = {curvature:e} is not positive")]
    Indefinite { iteration: usize, curvature: f64 },
    #[error("PCG stopped after {iterations} iterations at relative residual {residual:e} (tolerance {tol:e})")]
    NotConverged { iterations: usize, residual: f64, tol: f64 },
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("empty snapshot list")]
    EmptySnapshots,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
