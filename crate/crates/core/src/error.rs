use thiserror::Error;

/// Errors raised by the duct-acoustics toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} lies outside the admissible range [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("operation not supported for {0} profiles")]
    UnsupportedClass(&'static str),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("lambda = {0} lies on the cut; use the boundary-value evaluators")]
    OnCut(f64),
    #[error("norming factor has a pole at lambda = {re}{im:+}i")]
    AtPole { re: f64, im: f64 },
    #[error("principal value requested within {dist:e} of an interval endpoint")]
    Endpoint { dist: f64 },
    #[error("boundary value F = 2 on the cut at lambda = {0}")]
    SingularCut(f64),
    #[error("no exterior pole on the {0} side of the cut")]
    NoExteriorPole(&'static str),
    #[error("spectrum incomplete: {0}")]
    SpectrumIncomplete(String),
    #[error("polynomial root {root} collides with profile node {node}")]
    DegenerateRoot { root: f64, node: f64 },
    #[error("interior pole {index} at lambda = {lambda} collides with M(y) for y = {y}")]
    PoleCollision { index: usize, lambda: f64, y: f64 },
    #[error("|kt| = {kt} exceeds the oscillation budget {budget}; increase the panel budget")]
    Resolution { kt: f64, budget: f64 },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("grid mismatch: {0}")]
    Contract(String),
    #[error("profile is not certified stable: {0}")]
    NotStable(String),
    #[error("time step {dt} exceeds the stability bound {bound}")]
    TimeStep { dt: f64, bound: f64 },
    #[error("unsupported decomposition: {0}")]
    UnsupportedDecomposition(String),
    #[error("time-quadrature resolution insufficient: Richardson gap {gap:e} > {tol:e}")]
    TimeResolution { gap: f64, tol: f64 },
    #[error("config error at {path}: {msg}")]
    Config { path: String, msg: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
