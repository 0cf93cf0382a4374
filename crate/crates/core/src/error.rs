use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dry cell at ({j}, {k}): water column {depth} m")]
    DryCell { j: usize, k: usize, depth: f64 },

    #[error("non-finite position ({x}, {y})")]
    NonFinitePosition { x: f64, y: f64 },

    #[error("non-finite state after substep {substep}")]
    NonFiniteState { substep: usize },

    #[error("cell ({j}, {k}) is not co-located with a coarse grid point under the current offset")]
    NotColocated { j: usize, k: usize },

    #[error("Lambert W iteration did not converge for argument {0}")]
    LambertNoConvergence(f64),

    #[error("alpha solver did not converge (c* = {c_star}, gamma = {gamma})")]
    AlphaNoConvergence { c_star: f64, gamma: f64 },

    #[error("covariance scaling beta = {0} is negative")]
    NegativeBeta(f64),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("SVD failed: {0}")]
    Svd(String),

    #[error("ensemble collapse: no finite weight (max log-weight {max_log_weight})")]
    EnsembleCollapse { max_log_weight: f64 },

    #[error("particle {particle}: {source}")]
    Particle {
        particle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing observations at t = {0} s")]
    MissingObservations(f64),

    #[error("time grid mismatch: {0}")]
    TimeGridMismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_particle(self, particle: usize) -> Error {
        match self {
            e @ Error::Particle { .. } => e,
            e => Error::Particle {
                particle,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
