use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MsfemError {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("under-resolved perforation: {0}")]
    Resolution(String),

    #[error("local problem for {what} is singular (pivot {pivot:.3e} at row {row})")]
    LocalSolve { what: String, row: usize, pivot: f64 },

    #[error("coarse system is singular: {0}")]
    Assembly(String),

    #[error("grid mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Solver(#[from] stochlab::Error),
}

impl MsfemError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        MsfemError::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = MsfemError> = std::result::Result<T, E>;
