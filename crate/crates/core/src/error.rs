use thiserror::Error;

/// Errors raised by the sampling, cell-solver and estimator layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("coefficient is not uniformly elliptic: {0}")]
    Ellipticity(String),

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sample {index} failed: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("Voigt-Reuss bound violated for sample {index}: eigenvalues {eig:?} outside [{lower}, {upper}]")]
    Bounds {
        index: usize,
        eig: [f64; 2],
        lower: f64,
        upper: f64,
    },

    #[error("reports are not comparable: {0}")]
    Comparability(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_sample(self, index: usize) -> Self {
        match self {
            e @ Error::Sample { .. } => e,
            e => Error::Sample {
                index,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
