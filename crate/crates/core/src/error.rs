use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension N = {0}; need N >= 5")]
    Dimension(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} after {subdivisions} subdivisions")]
    Quadrature {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("box infeasible: {0}")]
    Infeasible(String),

    #[error("boundary extremum on face {face}")]
    BoundaryExtremum { face: String },

    #[error("step size underflow at t = {t:e}")]
    StepUnderflow { t: f64 },

    #[error("config error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("check `{what}` failed: {detail}")]
    Check { what: String, detail: String },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
