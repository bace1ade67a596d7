//! Error type shared by all modules.

use thiserror::Error;

/// Errors raised by the numerical modules. Each variant carries a stable code
/// (see [`Error::code`]) that the command-line driver surfaces unchanged.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("model domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("integrator failure: {0}")]
    Integrator(String),
    #[error("not shiftable: {0}")]
    NotShiftable(String),
    #[error("front face degenerate: {0}")]
    FrontFaceDegenerate(String),
    #[error("corner degenerate: {0}")]
    CornerDegenerate(String),
    #[error("accuracy not guaranteed: {0}")]
    Accuracy(String),
    #[error("fit failure: {0}")]
    FitFailure(String),
    #[error("caustic: spread determinant changes sign near t = {time}")]
    Caustic { time: f64 },
    #[error("shooting failed: {0}")]
    Shooting(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "E_DOMAIN",
            Error::Precondition(_) => "E_PRECONDITION",
            Error::Usage(_) => "E_USAGE",
            Error::Integrator(_) => "E_INTEGRATOR",
            Error::NotShiftable(_) => "E_NOT_SHIFTABLE",
            Error::FrontFaceDegenerate(_) => "E_FRONT_FACE",
            Error::CornerDegenerate(_) => "E_CORNER",
            Error::Accuracy(_) => "E_ACCURACY",
            Error::FitFailure(_) => "E_FIT",
            Error::Caustic { .. } => "E_CAUSTIC",
            Error::Shooting(_) => "E_SHOOTING",
            Error::Invariant(_) => "E_INVARIANT",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct() {
        let all = [
            Error::Domain(String::new()),
            Error::Precondition(String::new()),
            Error::Usage(String::new()),
            Error::Integrator(String::new()),
            Error::NotShiftable(String::new()),
            Error::FrontFaceDegenerate(String::new()),
            Error::CornerDegenerate(String::new()),
            Error::Accuracy(String::new()),
            Error::FitFailure(String::new()),
            Error::Caustic { time: 0.0 },
            Error::Shooting(String::new()),
            Error::Invariant(String::new()),
        ];
        let mut codes: Vec<_> = all.iter().map(Error::code).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), all.len());
    }
}
