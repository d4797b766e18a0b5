use thiserror::Error;

/// Errors raised by the charge-sensitivity toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("charge-basis cutoff {cutoff} is below the minimum of {min}")]
    CutoffTooSmall { cutoff: usize, min: usize },

    #[error("state labeling failed: {0}")]
    LabelingFailure(String),

    #[error("dispersion model violated: {0}")]
    ModelViolation(String),

    #[error("splitting pair ({df1_mhz} MHz, {df2_mhz} MHz) not representable with dispersion {epsilon_mhz} MHz: {bound}")]
    Infeasible {
        df1_mhz: f64,
        df2_mhz: f64,
        epsilon_mhz: f64,
        bound: String,
    },

    #[error("numerical integration did not converge: {0}")]
    IntegrationFailure(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("aliasing: {0}")]
    Aliasing(String),

    #[error("non-uniform delay grid: {0}")]
    NonUniformGrid(String),

    #[error("position ({x_um}, {y_um}) um lies outside the map bounds")]
    OutOfBounds { x_um: f64, y_um: f64 },

    #[error("no localization solution: minimum chi-square {chi2_min:.3} at ({x_um:.1}, {y_um:.1}) um exceeds the 2-sigma level")]
    NoSolution { chi2_min: f64, x_um: f64, y_um: f64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite, got {value}")))
    }
}
