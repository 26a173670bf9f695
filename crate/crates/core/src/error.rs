use thiserror::Error;

/// Errors raised by the library surface.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("subset enumeration limited to m <= {max}, got m = {m}")]
    SizeLimit { m: usize, max: usize },

    #[error("weights violate normalization: sum of w*v = {sum}, expected {expected}")]
    WeightNormalization { sum: f64, expected: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("scenario has no true partial conjunction null for u = {u}")]
    NoTrueNull { u: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

/// Rejects empty vectors and entries outside `[0, 1]` (including NaN).
pub(crate) fn check_pvalues(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(invalid("empty p-value list"));
    }
    if let Some((i, x)) = p.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
        return Err(invalid(format!("p-value {x} at position {i} is outside [0, 1]")));
    }
    Ok(())
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("lambda must lie in (0, 1), got {lambda}")))
    }
}
