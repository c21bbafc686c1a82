use thiserror::Error;

/// Errors raised by the sampler, its numerical kernels and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlipsError {
    /// A parameter lies outside the domain of the operation (e.g. `t <= 0`).
    #[error("domain error: {0}")]
    Domain(String),
    /// An input value is malformed (non-finite coordinates, wrong length, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The target does not provide a capability the operation needs.
    #[error("unsupported target: {0}")]
    Unsupported(String),
    /// A quantity that must be finite came out NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// A failure inside a SLIPS step, tagged with the step index.
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<SlipsError>,
    },
    /// Experiment configuration problems.
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl SlipsError {
    pub(crate) fn at_step(self, step: usize) -> Self {
        SlipsError::Step {
            step,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for SlipsError {
    fn from(err: std::io::Error) -> Self {
        SlipsError::Io(err.to_string())
    }
}

pub type Result<T, E = SlipsError> = std::result::Result<T, E>;

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(SlipsError::Domain(format!("{name} must be finite and > 0, got {value}")))
    }
}

pub(crate) fn ensure_finite(name: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SlipsError::InvalidInput(format!("{name} has non-finite coordinates")))
    }
}

pub(crate) fn ensure_len(name: &str, xs: &[f64], dim: usize) -> Result<()> {
    if xs.len() == dim {
        Ok(())
    } else {
        Err(SlipsError::InvalidInput(format!(
            "{name} has length {}, expected {dim}",
            xs.len()
        )))
    }
}
