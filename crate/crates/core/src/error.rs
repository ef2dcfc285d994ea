use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("integration step {step:e} s exceeds the stability/accuracy bound {bound:e} s")]
    StepTooLarge { step: f64, bound: f64 },

    #[error("integration would need {steps:e} steps (limit 1e9)")]
    TooManySteps { steps: f64 },

    #[error("sample rate {sample_rate} Hz cannot represent beat frequency {beat} Hz")]
    Aliasing { sample_rate: f64, beat: f64 },

    #[error("insufficient settling: {0}")]
    InsufficientSettling(String),

    #[error("target sensitivity {target:e} T/sqrt(Hz) is below the noise-floor limit {limit:e} T/sqrt(Hz)")]
    BelowNoiseLimit { target: f64, limit: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no frequency candidates are consistent with the measurements")]
    NoCandidates,

    #[error("band {band} Hz needs {required} channels, more than the allowed {max}")]
    TooManyChannels {
        band: f64,
        required: usize,
        max: usize,
    },

    #[error("trace format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Rejects non-finite or negative values.
pub(crate) fn ensure_non_negative(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(invalid(
            name,
            format!("must be finite and >= 0, got {value}"),
        ));
    }
    Ok(())
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(invalid(
            name,
            format!("must be finite and > 0, got {value}"),
        ));
    }
    Ok(())
}
