use std::fmt;

/// Command failure, mapped to the exit-code contract: 2 configuration,
/// 3 numeric or convergence, 4 I/O.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numeric(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(_) => 3,
            Self::Io(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) | Self::Numeric(m) | Self::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}

impl From<nvhet_core::Error> for Failure {
    fn from(e: nvhet_core::Error) -> Self {
        use nvhet_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidParameter { .. }
            | E::Aliasing { .. }
            | E::BelowNoiseLimit { .. }
            | E::TooManyChannels { .. }
            | E::InsufficientSettling(_) => Self::Config(msg),
            E::StepTooLarge { .. }
            | E::TooManySteps { .. }
            | E::Degenerate(_)
            | E::NoCandidates => Self::Numeric(msg),
            E::Format(_) | E::Io(_) => Self::Io(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
