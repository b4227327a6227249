use std::fmt;
use std::process::ExitCode;

use evi_core::experiment::ExperimentError;
use evi_core::{MomdpError, PreferenceError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Io,
    Validation,
    Assertion,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

impl Failure {
    pub fn io(message: impl fmt::Display) -> Self {
        Failure { kind: Kind::Io, message: message.to_string() }
    }

    pub fn validation(message: impl fmt::Display) -> Self {
        Failure { kind: Kind::Validation, message: message.to_string() }
    }

    pub fn assertion(message: impl fmt::Display) -> Self {
        Failure { kind: Kind::Assertion, message: message.to_string() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self.kind {
            Kind::Io => 1,
            Kind::Validation => 2,
            Kind::Assertion => 3,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            Kind::Io => "i/o error",
            Kind::Validation => "invalid input",
            Kind::Assertion => "check failed",
        };
        write!(f, "{label}: {}", self.message)
    }
}

impl From<MomdpError> for Failure {
    fn from(e: MomdpError) -> Self {
        match e {
            MomdpError::Io(_) => Failure::io(e),
            _ => Failure::validation(e),
        }
    }
}

impl From<PreferenceError> for Failure {
    fn from(e: PreferenceError) -> Self {
        match e {
            PreferenceError::Io(_) => Failure::io(e),
            _ => Failure::validation(e),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Momdp(inner) => inner.into(),
            ExperimentError::Preference(inner) => inner.into(),
            ExperimentError::DegenerateFit => Failure::assertion(e),
            _ => Failure::validation(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::io(e)
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::validation(e)
            }
        }
    )*};
}

validation_from!(evi_core::EnvelopeError, evi_core::OracleError, evi_core::ScheduleError, evi_core::SamplingError);
