//! Error classes and their exit codes.
//!
//! Every failure is reported as one stderr line of the form
//! `error class=<Class> kind=<Kind> message="<text>"`.

use acqsim::corpus::{IngestError, ProfileError, SyntheticError};
use acqsim::predictor::PredictorError;
use acqsim::scenarios::ScenarioError;
use acqsim::vtl::VtlError;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Usage,
    Data,
    Config,
    Io,
}

impl Class {
    pub fn exit_code(self) -> i32 {
        match self {
            Class::Usage => 2,
            Class::Data => 3,
            Class::Config => 4,
            Class::Io => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Class::Usage => "UsageError",
            Class::Data => "DataError",
            Class::Config => "ConfigError",
            Class::Io => "IoError",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub class: Class,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn new(class: Class, kind: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            class,
            kind: kind.into(),
            message: message.to_string(),
        }
    }

    pub fn config(kind: &str, message: impl fmt::Display) -> Self {
        Self::new(Class::Config, kind, message)
    }

    pub fn data(kind: &str, message: impl fmt::Display) -> Self {
        Self::new(Class::Data, kind, message)
    }

    /// The single diagnostic line.
    pub fn line(&self) -> String {
        let flat: String = self
            .message
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        format!(
            "error class={} kind={} message={:?}",
            self.class.as_str(),
            self.kind,
            flat
        )
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for Failure {}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::data(e.kind(), e)
    }
}

impl From<ProfileError> for Failure {
    fn from(e: ProfileError) -> Self {
        Failure::data("EmptyCorpus", e)
    }
}

impl From<PredictorError> for Failure {
    fn from(e: PredictorError) -> Self {
        Failure::data(e.kind(), e)
    }
}

impl From<VtlError> for Failure {
    fn from(e: VtlError) -> Self {
        Failure::config("ThresholdOutOfRange", e)
    }
}

impl From<SyntheticError> for Failure {
    fn from(e: SyntheticError) -> Self {
        Failure::config("InvalidSyntheticSpec", e)
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let class = match e {
            ScenarioError::InvalidConfig(_) | ScenarioError::InvalidPrice(_) => Class::Config,
            ScenarioError::Io(_) => Class::Io,
            _ => Class::Data,
        };
        Failure::new(class, e.kind(), e)
    }
}

/// Classifies an error that reached `main`. Unclassified errors are
/// output-side I/O problems.
pub fn classify(err: &anyhow::Error) -> Failure {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return Failure::new(f.class, f.kind.clone(), &f.message);
    }
    Failure::new(Class::Io, "Io", format!("{err:#}"))
}
