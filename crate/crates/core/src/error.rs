use std::fmt;

use thiserror::Error;

/// Ground-truth condition classes of the three-class ROC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionClass {
    /// Far-end single talk outside echo-path-change windows.
    Far,
    /// Simultaneous far-end and near-end speech.
    Doubletalk,
    /// Samples inside an echo-path-change hold window.
    Change,
}

impl fmt::Display for ConditionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionClass::Far => "far",
            ConditionClass::Doubletalk => "doubletalk",
            ConditionClass::Change => "change",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("sample-rate mismatch: expected {expected} Hz, found {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("multi-channel input ({0} channels); only mono is supported")]
    MultiChannel(u16),

    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("unstable autoregressive coefficients")]
    UnstableAr,

    #[error("zero active energy in {0} signal")]
    ZeroActiveEnergy(&'static str),

    #[error("empty condition class: {0}")]
    EmptyConditionClass(ConditionClass),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    /// An error raised while evaluating one segment of a scenario.
    #[error("{source} (in {segment})")]
    Scenario {
        segment: String,
        #[source]
        source: Box<Error>,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Innermost error, looking through scenario context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Scenario { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn in_segment(self, segment: impl Into<String>) -> Self {
        Error::Scenario {
            segment: segment.into(),
            source: Box::new(self),
        }
    }
}

impl From<hound::Error> for Error {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => Error::Io(io),
            other => Error::Malformed(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
