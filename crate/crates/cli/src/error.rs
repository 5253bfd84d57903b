use std::fmt;
use std::path::Path;

use fisher_gp::Error;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::NoConvergence { .. }
            | Error::NotPsd { .. }
            | Error::LineSearchFailed { .. }
            | Error::NonFiniteGradient
            | Error::AllRejected { .. }
            | Error::LeavesHemisphere { .. }
            | Error::AntipodalPair
            | Error::NonPositiveParam(_) => CliError::Numerical(msg),
            Error::UnsupportedNu(_) => CliError::Usage(msg),
            _ => CliError::Data(msg),
        }
    }
}
