use hphi4_core::Error;
use thiserror::Error;

/// Failures of a CLI run, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: `{key}`: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        key: String,
        msg: String,
    },
    #[error("{0}")]
    Capacity(String),
    #[error("assertion failed: {}", .0.join(", "))]
    Assertion(Vec<String>),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn config(line: Option<usize>, key: &str, msg: &str) -> Self {
        Self::Config {
            line,
            key: key.to_string(),
            msg: msg.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Capacity(_) => 3,
            Self::Assertion(_) => 4,
            Self::Io(_) => 5,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Capacity { .. } => Self::Capacity(e.to_string()),
            Error::Io(io) => Self::Io(io.to_string()),
            Error::Convergence(m) => Self::Assertion(vec![format!("picard_contraction ({m})")]),
            Error::Domain(m) | Error::Usage(m) | Error::Format(m) => Self::Config {
                line: None,
                key: String::from("-"),
                msg: m,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
