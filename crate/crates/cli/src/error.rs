use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable spec contents or a spec that fails validation.
    Invalid(String),
    /// The solver returned no usable point; `dump` is where the program was written.
    Solver { message: String, dump: Option<String> },
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Solver { .. } => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
            CliError::Solver { message, dump: Some(p) } => write!(f, "{message} (program written to {p})"),
            CliError::Solver { message, dump: None } => f.write_str(message),
        }
    }
}

impl From<merton_ce::Error> for CliError {
    fn from(e: merton_ce::Error) -> Self {
        match e {
            merton_ce::Error::Solver { .. } => CliError::Solver {
                message: e.to_string(),
                dump: None,
            },
            merton_ce::Error::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
