use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed CSV: {msg}")]
    Csv { path: String, line: usize, msg: String },

    #[error(transparent)]
    Core(#[from] nanomotion::Error),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 runtime failure, 2 invalid input, 3 non-convergence.
    pub fn exit_code(&self) -> i32 {
        use nanomotion::Error as E;
        match self {
            CliError::Parse { .. } | CliError::Validation(_) | CliError::Csv { .. } => 2,
            CliError::Core(e) if e.is_non_convergence() => 3,
            CliError::Core(E::RankDeficient(_)) => 3,
            CliError::Core(E::InvalidParameter(_) | E::StepTooCoarse(_) | E::UnsupportedRegime(_)) => 2,
            _ => 1,
        }
    }
}

pub fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}
