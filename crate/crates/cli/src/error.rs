use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure in replica {replica}: {source}")]
    Replica {
        replica: u64,
        #[source]
        source: pam_core::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(pam_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input {path}: {message}")]
    Input { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Input { .. } => EXIT_CONFIG,
            CliError::Replica { .. } | CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<pam_core::Error> for CliError {
    fn from(e: pam_core::Error) -> Self {
        match e {
            pam_core::Error::Config(m) | pam_core::Error::Domain(m) | pam_core::Error::Io(m) => CliError::Config(m),
            other => CliError::Numerical(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
