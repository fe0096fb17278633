use hkg_core::HkgError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] HkgError),

    #[error("invariant check failed: {0}")]
    Invariant(String),
}

impl CliError {
    /// Process exit status: 2 bad input, 3 invariant violation, 4 divergence,
    /// 5 tree mismatch, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => 3,
            CliError::Core(e) => match e {
                HkgError::Divergence(_) => 4,
                HkgError::TreeMismatch(_) => 5,
                HkgError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
                HkgError::Config(_)
                | HkgError::Parameter(_)
                | HkgError::Format { .. }
                | HkgError::Json(_)
                | HkgError::Structure(_)
                | HkgError::Label(_)
                | HkgError::Lookup(_) => 2,
                _ => 1,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
