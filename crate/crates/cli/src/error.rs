use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] progress_core::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal invariant breached: {0}")]
    Internal(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for bad configuration or inputs, 3 for I/O, 4 for broken invariants.
    pub fn exit_code(&self) -> i32 {
        use progress_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Internal(_) => 4,
            CliError::Core(e) => match e {
                E::Io { .. } => 3,
                E::Internal(_) | E::BudgetExceeded { .. } => 4,
                _ => 2,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(CliError::io(Path::new("x"), io).exit_code(), 3);
        assert_eq!(CliError::Config("bad".into()).exit_code(), 2);
        assert_eq!(
            CliError::Core(progress_core::Error::Validation("v".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::Core(progress_core::Error::Internal("i".into())).exit_code(),
            4
        );
        assert_eq!(
            CliError::Core(progress_core::Error::PoolExhausted).exit_code(),
            2
        );
    }
}
