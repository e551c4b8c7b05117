use spm_core::SpmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Core(#[from] SpmError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
