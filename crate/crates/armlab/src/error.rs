use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArmlabError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("domain too large: {0}")]
    TooLarge(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
