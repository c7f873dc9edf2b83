use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] otfs_ce::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("empty result set: {0}")]
    Empty(&'static str),

    #[error("zero-energy reference channel")]
    ZeroChannel,
}
