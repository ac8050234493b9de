use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Error categories shared by every module. The CLI prints the category
/// prefix so failures can be told apart without parsing the message.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("serialization error: {0}")]
    Serialization(String),
    #[error("training diverged at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::Config(_) => "configuration",
            Error::Contract(_) => "contract",
            Error::Serialization(_) => "serialization",
            Error::NonFinite { .. } => "divergence",
            Error::Io(_) => "io",
        }
    }
}

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(format!($($arg)*)) };
}
macro_rules! domain_err {
    ($($arg:tt)*) => { $crate::error::Error::Domain(format!($($arg)*)) };
}
macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}
pub(crate) use {config_err, dim_err, domain_err};
