use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("LFSR initial state must be nonzero")]
    ZeroIv,
    #[error("LFG ring {0} seeded with all-zero words")]
    ZeroRing(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is rank deficient")]
    RankDeficient,
    #[error("zero column {0} in sensing matrix")]
    ZeroColumn(usize),
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error("zero-norm reference signal")]
    ZeroNorm,
    #[error("nonce already used under this key")]
    NonceReuse,
    #[error("transmission failed: frame {0} exhausted retransmissions")]
    TransmissionFailed(usize),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
