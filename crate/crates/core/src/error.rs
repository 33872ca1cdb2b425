use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("region {region} exceeds frame bounds {width}x{height}")]
    Bounds {
        region: String,
        width: u32,
        height: u32,
    },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("intervention `{0}` changed the frame dimensions")]
    ContractViolation(String),
    #[error("flat template: every pixel has the same value")]
    FlatTemplate,
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unsupported character {0:?}")]
    UnsupportedCharacter(char),
    #[error("model has not been trained")]
    Untrained,
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("no readable text in region")]
    EmptyText,
    #[error("corpus exhausted: need {needed} positive sentences, have {available}")]
    CorpusExhausted { needed: usize, available: usize },
    #[error("malformed label {0:?}: expected <kind>-<name> with kind one of mask, text, image")]
    LabelParse(String),
    #[error("authentication failed")]
    AuthFailure,
    #[error("session token expired")]
    AuthExpired,
    #[error("access denied")]
    AccessDenied,
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0} already exists")]
    AlreadyExists(String),
    #[error("image models are not implemented")]
    NotImplemented,
    #[error("stream stalled: {0}")]
    StreamStall(String),
    #[error("bandwidth must be positive")]
    DivisionByZero,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("storage error: {0}")]
    Storage(#[from] io::Error),
    #[error("png codec error: {0}")]
    Png(String),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
