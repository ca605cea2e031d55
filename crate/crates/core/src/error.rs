use thiserror::Error;

use crate::lifecycle::{CardState, LifecycleEvent};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("transition rejected: event `{event}` is not legal in state `{state}`")]
    RejectedTransition { state: CardState, event: LifecycleEvent },

    #[error("card `{card_id}` is not the current top card")]
    StaleCard { card_id: String },

    #[error("session `{0}` is closed")]
    SessionClosed(String),

    #[error("{what} `{id}` not found")]
    NotFound { what: &'static str, id: String },

    #[error("event log: {0}")]
    Log(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn not_found(what: &'static str, id: impl Into<String>) -> Self {
        Error::NotFound { what, id: id.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
