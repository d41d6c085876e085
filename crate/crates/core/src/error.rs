use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("interest group rejected: {0:?}")]
    InvalidInterestGroup(Vec<Violation>),

    #[error("join token budget exhausted for account {0}")]
    RateLimited(u64),

    #[error("report {0} was already aggregated or appears twice in the batch")]
    DuplicateReport(u64),

    #[error("covert channel corrupted: {0}")]
    ChannelCorrupted(String),

    #[error("no ad in inventory matches uid {0}")]
    InventoryMismatch(u32),

    #[error("clock cannot move backwards from {now} to {requested}")]
    ClockRegression { now: u64, requested: u64 },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
