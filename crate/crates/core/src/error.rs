use thiserror::Error;

use crate::types::{ProcessId, RegisterValue};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trace parse error: {0}")]
    Parse(String),

    #[error("illegal read choice {choice} by {reader} on register {register}")]
    IllegalChoice {
        reader: ProcessId,
        register: ProcessId,
        choice: RegisterValue,
    },

    #[error("linearization order violation: {0}")]
    OrderViolation(String),

    #[error("adversary fault: {0}")]
    AdversaryFault(String),

    #[error("scenario broken: {0}")]
    ScenarioBroken(String),

    #[error("malformed view for {0}")]
    MalformedView(ProcessId),

    #[error("exploration bound too large: {0}")]
    BoundTooLarge(String),

    #[error("internal invariant broken: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
