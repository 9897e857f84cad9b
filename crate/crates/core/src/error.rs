use thiserror::Error;

use crate::action::Action;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("action {action:?} rejected: {reason}")]
    InvalidAction { action: Action, reason: &'static str },

    #[error("vehicle {0} does not exist")]
    UnknownVehicle(u32),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("cannot sample from an empty replay memory")]
    EmptyMemory,

    #[error("planner: {0}")]
    Planner(String),

    #[error("malformed grid dump: {0}")]
    GridParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
