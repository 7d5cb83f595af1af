use thiserror::Error;

/// Rejected configuration text or values.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid `{field}`: {message}")]
    Field { field: String, message: String },
}

impl ConfigError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Name of the offending field, if the error is semantic.
    pub fn field_name(&self) -> Option<&str> {
        match self {
            ConfigError::Field { field, .. } => Some(field),
            ConfigError::Syntax { .. } => None,
        }
    }
}

/// Failure of a simulation run.
///
/// Everything except [`SimError::Config`] and [`SimError::Deadlock`] signals a
/// simulator bug: the model reached a state its invariants forbid.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(
        "deadlock at cycle {cycle}: no cell moved for {idle} cycles with {in_flight} cells in flight; stalled at {component}"
    )]
    Deadlock {
        cycle: u64,
        idle: u64,
        in_flight: u64,
        component: String,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("routing error: {0}")]
    Routing(String),
    #[error("duplicate cell {seq} of message {msg_id} from core {src_core}")]
    DuplicateCell { src_core: u32, msg_id: u64, seq: u16 },
    #[error("credit accounting error: {0}")]
    Credit(String),
    #[error("timestamp error: {0}")]
    Timestamp(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}
