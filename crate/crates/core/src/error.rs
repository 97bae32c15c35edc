use thiserror::Error;

use crate::memsys::MemError;
use crate::trace::TraceError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mem(#[from] MemError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    /// The model reached a state its own bookkeeping rules out.
    #[error("internal consistency violation at cycle {cycle}: {msg}")]
    Internal { cycle: u64, msg: String },
    #[error("no forward progress for {idle} cycles (stuck at cycle {cycle})")]
    Deadlock { cycle: u64, idle: u64 },
    #[error("allocation error: {0}")]
    Allocation(String),
}
