pub mod error;
pub mod kv;
pub mod lockstep;
pub mod memsys;
pub mod metrics;
pub mod multicore;
pub mod slap;
pub mod trace;
pub mod tracegen;

pub use error::SimError;
pub use lockstep::{simulate_flat, simulate_lockstep, LockstepResult, PipelineConfig};
pub use memsys::{CacheConfig, LatencyConfig, MemConfig};
pub use multicore::{simulate_pool, AllocationMap, Job, PoolConfig, PoolResult, ReconfigEvent};
pub use slap::{simulate_slap, SlapConfig, SlapResult, StallCause};
pub use trace::{parse_trace, serialize_trace, Bundle, Trace};
pub use metrics::{ComparisonReport, CostConfig, Machine, Metrics};
