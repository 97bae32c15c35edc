//! The split-pipeline machine: a scalar GPCU that fetches, decodes and
//! computes every address, and one or more vector CUs fed through bounded
//! instruction FIFOs and load/store address buffers. Vector loads are
//! issued by the GPCU at dispatch ("triangular" loads) and land in a
//! per-CU CAM, so the CU only waits for data that is still in flight when
//! its load reaches the head of the FIFO. CU traffic never touches the
//! GPCU's L1.
//!
//! Cycle rules, in the fixed unit order GPCU then CUs:
//!
//! * The GPCU front end matches the lock-step pipeline. A bundle commits at
//!   the end of decode; at that point its vector packet is pushed to every
//!   CU in the group, triangular loads are issued, and scalar memory ops
//!   access the L1. A scalar miss freezes the GPCU for the full penalty.
//! * A CU may issue the packet pushed in the same cycle. It issues at most
//!   one packet per cycle, in order. A packet with a VALU retires
//!   `ex_vector` cycles later; a load or store packet retires in one.
//!   Retirement is in order and the FIFO entry is freed the cycle after.
//! * Stall attribution for the GPCU follows a fixed priority: scalar miss,
//!   then FIFO, LAB, SAB, CAM, then memory-ordering hazard, then a busy
//!   port for the triangular load.

mod cam;
pub(crate) mod engine;
mod hazard;
mod queues;

pub use cam::{CamError, CamRecord, DataCam};
pub use hazard::{hazard_check, Hazard};
pub use queues::{AddrQueue, QueueStats, VectorFifo, VectorPacket};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::lockstep::PipelineConfig;
use crate::memsys::{CacheConfig, CacheStats, MemConfig, MemoryArbiter, PortStats};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlapConfig {
    pub fifo_depth: usize,
    /// Defaults to `fifo_depth`.
    pub lab_depth: Option<usize>,
    /// Defaults to `fifo_depth`.
    pub sab_depth: Option<usize>,
    pub cam_entries: usize,
    pub num_cus: usize,
    /// Byte offset between the addresses seen by consecutive CUs of a group.
    pub lane_stride: u32,
    pub pipeline: PipelineConfig,
    pub gpcu_cache: CacheConfig,
}

impl Default for SlapConfig {
    fn default() -> Self {
        SlapConfig {
            fifo_depth: 32,
            lab_depth: None,
            sab_depth: None,
            cam_entries: 16,
            num_cus: 1,
            lane_stride: 0,
            pipeline: PipelineConfig::default(),
            gpcu_cache: CacheConfig::default(),
        }
    }
}

impl SlapConfig {
    pub fn lab_depth(&self) -> usize {
        self.lab_depth.unwrap_or(self.fifo_depth)
    }

    pub fn sab_depth(&self) -> usize {
        self.sab_depth.unwrap_or(self.fifo_depth)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("slap.fifo_depth", self.fifo_depth),
            ("slap.lab_depth", self.lab_depth()),
            ("slap.sab_depth", self.sab_depth()),
            ("slap.cam_entries", self.cam_entries),
            ("slap.num_cus", self.num_cus),
        ] {
            if v == 0 {
                return Err(SimError::Config(format!("{name} must be at least 1")));
            }
        }
        self.pipeline.validate()?;
        self.gpcu_cache.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StallCause {
    GpcuScalarMiss,
    GpcuFifoFull,
    GpcuLabFull,
    GpcuSabFull,
    GpcuCamFull,
    GpcuHazard,
    CuFifoEmpty,
    CuCamWait,
    CuPortBusy,
}

impl StallCause {
    pub const ALL: [StallCause; 9] = [
        StallCause::GpcuScalarMiss,
        StallCause::GpcuFifoFull,
        StallCause::GpcuLabFull,
        StallCause::GpcuSabFull,
        StallCause::GpcuCamFull,
        StallCause::GpcuHazard,
        StallCause::CuFifoEmpty,
        StallCause::CuCamWait,
        StallCause::CuPortBusy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StallCause::GpcuScalarMiss => "GPCU_SCALAR_MISS",
            StallCause::GpcuFifoFull => "GPCU_FIFO_FULL",
            StallCause::GpcuLabFull => "GPCU_LAB_FULL",
            StallCause::GpcuSabFull => "GPCU_SAB_FULL",
            StallCause::GpcuCamFull => "GPCU_CAM_FULL",
            StallCause::GpcuHazard => "GPCU_HAZARD",
            StallCause::CuFifoEmpty => "CU_FIFO_EMPTY",
            StallCause::CuCamWait => "CU_CAM_WAIT",
            StallCause::CuPortBusy => "CU_PORT_BUSY",
        }
    }
}

impl fmt::Display for StallCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Stall cycles per cause for one unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StallCounts([u64; 9]);

impl StallCounts {
    pub fn add(&mut self, cause: StallCause) {
        self.0[cause as usize] += 1;
    }

    pub fn add_n(&mut self, cause: StallCause, n: u64) {
        self.0[cause as usize] += n;
    }

    pub fn get(&self, cause: StallCause) -> u64 {
        self.0[cause as usize]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Non-zero causes by name.
    pub fn to_map(&self) -> BTreeMap<String, u64> {
        StallCause::ALL
            .iter()
            .filter(|&&c| self.get(c) > 0)
            .map(|&c| (c.name().to_string(), self.get(c)))
            .collect()
    }
}

impl Serialize for StallCounts {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_map().serialize(s)
    }
}

impl<'de> Deserialize<'de> for StallCounts {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, u64>::deserialize(d)?;
        let mut out = StallCounts::default();
        for (k, v) in map {
            let cause = StallCause::ALL
                .iter()
                .find(|c| c.name() == k)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown stall cause {k}")))?;
            out.add_n(*cause, v);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpcuStats {
    pub committed_bundles: u64,
    pub stalls: StallCounts,
    /// Completion cycle of the last op this GPCU dispatched, on any unit.
    pub total_cycles: u64,
    /// Cycles spent waiting for the group to drain before a reallocation.
    pub barrier_cycles: u64,
    /// Cycles spent waiting for free CUs.
    pub cu_wait_cycles: u64,
    pub reconfigurations: u64,
    pub reconfig_penalty_cycles: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuStats {
    pub id: usize,
    pub issued_packets: u64,
    pub dispatched_ops: u64,
    pub retired_ops: u64,
    pub stalls: StallCounts,
    pub fifo: QueueStats,
    /// Cycles at each FIFO occupancy; index = occupancy.
    pub fifo_histogram: Vec<u64>,
    pub lab: QueueStats,
    pub sab: QueueStats,
    pub cam_high_water: u64,
    pub port: PortStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlapResult {
    pub total_cycles: u64,
    pub bundles: u64,
    pub gpcu: GpcuStats,
    pub cus: Vec<CuStats>,
    pub cache: CacheStats,
    pub region_cycles: Vec<u64>,
}

/// Runs one GPCU with `cfg.num_cus` CUs over `t`. The GPCU's L1 is
/// `cfg.gpcu_cache`; `m` supplies latencies, layout and port limits.
pub fn simulate_slap(t: &Trace, cfg: &SlapConfig, m: &MemConfig) -> Result<SlapResult, SimError> {
    cfg.validate()?;
    let groups = vec![(0..cfg.num_cus).collect()];
    let jobs = vec![vec![engine::EngineJob {
        trace: t,
        cus_needed: None,
    }]];
    let out = engine::Engine::new(cfg, m, groups, cfg.num_cus, jobs, MemoryArbiter::unlimited(), 0)?
        .run()?;
    let g = out.gpcus.into_iter().next().expect("one GPCU");
    Ok(SlapResult {
        total_cycles: out.total_cycles,
        bundles: t.len() as u64,
        gpcu: g.stats,
        cus: out.cus,
        cache: g.cache,
        region_cycles: g.region_cycles,
    })
}
