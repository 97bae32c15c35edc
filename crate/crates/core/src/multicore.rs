//! Several GPCUs sharing one pool of CUs. Each GPCU owns a disjoint group
//! of CUs and broadcasts its vector packets to all of them; every CU keeps
//! its own FIFO, address buffers, CAM and port. Groups change size only at
//! job boundaries, after the group has drained.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::memsys::{CacheStats, MemConfig, MemoryArbiter};
use crate::slap::engine::{Engine, EngineJob};
use crate::slap::{CuStats, GpcuStats, SlapConfig};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationMap {
    pool_size: usize,
    groups: Vec<BTreeSet<usize>>,
}

impl AllocationMap {
    pub fn new(pool_size: usize, groups: Vec<BTreeSet<usize>>) -> Result<Self, SimError> {
        let map = AllocationMap { pool_size, groups };
        map.validate()?;
        Ok(map)
    }

    /// Consecutive CU ids: `sizes = [3, 5]` gives {0,1,2} and {3..8}.
    pub fn contiguous(pool_size: usize, sizes: &[usize]) -> Result<Self, SimError> {
        let mut next = 0;
        let groups = sizes
            .iter()
            .map(|&n| {
                let g = (next..next + n).collect();
                next += n;
                g
            })
            .collect();
        Self::new(pool_size, groups)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut seen = BTreeSet::new();
        for (g, set) in self.groups.iter().enumerate() {
            for &c in set {
                if c >= self.pool_size {
                    return Err(SimError::Allocation(format!(
                        "GPCU {g} holds CU {c} outside a pool of {}",
                        self.pool_size
                    )));
                }
                if !seen.insert(c) {
                    return Err(SimError::Allocation(format!(
                        "CU {c} is assigned to more than one GPCU"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn groups(&self) -> &[BTreeSet<usize>] {
        &self.groups
    }

    pub fn free_cus(&self) -> Vec<usize> {
        (0..self.pool_size)
            .filter(|c| !self.groups.iter().any(|g| g.contains(c)))
            .collect()
    }

    /// Applies `event`. `quiescent` says whether the affected group has
    /// drained; `vector_job_pending` whether its next job has vector work.
    pub fn reallocate(
        &self,
        event: &ReconfigEvent,
        quiescent: bool,
        vector_job_pending: bool,
    ) -> Result<AllocationMap, SimError> {
        if event.gpcu >= self.groups.len() {
            return Err(SimError::Allocation(format!("no GPCU {}", event.gpcu)));
        }
        if !quiescent {
            return Err(SimError::Allocation(format!(
                "GPCU {} reallocated before its CUs drained",
                event.gpcu
            )));
        }
        if event.cus.is_empty() && vector_job_pending {
            return Err(SimError::Allocation(format!(
                "GPCU {} left with no CUs while a vector job is pending",
                event.gpcu
            )));
        }
        let mut next = self.clone();
        next.groups[event.gpcu] = event.cus.clone();
        next.validate()?;
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconfigEvent {
    pub gpcu: usize,
    pub cus: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
pub struct Job {
    pub trace: Trace,
    /// Data sets this job processes; `None` keeps the GPCU's current group.
    pub datasets: Option<usize>,
}

impl Job {
    pub fn cus_needed(&self, simd_per_cu: usize) -> Option<usize> {
        self.datasets.map(|d| d.div_ceil(simd_per_cu))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub num_gpcus: usize,
    pub num_cus: usize,
    pub simd_per_cu: usize,
    /// Port grants into shared memory per cycle; `None` is uncapped.
    pub mem_grants_per_cycle: Option<u32>,
    pub reconfig_penalty: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            num_gpcus: 2,
            num_cus: 8,
            simd_per_cu: 4,
            mem_grants_per_cycle: None,
            reconfig_penalty: 16,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.num_gpcus == 0 || self.num_cus == 0 || self.simd_per_cu == 0 {
            return Err(SimError::Config(
                "pool.num_gpcus, pool.num_cus and pool.simd_per_cu must be at least 1".into(),
            ));
        }
        if self.mem_grants_per_cycle == Some(0) {
            return Err(SimError::Config("pool.mem_grants_per_cycle must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolGpcuResult {
    pub gpcu: usize,
    pub total_cycles: u64,
    pub stats: GpcuStats,
    pub cache: CacheStats,
    pub region_cycles: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolResult {
    pub total_cycles: u64,
    pub gpcus: Vec<PoolGpcuResult>,
    pub cus: Vec<CuStats>,
    pub final_allocation: AllocationMap,
    pub grants: u64,
    pub deferred_grants: u64,
}

/// Runs every GPCU's job queue over the shared pool. `slap` supplies the
/// per-unit parameters (its `num_cus` is ignored in favor of `alloc`).
pub fn simulate_pool(
    jobs: &[Vec<Job>],
    alloc: &AllocationMap,
    cfg: &PoolConfig,
    slap: &SlapConfig,
    mem: &MemConfig,
) -> Result<PoolResult, SimError> {
    cfg.validate()?;
    alloc.validate()?;
    if alloc.pool_size() != cfg.num_cus {
        return Err(SimError::Config(format!(
            "allocation covers {} CUs but the pool has {}",
            alloc.pool_size(),
            cfg.num_cus
        )));
    }
    if jobs.len() != alloc.groups().len() {
        return Err(SimError::Config(format!(
            "{} job queues for {} GPCUs",
            jobs.len(),
            alloc.groups().len()
        )));
    }
    let mut engine_jobs = Vec::with_capacity(jobs.len());
    for (g, queue) in jobs.iter().enumerate() {
        let mut list = Vec::with_capacity(queue.len());
        for j in queue {
            let need = j.cus_needed(cfg.simd_per_cu);
            if let Some(n) = need {
                if n > cfg.num_cus {
                    return Err(SimError::Allocation(format!(
                        "GPCU {g} job needs {n} CUs but the pool has {}",
                        cfg.num_cus
                    )));
                }
            }
            list.push(EngineJob {
                trace: &j.trace,
                cus_needed: need,
            });
        }
        engine_jobs.push(list);
    }
    let groups = alloc
        .groups()
        .iter()
        .map(|s| s.iter().copied().collect())
        .collect();
    let out = Engine::new(
        slap,
        mem,
        groups,
        cfg.num_cus,
        engine_jobs,
        MemoryArbiter::new(cfg.mem_grants_per_cycle),
        cfg.reconfig_penalty,
    )?
    .run()?;
    let gpcus = out
        .gpcus
        .into_iter()
        .enumerate()
        .map(|(gpcu, g)| PoolGpcuResult {
            gpcu,
            total_cycles: g.stats.total_cycles,
            stats: g.stats,
            cache: g.cache,
            region_cycles: g.region_cycles,
        })
        .collect();
    Ok(PoolResult {
        total_cycles: out.total_cycles,
        gpcus,
        cus: out.cus,
        final_allocation: out.final_allocation,
        grants: out.grants,
        deferred_grants: out.deferred_grants,
    })
}
