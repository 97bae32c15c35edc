//! The baseline VLIW: every functional unit advances in lock-step, one
//! bundle issues per cycle, and any data-memory stall freezes both the
//! scalar and the vector pipes. Also the flat-memory ideal machine.
//!
//! Timing: bundle `i` passes the commit point at the end of decode at
//! cycle `C_i`, with `C_0 = fetch + ds + dc`. Memory ops are charged there,
//! in program order (scalar op first), as a flat stall. The bundle then
//! spends `max(ex_scalar, ex_vector)` cycles in execute, so it retires at
//! `C_i + stall_i + ex` and `C_{i+1} = C_i + 1 + stall_i`.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::memsys::{AccessKind, Cache, CacheStats, MemConfig};
use crate::trace::{OpClass, Side, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub fetch_stages: u64,
    pub ds_stages: u64,
    pub dc_stages: u64,
    pub ex_scalar: u64,
    pub ex_vector: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fetch_stages: 3,
            ds_stages: 1,
            dc_stages: 1,
            ex_scalar: 1,
            ex_vector: 4,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let all = [
            self.fetch_stages,
            self.ds_stages,
            self.dc_stages,
            self.ex_scalar,
            self.ex_vector,
        ];
        if all.contains(&0) {
            return Err(SimError::Config("every pipeline stage count must be >= 1".into()));
        }
        if self.ex_vector < self.ex_scalar {
            return Err(SimError::Config(format!(
                "ex_vector ({}) must be >= ex_scalar ({})",
                self.ex_vector, self.ex_scalar
            )));
        }
        Ok(())
    }

    /// Cycle of the first commit: fetch, dispatch and decode.
    pub fn front_end(&self) -> u64 {
        self.fetch_stages + self.ds_stages + self.dc_stages
    }

    pub fn ex_depth(&self) -> u64 {
        self.ex_scalar.max(self.ex_vector)
    }

    /// Cycles a single unstalled bundle adds beyond its issue cycle.
    pub fn drain(&self) -> u64 {
        self.front_end() + self.ex_depth() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockstepResult {
    pub total_cycles: u64,
    /// One issue cycle per bundle.
    pub issue_cycles: u64,
    pub stall_cycles: u64,
    pub scalar_miss_stall: u64,
    pub vector_miss_stall: u64,
    /// Pipeline fill plus drain; zero for an empty trace.
    pub drain_cycles: u64,
    pub cache: Option<CacheStats>,
    /// Cycles attributed to each region (see `Trace::region_last_bundles`).
    pub region_cycles: Vec<u64>,
}

/// The ideal machine: no memory stalls at all.
pub fn simulate_flat(t: &Trace, p: &PipelineConfig) -> LockstepResult {
    run(t, p, |_, _| Ok(0)).expect("flat memory never fails")
}

/// The cached lock-step machine.
pub fn simulate_lockstep(
    t: &Trace,
    p: &PipelineConfig,
    m: &MemConfig,
) -> Result<LockstepResult, SimError> {
    p.validate()?;
    let mut cache = Cache::new(m.cache)?;
    let mut r = run(t, p, |class, mem| {
        let kind = if class.is_store() {
            AccessKind::Write
        } else {
            AccessKind::Read
        };
        let out = cache.access(
            mem.addr as u64,
            mem.size as u64,
            kind,
            &m.latency,
            &m.layout,
        )?;
        Ok(out.stall_cycles)
    })?;
    r.cache = Some(cache.stats());
    Ok(r)
}

fn run(
    t: &Trace,
    p: &PipelineConfig,
    mut access: impl FnMut(OpClass, crate::trace::MemRef) -> Result<u64, SimError>,
) -> Result<LockstepResult, SimError> {
    let mut res = LockstepResult {
        total_cycles: 0,
        issue_cycles: t.len() as u64,
        stall_cycles: 0,
        scalar_miss_stall: 0,
        vector_miss_stall: 0,
        drain_cycles: 0,
        cache: None,
        region_cycles: Vec::new(),
    };
    if t.is_empty() {
        return Ok(res);
    }
    let region_ends = t.region_last_bundles();
    let mut next_region = 0;
    let mut prev_boundary = 0;

    let mut commit = p.front_end();
    let mut retire = 0;
    for (i, b) in t.bundles.iter().enumerate() {
        let mut stall = 0;
        for (class, mem) in b.memory_ops() {
            let s = access(class, mem)?;
            match class.side() {
                Side::Scalar => res.scalar_miss_stall += s,
                Side::Vector => res.vector_miss_stall += s,
            }
            stall += s;
        }
        retire = commit + stall + p.ex_depth();
        if region_ends.get(next_region) == Some(&i) {
            res.region_cycles.push(retire - prev_boundary);
            prev_boundary = retire;
            next_region += 1;
        }
        commit += 1 + stall;
        res.stall_cycles += stall;
    }
    res.total_cycles = retire;
    res.drain_cycles = p.drain();
    debug_assert_eq!(
        res.total_cycles,
        res.issue_cycles + res.stall_cycles + res.drain_cycles
    );
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::parse_trace;

    fn trace(text: &str) -> Trace {
        parse_trace(text).unwrap()
    }

    #[test]
    fn empty_trace_takes_no_cycles() {
        let r = simulate_flat(&Trace::default(), &PipelineConfig::default());
        assert_eq!(r.total_cycles, 0);
    }

    #[test]
    fn flat_occupancy_table() {
        // One bundle: F1 F2 F3 DS DC EX1 EX2 EX3 EX4 occupy cycles 1..=9.
        let p = PipelineConfig::default();
        assert_eq!(simulate_flat(&trace("SALU"), &p).total_cycles, 9);
        // Ten bundles: the last enters F1 at cycle 10 and leaves EX4 at 18.
        assert_eq!(simulate_flat(&trace(&"SALU\n".repeat(10)), &p).total_cycles, 18);
    }

    #[test]
    fn flat_with_custom_pipeline() {
        let p = PipelineConfig {
            fetch_stages: 2,
            ds_stages: 2,
            dc_stages: 1,
            ex_scalar: 2,
            ex_vector: 6,
        };
        // N + 2 + 2 + 1 + 6 - 1
        assert_eq!(simulate_flat(&trace(&"VALU\n".repeat(7)), &p).total_cycles, 17);
    }

    #[test]
    fn no_memory_ops_matches_flat() {
        let t = trace("SALU;VALU\nSMUL\nSBRANCH;VALU;VALU\n");
        let p = PipelineConfig::default();
        let flat = simulate_flat(&t, &p);
        let ls = simulate_lockstep(&t, &p, &MemConfig::default()).unwrap();
        assert_eq!(ls.total_cycles, flat.total_cycles);
        assert_eq!(ls.stall_cycles, 0);
    }

    #[test]
    fn one_cold_load() {
        let p = PipelineConfig::default();
        let r = simulate_lockstep(&trace("SLOAD@0x0"), &p, &MemConfig::default()).unwrap();
        assert_eq!(r.total_cycles, 29);
        assert_eq!(r.scalar_miss_stall, 20);
    }

    #[test]
    fn second_load_hits() {
        let p = PipelineConfig::default();
        let r = simulate_lockstep(&trace("SLOAD@0x0\nSLOAD@0x0"), &p, &MemConfig::default())
            .unwrap();
        assert_eq!(r.total_cycles, 30);
        let c = r.cache.unwrap();
        assert_eq!((c.hits, c.misses), (1, 1));
    }

    #[test]
    fn scalar_and_vector_misses_in_one_bundle_add_up() {
        let p = PipelineConfig::default();
        let r = simulate_lockstep(
            &trace("SLOAD@0x0;VLOAD@0x4000000"),
            &p,
            &MemConfig::default(),
        )
        .unwrap();
        assert_eq!(r.total_cycles, 9 + 20 + 120);
        assert_eq!((r.scalar_miss_stall, r.vector_miss_stall), (20, 120));
    }

    #[test]
    fn region_cycles_sum_to_total() {
        let t = trace("# region 1\nSLOAD@0x0\nSALU\n# region 2\nVLOAD@0x4000000\nSALU\n");
        let r = simulate_lockstep(&t, &PipelineConfig::default(), &MemConfig::default()).unwrap();
        assert_eq!(r.region_cycles.len(), 2);
        assert_eq!(r.region_cycles.iter().sum::<u64>(), r.total_cycles);
        // region 1 ends when bundle 1 retires: C_1 = 5 + 1 + 20, +4
        assert_eq!(r.region_cycles[0], 30);
    }

    #[test]
    fn unmapped_address_is_an_error() {
        let r = simulate_lockstep(
            &trace("SLOAD@0x200000"),
            &PipelineConfig::default(),
            &MemConfig::default(),
        );
        assert!(matches!(r, Err(SimError::Mem(_))));
    }

    #[test]
    fn pipeline_validation() {
        let bad = PipelineConfig {
            ex_vector: 1,
            ex_scalar: 2,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            ds_stages: 0,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
