//! Cycle loop shared by the single-group machine and the CU pool.

use std::collections::BTreeSet;

use super::{
    hazard_check, AddrQueue, CuStats, DataCam, GpcuStats, Hazard, SlapConfig, StallCause,
    VectorFifo, VectorPacket,
};
use crate::error::SimError;
use crate::memsys::{AccessKind, Cache, CacheStats, CuPort, MemConfig, MemoryArbiter};
use crate::multicore::{AllocationMap, ReconfigEvent};
use crate::trace::{MemRef, OpClass, Trace};

/// Cycles without any commit, issue or grant before the run is declared
/// deadlocked.
const WATCHDOG_CYCLES: u64 = 1_000_000;

pub(crate) struct EngineJob<'a> {
    pub trace: &'a Trace,
    /// CUs this job wants; `None` keeps whatever the GPCU holds.
    pub cus_needed: Option<usize>,
}

pub(crate) struct GpcuOutput {
    pub stats: GpcuStats,
    pub cache: CacheStats,
    pub region_cycles: Vec<u64>,
}

pub(crate) struct EngineOutput {
    pub total_cycles: u64,
    pub gpcus: Vec<GpcuOutput>,
    pub cus: Vec<CuStats>,
    pub final_allocation: AllocationMap,
    pub grants: u64,
    pub deferred_grants: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Executing the current job.
    Run,
    /// Waiting for the group to go quiescent; `last` means no job follows.
    Drain { last: bool },
    /// Quiescent, waiting for enough free CUs.
    WaitCus,
    Finished,
}

struct Gpcu<'a> {
    jobs: Vec<EngineJob<'a>>,
    job: usize,
    next: usize,
    /// Position of the current job's first bundle in this GPCU's stream.
    base: usize,
    cache: Cache,
    miss_remaining: u64,
    commit_from: u64,
    phase: Phase,
    stats: GpcuStats,
    region_ends: Vec<usize>,
    region_done: Vec<u64>,
}

impl Gpcu<'_> {
    fn note_completion(&mut self, bundle: usize, cycle: u64) {
        self.stats.total_cycles = self.stats.total_cycles.max(cycle);
        let k = self.region_ends.partition_point(|&end| end < bundle);
        if let Some(slot) = self.region_done.get_mut(k) {
            *slot = (*slot).max(cycle);
        }
    }

    fn region_cycles(&self) -> Vec<u64> {
        let mut prev = 0;
        self.region_done
            .iter()
            .map(|&done| {
                let end = done.max(prev);
                let c = end - prev;
                prev = end;
                c
            })
            .collect()
    }

    fn current_len(&self) -> usize {
        self.jobs.get(self.job).map_or(0, |j| j.trace.len())
    }
}

struct Cu {
    fifo: VectorFifo,
    lab: AddrQueue,
    sab: AddrQueue,
    cam: DataCam,
    last_retire: u64,
    stats: CuStats,
}

impl Cu {
    fn quiescent(&self, port: &CuPort) -> bool {
        self.fifo.is_empty()
            && self.lab.is_empty()
            && self.sab.is_empty()
            && self.cam.is_empty()
            && port.is_idle()
    }
}

pub(crate) struct Engine<'a> {
    cfg: SlapConfig,
    mem: MemConfig,
    gpcus: Vec<Gpcu<'a>>,
    cus: Vec<Cu>,
    ports: Vec<CuPort>,
    owner: Vec<Option<usize>>,
    alloc: AllocationMap,
    arbiter: MemoryArbiter,
    reconfig_penalty: u64,
    last_progress: u64,
}

impl<'a> Engine<'a> {
    pub fn new(
        cfg: &SlapConfig,
        mem: &MemConfig,
        groups: Vec<Vec<usize>>,
        pool_size: usize,
        jobs: Vec<Vec<EngineJob<'a>>>,
        arbiter: MemoryArbiter,
        reconfig_penalty: u64,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        if groups.len() != jobs.len() {
            return Err(SimError::Config(format!(
                "{} CU groups for {} GPCUs",
                groups.len(),
                jobs.len()
            )));
        }
        let alloc = AllocationMap::new(
            pool_size,
            groups.into_iter().map(|g| g.into_iter().collect()).collect(),
        )?;
        let mut owner = vec![None; pool_size];
        for (gi, set) in alloc.groups().iter().enumerate() {
            for &c in set {
                owner[c] = Some(gi);
            }
        }
        let cus = (0..pool_size)
            .map(|id| Cu {
                fifo: VectorFifo::new(cfg.fifo_depth),
                lab: AddrQueue::new(cfg.lab_depth()),
                sab: AddrQueue::new(cfg.sab_depth()),
                cam: DataCam::new(cfg.cam_entries),
                last_retire: 0,
                stats: CuStats {
                    id,
                    ..CuStats::default()
                },
            })
            .collect();
        let ports = (0..pool_size)
            .map(|_| CuPort::new(mem.port_max_outstanding))
            .collect();

        let mut gpcus = Vec::with_capacity(jobs.len());
        for job_list in jobs {
            let mut region_ends = Vec::new();
            let mut base = 0;
            for j in &job_list {
                j.trace.validate()?;
                for (class, m) in j.trace.memory_refs() {
                    if class.side() == crate::trace::Side::Scalar {
                        mem.layout.tier_of(m.addr as u64, m.size as u64)?;
                    }
                }
                region_ends.extend(j.trace.region_last_bundles().iter().map(|e| e + base));
                base += j.trace.len();
            }
            let n_regions = region_ends.len();
            gpcus.push(Gpcu {
                jobs: job_list,
                job: 0,
                next: 0,
                base: 0,
                cache: Cache::new(cfg.gpcu_cache)?,
                miss_remaining: 0,
                commit_from: cfg.pipeline.front_end(),
                phase: Phase::Run,
                stats: GpcuStats::default(),
                region_ends,
                region_done: vec![0; n_regions],
            });
        }

        let mut engine = Engine {
            cfg: *cfg,
            mem: mem.clone(),
            gpcus,
            cus,
            ports,
            owner,
            alloc,
            arbiter,
            reconfig_penalty,
            last_progress: 0,
        };
        // the first job of each GPCU may already demand a different group
        for gi in 0..engine.gpcus.len() {
            if !engine.enter_job(gi, 0)? {
                engine.gpcus[gi].phase = Phase::WaitCus;
            }
        }
        Ok(engine)
    }

    pub fn run(mut self) -> Result<EngineOutput, SimError> {
        let mut t = 0;
        loop {
            t += 1;
            for cu in &mut self.cus {
                cu.fifo.release_retired(t);
            }
            for p in &mut self.ports {
                p.retire_completed(t);
            }
            for (idx, req) in self.arbiter.begin_cycle(t, &mut self.ports) {
                self.last_progress = t;
                if !req.write {
                    self.cus[idx]
                        .cam
                        .set_complete(req.mem.addr, req.complete.expect("granted"));
                }
            }
            for gi in 0..self.gpcus.len() {
                self.gpcu_step(gi, t)?;
            }
            for c in 0..self.cus.len() {
                self.cu_step(c, t)?;
            }
            for cu in &mut self.cus {
                debug_assert!(cu.fifo.len() <= cu.fifo.depth());
                cu.fifo.record_occupancy(1);
            }
            if self.gpcus.iter().all(|g| g.phase == Phase::Finished) {
                break;
            }
            if t - self.last_progress > WATCHDOG_CYCLES {
                return Err(SimError::Deadlock {
                    cycle: t,
                    idle: WATCHDOG_CYCLES,
                });
            }
        }
        self.finish(t)
    }

    fn finish(self, loop_end: u64) -> Result<EngineOutput, SimError> {
        let total = self
            .gpcus
            .iter()
            .map(|g| g.stats.total_cycles)
            .max()
            .unwrap_or(0);
        let mut cus = Vec::with_capacity(self.cus.len());
        for (c, cu) in self.cus.into_iter().enumerate() {
            if !cu.quiescent(&self.ports[c]) {
                return Err(SimError::Internal {
                    cycle: loop_end,
                    msg: format!("CU {c} did not drain"),
                });
            }
            if cu.stats.dispatched_ops != cu.stats.retired_ops {
                return Err(SimError::Internal {
                    cycle: loop_end,
                    msg: format!(
                        "CU {c} retired {} of {} dispatched ops",
                        cu.stats.retired_ops, cu.stats.dispatched_ops
                    ),
                });
            }
            let mut stats = cu.stats;
            stats.fifo = cu.fifo.stats();
            stats.lab = cu.lab.stats();
            stats.sab = cu.sab.stats();
            stats.cam_high_water = cu.cam.high_water();
            stats.port = self.ports[c].stats();
            // occupancy is zero after the last retirement; trim or pad the
            // histogram's zero bin so its mass equals the run length
            let mut hist = cu.fifo.histogram().to_vec();
            if loop_end > total {
                hist[0] -= loop_end - total;
            } else {
                hist[0] += total - loop_end;
            }
            stats.fifo_histogram = hist;
            let busy = stats.issued_packets
                + stats.stalls.get(StallCause::CuCamWait)
                + stats.stalls.get(StallCause::CuPortBusy);
            stats.stalls.add_n(StallCause::CuFifoEmpty, total - busy);
            cus.push(stats);
        }
        let gpcus = self
            .gpcus
            .iter()
            .map(|g| GpcuOutput {
                stats: g.stats.clone(),
                cache: g.cache.stats(),
                region_cycles: g.region_cycles(),
            })
            .collect();
        Ok(EngineOutput {
            total_cycles: total,
            gpcus,
            cus,
            final_allocation: self.alloc,
            grants: self.arbiter.grants(),
            deferred_grants: self.arbiter.deferred(),
        })
    }

    fn group_quiescent(&self, gi: usize) -> bool {
        self.alloc.groups()[gi]
            .iter()
            .all(|&c| self.cus[c].quiescent(&self.ports[c]))
    }

    /// Moves GPCU `gi` onto job `job`, reallocating its CUs if the job asks
    /// for a different count. Requires the group to be quiescent when a
    /// reallocation is needed; returns false if it must wait.
    fn enter_job(&mut self, gi: usize, now: u64) -> Result<bool, SimError> {
        let g = &self.gpcus[gi];
        let Some(job) = g.jobs.get(g.job) else {
            return Ok(true);
        };
        let have = self.alloc.groups()[gi].len();
        let need = job.cus_needed.unwrap_or(have);
        let has_vector = job.trace.bundles.iter().any(|b| b.has_vector_work());
        if need == have {
            if has_vector && have == 0 {
                return Err(SimError::Allocation(format!(
                    "GPCU {gi} has a vector job but no CUs"
                )));
            }
            return Ok(true);
        }
        let mut set: BTreeSet<usize> = self.alloc.groups()[gi].clone();
        if need < have {
            while set.len() > need {
                let last = *set.iter().next_back().unwrap();
                set.remove(&last);
            }
        } else {
            let free = self.alloc.free_cus();
            if free.len() < need - have {
                return Ok(false);
            }
            set.extend(free.into_iter().take(need - have));
        }
        let event = ReconfigEvent { gpcu: gi, cus: set };
        let quiescent = self.group_quiescent(gi);
        self.alloc = self.alloc.reallocate(&event, quiescent, has_vector)?;
        for o in self.owner.iter_mut().filter(|o| **o == Some(gi)) {
            *o = None;
        }
        for &c in &event.cus {
            self.owner[c] = Some(gi);
        }
        let g = &mut self.gpcus[gi];
        g.stats.reconfigurations += 1;
        g.stats.reconfig_penalty_cycles += self.reconfig_penalty;
        g.commit_from = g.commit_from.max(now + 1 + self.reconfig_penalty);
        self.last_progress = now;
        Ok(true)
    }

    fn gpcu_step(&mut self, gi: usize, t: u64) -> Result<(), SimError> {
        match self.gpcus[gi].phase {
            Phase::Finished => return Ok(()),
            Phase::Drain { last } => {
                if !self.group_quiescent(gi) {
                    if !last {
                        self.gpcus[gi].stats.barrier_cycles += 1;
                    }
                    return Ok(());
                }
                if last {
                    let event = ReconfigEvent {
                        gpcu: gi,
                        cus: BTreeSet::new(),
                    };
                    self.alloc = self.alloc.reallocate(&event, true, false)?;
                    for o in self.owner.iter_mut().filter(|o| **o == Some(gi)) {
                        *o = None;
                    }
                    self.gpcus[gi].phase = Phase::Finished;
                    self.last_progress = t;
                    return Ok(());
                }
                self.gpcus[gi].phase = Phase::WaitCus;
            }
            Phase::WaitCus | Phase::Run => {}
        }
        if self.gpcus[gi].phase == Phase::WaitCus {
            if self.enter_job(gi, t)? {
                self.gpcus[gi].phase = Phase::Run;
            } else {
                self.gpcus[gi].stats.cu_wait_cycles += 1;
            }
            return Ok(());
        }

        // Run
        if self.gpcus[gi].miss_remaining > 0 {
            let g = &mut self.gpcus[gi];
            g.miss_remaining -= 1;
            g.stats.stalls.add(StallCause::GpcuScalarMiss);
            return Ok(());
        }
        while self.gpcus[gi].next >= self.gpcus[gi].current_len() {
            let g = &mut self.gpcus[gi];
            if g.job >= g.jobs.len() {
                g.phase = Phase::Drain { last: true };
                return Ok(());
            }
            g.base += g.current_len();
            g.job += 1;
            g.next = 0;
            if g.job >= g.jobs.len() {
                g.phase = Phase::Drain { last: true };
                return Ok(());
            }
            let have = self.alloc.groups()[gi].len();
            if g.jobs[g.job].cus_needed.is_some_and(|n| n != have) {
                g.phase = Phase::Drain { last: false };
                return Ok(());
            }
        }
        if t < self.gpcus[gi].commit_from {
            return Ok(());
        }
        self.try_commit(gi, t)
    }

    fn lane_ref(&self, lane: usize, m: MemRef) -> Result<MemRef, SimError> {
        let addr = m.addr as u64 + lane as u64 * self.cfg.lane_stride as u64;
        let addr = u32::try_from(addr).map_err(|_| {
            SimError::Config(format!("lane {lane} address {addr:#x} exceeds 32 bits"))
        })?;
        Ok(MemRef { addr, size: m.size })
    }

    fn blocking_cause(
        &self,
        gi: usize,
        t: u64,
        lane_refs: &[MemRef],
        vmem: Option<OpClass>,
        has_vector: bool,
        scalar: Option<MemRef>,
    ) -> Option<StallCause> {
        let group = &self.alloc.groups()[gi];
        let any = |f: &dyn Fn(usize) -> bool| group.iter().any(|&c| f(c));
        let is_load = vmem == Some(OpClass::Vload);
        let is_store = vmem == Some(OpClass::Vstore);
        if has_vector {
            if any(&|c| self.cus[c].fifo.is_full()) {
                return Some(StallCause::GpcuFifoFull);
            }
            if is_load && any(&|c| self.cus[c].lab.is_full()) {
                return Some(StallCause::GpcuLabFull);
            }
            if is_store && any(&|c| self.cus[c].sab.is_full()) {
                return Some(StallCause::GpcuSabFull);
            }
            if is_load
                && group
                    .iter()
                    .zip(lane_refs)
                    .any(|(&c, m)| self.cus[c].cam.can_insert(m.addr).is_err())
            {
                return Some(StallCause::GpcuCamFull);
            }
        }
        let pending = |c: usize| {
            self.cus[c]
                .sab
                .iter()
                .chain(self.ports[c].pending_writes())
        };
        if let Some(s) = scalar {
            if any(&|c| hazard_check(s, pending(c)) == Hazard::Blocked) {
                return Some(StallCause::GpcuHazard);
            }
        }
        if is_load
            && group
                .iter()
                .zip(lane_refs)
                .any(|(&c, &m)| hazard_check(m, pending(c)) == Hazard::Blocked)
        {
            return Some(StallCause::GpcuHazard);
        }
        if is_load && any(&|c| !self.ports[c].can_accept(t)) {
            return Some(StallCause::CuPortBusy);
        }
        None
    }

    fn try_commit(&mut self, gi: usize, t: u64) -> Result<(), SimError> {
        let g = &self.gpcus[gi];
        let trace = g.jobs[g.job].trace;
        let bundle = &trace.bundles[g.next];
        let stream_pos = g.base + g.next;
        let vmem = bundle.vector_mem();
        let has_vector = bundle.has_vector_work();
        let scalar = bundle.scalar_mem();
        let group: Vec<usize> = self.alloc.groups()[gi].iter().copied().collect();
        if has_vector && group.is_empty() {
            return Err(SimError::Allocation(format!(
                "GPCU {gi} dispatched vector work with no CUs"
            )));
        }
        let lane_refs = match vmem {
            Some((_, m)) => (0..group.len())
                .map(|lane| self.lane_ref(lane, m))
                .collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        if let Some(cause) = self.blocking_cause(
            gi,
            t,
            &lane_refs,
            vmem.map(|(c, _)| c),
            has_vector,
            scalar.map(|(_, m)| m),
        ) {
            self.gpcus[gi].stats.stalls.add(cause);
            return Ok(());
        }

        // dispatch
        if has_vector {
            let ops = bundle.vector_ops.len() as u32;
            let has_valu = bundle.vector_ops.iter().any(|op| op.class == OpClass::Valu);
            for (lane, &c) in group.iter().enumerate() {
                let mem = vmem.map(|(class, _)| (class, lane_refs[lane]));
                match mem {
                    Some((OpClass::Vload, m)) => {
                        let tier = self.mem.layout.tier_of(m.addr as u64, m.size as u64)?;
                        let lat = self.mem.latency.port_latency(tier);
                        let port = &mut self.ports[c];
                        let accepted = port.accept(m, false, lat, t);
                        debug_assert!(accepted);
                        let complete = self.arbiter.grant_new(t, port).and_then(|r| r.complete);
                        let cu = &mut self.cus[c];
                        cu.cam.insert(m, complete).map_err(|e| SimError::Internal {
                            cycle: t,
                            msg: format!("CAM insert after check: {e}"),
                        })?;
                        cu.lab.push(m);
                    }
                    Some((OpClass::Vstore, m)) => {
                        self.mem.layout.tier_of(m.addr as u64, m.size as u64)?;
                        self.cus[c].sab.push(m);
                    }
                    _ => {}
                }
                let cu = &mut self.cus[c];
                cu.fifo.push(VectorPacket {
                    bundle: stream_pos,
                    ops,
                    has_valu,
                    mem,
                });
                cu.stats.dispatched_ops += ops as u64;
            }
        }

        let mut stall = 0;
        if let Some((class, m)) = scalar {
            let kind = if class.is_store() {
                AccessKind::Write
            } else {
                AccessKind::Read
            };
            let g = &mut self.gpcus[gi];
            stall = g
                .cache
                .access(
                    m.addr as u64,
                    m.size as u64,
                    kind,
                    &self.mem.latency,
                    &self.mem.layout,
                )?
                .stall_cycles;
        }
        let ex = self.cfg.pipeline.ex_depth();
        let g = &mut self.gpcus[gi];
        g.miss_remaining = stall;
        g.stats.committed_bundles += 1;
        g.note_completion(stream_pos, t + stall + ex);
        g.next += 1;
        self.last_progress = t;
        Ok(())
    }

    fn cu_step(&mut self, c: usize, t: u64) -> Result<(), SimError> {
        let Some(gi) = self.owner[c] else {
            return Ok(());
        };
        let internal = |msg: String| SimError::Internal { cycle: t, msg };
        let cu = &mut self.cus[c];
        let Some(p) = cu.fifo.next_pending().copied() else {
            return Ok(());
        };
        match p.mem {
            Some((OpClass::Vload, m)) => {
                let addr = cu
                    .lab
                    .front()
                    .ok_or_else(|| internal(format!("CU {c}: load at FIFO head with empty LAB")))?;
                if addr != m {
                    return Err(internal(format!(
                        "CU {c}: LAB head {:#x} does not match load {:#x}",
                        addr.addr, m.addr
                    )));
                }
                let rec = cu
                    .cam
                    .lookup(addr.addr)
                    .ok_or_else(|| internal(format!("CU {c}: no CAM record for {:#x}", addr.addr)))?;
                if !rec.is_ready(t) {
                    cu.stats.stalls.add(StallCause::CuCamWait);
                    return Ok(());
                }
                cu.lab.pop();
                cu.cam.take(addr.addr);
            }
            Some((OpClass::Vstore, m)) => {
                let addr = cu
                    .sab
                    .front()
                    .ok_or_else(|| internal(format!("CU {c}: store at FIFO head with empty SAB")))?;
                if addr != m {
                    return Err(internal(format!(
                        "CU {c}: SAB head {:#x} does not match store {:#x}",
                        addr.addr, m.addr
                    )));
                }
                let port = &mut self.ports[c];
                if !port.can_accept(t) {
                    cu.stats.stalls.add(StallCause::CuPortBusy);
                    return Ok(());
                }
                let tier = self.mem.layout.tier_of(addr.addr as u64, addr.size as u64)?;
                port.accept(addr, true, self.mem.latency.port_latency(tier), t);
                self.arbiter.grant_new(t, port);
                cu.sab.pop();
            }
            _ => {}
        }
        let lat = if p.has_valu {
            self.cfg.pipeline.ex_vector
        } else {
            1
        };
        let retire = (t + lat - 1).max(cu.last_retire);
        cu.fifo.mark_issued(retire);
        cu.last_retire = retire;
        cu.stats.issued_packets += 1;
        cu.stats.retired_ops += p.ops as u64;
        self.gpcus[gi].note_completion(p.bundle, retire);
        self.last_progress = t;
        Ok(())
    }
}
