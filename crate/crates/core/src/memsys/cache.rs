use serde::{Deserialize, Serialize};

use super::{AddressLayout, CacheConfig, LatencyConfig, MemError, Prefetch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessOutcome {
    pub hit: bool,
    pub stall_cycles: u64,
}

/// Counters are per cache line touched. An aligned access never spans
/// lines as long as the line is at least as wide as the access.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub writebacks: u64,
    pub prefetches: u64,
    pub prefetch_hits: u64,
    pub flushed: u64,
}

impl CacheStats {
    pub fn accesses(&self) -> u64 {
        self.hits + self.misses
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Way {
    tag: u64,
    valid: bool,
    dirty: bool,
    lru: u64,
    prefetched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cache {
    cfg: CacheConfig,
    ways: Vec<Way>,
    num_sets: u64,
    stamp: u64,
    stats: CacheStats,
}

impl Cache {
    pub fn new(cfg: CacheConfig) -> Result<Self, MemError> {
        cfg.validate()?;
        let num_sets = cfg.num_sets();
        Ok(Cache {
            cfg,
            ways: vec![Way::default(); (num_sets * cfg.ways) as usize],
            num_sets,
            stamp: 0,
            stats: CacheStats::default(),
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    /// Demand access. Misses charge the backing tier's latency as a flat
    /// stall; hits charge `l1_hit`.
    pub fn access(
        &mut self,
        addr: u64,
        size: u64,
        kind: AccessKind,
        lat: &LatencyConfig,
        layout: &AddressLayout,
    ) -> Result<AccessOutcome, MemError> {
        let tier = layout.tier_of(addr, size)?;
        let first = addr / self.cfg.line_bytes;
        let last = (addr + size.max(1) - 1) / self.cfg.line_bytes;
        let mut out = AccessOutcome {
            hit: true,
            stall_cycles: 0,
        };
        for line in first..=last {
            if self.touch_line(line, kind) {
                out.stall_cycles += lat.l1_hit;
            } else {
                out.hit = false;
                out.stall_cycles += lat.miss_latency(tier);
                if self.cfg.prefetch == Prefetch::NextLine {
                    self.prefetch_line(line + 1);
                }
            }
        }
        Ok(out)
    }

    /// Whether the line holding `addr` is resident. Does not update LRU.
    pub fn contains(&self, addr: u64) -> bool {
        let line = addr / self.cfg.line_bytes;
        let (set, tag) = self.locate(line);
        self.set(set).iter().any(|w| w.valid && w.tag == tag)
    }

    /// Writes back every dirty line. Returns the number written back.
    pub fn flush(&mut self) -> u64 {
        let mut n = 0;
        for w in self.ways.iter_mut().filter(|w| w.valid && w.dirty) {
            w.dirty = false;
            n += 1;
        }
        self.stats.writebacks += n;
        self.stats.flushed += n;
        n
    }

    fn locate(&self, line: u64) -> (usize, u64) {
        ((line % self.num_sets) as usize, line / self.num_sets)
    }

    fn set(&self, set: usize) -> &[Way] {
        let w = self.cfg.ways as usize;
        &self.ways[set * w..(set + 1) * w]
    }

    fn set_mut(&mut self, set: usize) -> &mut [Way] {
        let w = self.cfg.ways as usize;
        &mut self.ways[set * w..(set + 1) * w]
    }

    fn next_stamp(&mut self) -> u64 {
        self.stamp += 1;
        self.stamp
    }

    /// Returns true on hit. On miss the line is allocated.
    fn touch_line(&mut self, line: u64, kind: AccessKind) -> bool {
        let (set, tag) = self.locate(line);
        let stamp = self.next_stamp();
        let write = kind == AccessKind::Write;
        if let Some(w) = self
            .set_mut(set)
            .iter_mut()
            .find(|w| w.valid && w.tag == tag)
        {
            w.lru = stamp;
            w.dirty |= write;
            let was_prefetched = std::mem::take(&mut w.prefetched);
            self.stats.hits += 1;
            self.stats.prefetch_hits += was_prefetched as u64;
            return true;
        }
        self.stats.misses += 1;
        self.fill(set, tag, stamp, write, false);
        false
    }

    fn prefetch_line(&mut self, line: u64) {
        let (set, tag) = self.locate(line);
        if self.set(set).iter().any(|w| w.valid && w.tag == tag) {
            return;
        }
        let stamp = self.next_stamp();
        self.stats.prefetches += 1;
        self.fill(set, tag, stamp, false, true);
    }

    fn fill(&mut self, set: usize, tag: u64, stamp: u64, dirty: bool, prefetched: bool) {
        let victim = {
            let ways = self.set(set);
            ways.iter()
                .position(|w| !w.valid)
                .unwrap_or_else(|| {
                    ways.iter()
                        .enumerate()
                        .min_by_key(|(_, w)| w.lru)
                        .map(|(i, _)| i)
                        .expect("cache set has at least one way")
                })
        };
        let old = self.set(set)[victim];
        if old.valid {
            self.stats.evictions += 1;
            self.stats.writebacks += old.dirty as u64;
        }
        self.set_mut(set)[victim] = Way {
            tag,
            valid: true,
            dirty,
            lru: stamp,
            prefetched,
        };
    }

    #[cfg(test)]
    pub(crate) fn check_invariants(&self) {
        for set in 0..self.num_sets as usize {
            let ways = self.set(set);
            for (i, a) in ways.iter().enumerate() {
                for b in &ways[i + 1..] {
                    if a.valid && b.valid {
                        assert_ne!(a.tag, b.tag, "duplicate tag in set {set}");
                        assert_ne!(a.lru, b.lru, "duplicate LRU stamp in set {set}");
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memsys::MIB;
    use proptest::prelude::*;

    fn env() -> (LatencyConfig, AddressLayout) {
        (LatencyConfig::default(), AddressLayout::default())
    }

    fn read(c: &mut Cache, addr: u64) -> AccessOutcome {
        let (lat, layout) = env();
        c.access(addr, 4, AccessKind::Read, &lat, &layout).unwrap()
    }

    fn write(c: &mut Cache, addr: u64) -> AccessOutcome {
        let (lat, layout) = env();
        c.access(addr, 4, AccessKind::Write, &lat, &layout).unwrap()
    }

    #[test]
    fn cold_miss_then_hit() {
        let mut c = Cache::new(CacheConfig::default()).unwrap();
        assert_eq!(
            read(&mut c, 0),
            AccessOutcome {
                hit: false,
                stall_cycles: 20
            }
        );
        assert_eq!(
            read(&mut c, 0),
            AccessOutcome {
                hit: true,
                stall_cycles: 0
            }
        );
    }

    #[test]
    fn dram_miss_costs_dram_latency() {
        let mut c = Cache::new(CacheConfig::default()).unwrap();
        assert_eq!(read(&mut c, 64 * MIB).stall_cycles, 120);
    }

    #[test]
    fn lru_evicts_oldest_in_two_way_set() {
        // 2 ways x 2 sets x 64 B: lines 0, 2, 4 (addresses 0, 128, 256) share set 0.
        //   A miss -> [A]      B miss -> [A B]
        //   C miss -> evict A (oldest) -> [C B]
        //   A miss -> evict B -> [C A]
        let cfg = CacheConfig {
            size_bytes: 256,
            line_bytes: 64,
            ways: 2,
            prefetch: Prefetch::None,
        };
        let mut c = Cache::new(cfg).unwrap();
        let (a, b, cc) = (0, 128, 256);
        assert!(!read(&mut c, a).hit);
        assert!(!read(&mut c, b).hit);
        assert!(!read(&mut c, cc).hit);
        assert!(!read(&mut c, a).hit);
        assert!(c.contains(cc) && c.contains(a) && !c.contains(b));
        assert_eq!(c.stats().evictions, 2);
    }

    #[test]
    fn lru_updated_on_hit() {
        let cfg = CacheConfig {
            size_bytes: 256,
            line_bytes: 64,
            ways: 2,
            prefetch: Prefetch::None,
        };
        let mut c = Cache::new(cfg).unwrap();
        read(&mut c, 0);
        read(&mut c, 128);
        read(&mut c, 0); // 0 becomes MRU
        read(&mut c, 256); // evicts 128
        assert!(c.contains(0) && !c.contains(128));
    }

    #[test]
    fn dirty_eviction_writes_back() {
        let cfg = CacheConfig {
            size_bytes: 128,
            line_bytes: 64,
            ways: 1,
            prefetch: Prefetch::None,
        };
        let mut c = Cache::new(cfg).unwrap();
        write(&mut c, 0);
        read(&mut c, 128); // same set, evicts dirty line 0
        assert_eq!(c.stats().writebacks, 1);
        read(&mut c, 0); // evicts clean line
        assert_eq!(c.stats().writebacks, 1);
        assert_eq!(c.stats().evictions, 2);
    }

    #[test]
    fn flush_counts_dirty_lines() {
        let mut c = Cache::new(CacheConfig::default()).unwrap();
        write(&mut c, 0);
        write(&mut c, 64);
        read(&mut c, 128);
        assert_eq!(c.flush(), 2);
        assert_eq!(c.flush(), 0);
        assert_eq!(c.stats().flushed, 2);
    }

    #[test]
    fn next_line_prefetch() {
        let cfg = CacheConfig {
            prefetch: Prefetch::NextLine,
            ..CacheConfig::default()
        };
        let mut c = Cache::new(cfg).unwrap();
        assert!(!read(&mut c, 0).hit);
        assert!(c.contains(64));
        assert!(read(&mut c, 64).hit);
        assert!(!read(&mut c, 128).hit);
        let s = c.stats();
        assert_eq!((s.prefetches, s.prefetch_hits), (2, 1));
    }

    #[test]
    fn unmapped_access_is_an_error() {
        let mut c = Cache::new(CacheConfig::default()).unwrap();
        let (lat, layout) = env();
        assert!(c
            .access(2 * MIB, 4, AccessKind::Read, &lat, &layout)
            .is_err());
    }

    fn stream() -> impl Strategy<Value = Vec<(u64, bool)>> {
        // L2-resident addresses with enough spread to overflow an 8 KiB cache.
        prop::collection::vec(((0u64..(1 << 16)).prop_map(|a| a & !3), any::<bool>()), 1..600)
    }

    fn run(cfg: CacheConfig, s: &[(u64, bool)]) -> Cache {
        let mut c = Cache::new(cfg).unwrap();
        for &(addr, w) in s {
            if w {
                write(&mut c, addr);
            } else {
                read(&mut c, addr);
            }
        }
        c
    }

    proptest! {
        #[test]
        fn counters_conserve(s in stream(), pf in any::<bool>()) {
            let cfg = CacheConfig {
                size_bytes: 8192,
                prefetch: if pf { Prefetch::NextLine } else { Prefetch::None },
                ..CacheConfig::default()
            };
            let mut c = run(cfg, &s);
            c.check_invariants();
            let st = c.stats();
            prop_assert_eq!(st.accesses(), s.len() as u64);
            c.flush();
            let st = c.stats();
            prop_assert!(st.writebacks <= st.misses + st.prefetches + st.flushed);
        }

        #[test]
        fn lru_inclusion_when_doubling(s in stream()) {
            // Same set count: ways scale with size.
            let misses: Vec<u64> = [(8192, 4), (16384, 8), (32768, 16)]
                .iter()
                .map(|&(size, ways)| {
                    let cfg = CacheConfig { size_bytes: size, ways, ..CacheConfig::default() };
                    run(cfg, &s).stats().misses
                })
                .collect();
            prop_assert!(misses[0] >= misses[1] && misses[1] >= misses[2], "{:?}", misses);
        }

        #[test]
        fn deterministic(s in stream()) {
            let a = run(CacheConfig::default(), &s);
            let b = run(CacheConfig::default(), &s);
            prop_assert_eq!(a, b);
        }
    }
}
