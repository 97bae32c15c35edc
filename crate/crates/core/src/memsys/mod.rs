//! Memory hierarchy: the GPCU-side L1 data cache, fixed-latency L2/SRAM and
//! DRAM tiers selected by address, and the per-CU memory ports used by the
//! split pipeline.

mod arbiter;
mod cache;
mod port;

pub use arbiter::MemoryArbiter;
pub use cache::{AccessKind, AccessOutcome, Cache, CacheStats};
pub use port::{CuPort, PortIssue, PortRequest, PortStats};

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemError {
    #[error("invalid cache config: {0}")]
    Cache(String),
    #[error("invalid latency config: {0}")]
    Latency(String),
    #[error("invalid address layout: {0}")]
    Layout(String),
    #[error("address range {addr:#x}+{size} is outside every declared memory range")]
    Unmapped { addr: u64, size: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prefetch {
    #[default]
    None,
    NextLine,
}

impl std::str::FromStr for Prefetch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Prefetch::None),
            "next-line" => Ok(Prefetch::NextLine),
            other => Err(format!("unknown prefetch mode `{other}` (none|next-line)")),
        }
    }
}

/// Set-associative, write-back, write-allocate, LRU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub size_bytes: u64,
    pub line_bytes: u64,
    pub ways: u64,
    pub prefetch: Prefetch,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            size_bytes: 32 * KIB,
            line_bytes: 64,
            ways: 4,
            prefetch: Prefetch::None,
        }
    }
}

impl CacheConfig {
    pub fn with_size_kb(size_kb: u64) -> Self {
        CacheConfig {
            size_bytes: size_kb * KIB,
            ..Self::default()
        }
    }

    pub fn size_kb(&self) -> u64 {
        self.size_bytes / KIB
    }

    pub fn num_sets(&self) -> u64 {
        self.size_bytes / (self.line_bytes * self.ways)
    }

    pub fn validate(&self) -> Result<(), MemError> {
        let pow2 = |v: u64| v != 0 && v.is_power_of_two();
        if !pow2(self.size_bytes) || !pow2(self.line_bytes) || !pow2(self.ways) {
            return Err(MemError::Cache(format!(
                "size {}, line {} and ways {} must all be powers of two",
                self.size_bytes, self.line_bytes, self.ways
            )));
        }
        if !self.size_bytes.is_multiple_of(self.line_bytes * self.ways) {
            return Err(MemError::Cache(format!(
                "size {} is not divisible by line {} x ways {}",
                self.size_bytes, self.line_bytes, self.ways
            )));
        }
        Ok(())
    }
}

/// Stall cycles charged per tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyConfig {
    /// Extra stall on an L1 hit.
    pub l1_hit: u64,
    pub l2_hit: u64,
    pub dram: u64,
    /// Latency from a CU port to the L2-resident data memory. DRAM-resident
    /// addresses are reached at `dram`.
    pub cu_port: u64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            l1_hit: 0,
            l2_hit: 20,
            dram: 120,
            cu_port: 20,
        }
    }
}

impl LatencyConfig {
    /// Every tier answers instantly. Violates the strict tier ordering that
    /// `validate` enforces and is only meant for idealized comparisons.
    pub fn zero() -> Self {
        LatencyConfig {
            l1_hit: 0,
            l2_hit: 0,
            dram: 0,
            cu_port: 0,
        }
    }

    pub fn validate(&self) -> Result<(), MemError> {
        if !(self.l1_hit < self.l2_hit && self.l2_hit < self.dram) {
            return Err(MemError::Latency(format!(
                "need l1_hit < l2 < dram, got {} / {} / {}",
                self.l1_hit, self.l2_hit, self.dram
            )));
        }
        Ok(())
    }

    pub fn miss_latency(&self, tier: Tier) -> u64 {
        match tier {
            Tier::L2 => self.l2_hit,
            Tier::Dram => self.dram,
        }
    }

    pub fn port_latency(&self, tier: Tier) -> u64 {
        match tier {
            Tier::L2 => self.cu_port,
            Tier::Dram => self.dram,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    L2,
    Dram,
}

/// Partition of the address space into L2-resident and DRAM-resident
/// ranges. Addresses in neither range are a configuration error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressLayout {
    pub l2: Range<u64>,
    pub dram: Range<u64>,
}

impl Default for AddressLayout {
    fn default() -> Self {
        AddressLayout {
            l2: 0..MIB,
            dram: 64 * MIB..128 * MIB,
        }
    }
}

impl AddressLayout {
    pub fn validate(&self) -> Result<(), MemError> {
        if self.l2.is_empty() || self.dram.is_empty() {
            return Err(MemError::Layout("ranges must be non-empty".into()));
        }
        if self.l2.start < self.dram.end && self.dram.start < self.l2.end {
            return Err(MemError::Layout(format!(
                "L2 range {:#x?} overlaps DRAM range {:#x?}",
                self.l2, self.dram
            )));
        }
        Ok(())
    }

    /// Classifies `[addr, addr + size)`; the whole access must sit inside
    /// one range.
    pub fn tier_of(&self, addr: u64, size: u64) -> Result<Tier, MemError> {
        let end = addr + size.max(1);
        if addr >= self.l2.start && end <= self.l2.end {
            Ok(Tier::L2)
        } else if addr >= self.dram.start && end <= self.dram.end {
            Ok(Tier::Dram)
        } else {
            Err(MemError::Unmapped { addr, size })
        }
    }
}

/// Backing tier for a single byte address.
pub fn backing_tier(addr: u64, layout: &AddressLayout) -> Result<Tier, MemError> {
    layout.tier_of(addr, 1)
}

/// Everything the machine models need to know about memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemConfig {
    pub cache: CacheConfig,
    pub latency: LatencyConfig,
    pub layout: AddressLayout,
    pub port_max_outstanding: usize,
}

impl Default for MemConfig {
    fn default() -> Self {
        MemConfig {
            cache: CacheConfig::default(),
            latency: LatencyConfig::default(),
            layout: AddressLayout::default(),
            port_max_outstanding: 8,
        }
    }
}

impl MemConfig {
    pub fn validate(&self) -> Result<(), MemError> {
        self.cache.validate()?;
        self.latency.validate()?;
        self.layout.validate()?;
        if self.port_max_outstanding == 0 {
            return Err(MemError::Cache("port.max_outstanding must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_tiers() {
        let l = AddressLayout::default();
        assert_eq!(backing_tier(0, &l), Ok(Tier::L2));
        assert_eq!(backing_tier(MIB - 1, &l), Ok(Tier::L2));
        assert_eq!(backing_tier(64 * MIB, &l), Ok(Tier::Dram));
        assert_eq!(backing_tier(128 * MIB - 1, &l), Ok(Tier::Dram));
        assert!(backing_tier(MIB, &l).is_err());
        assert!(backing_tier(128 * MIB, &l).is_err());
    }

    #[test]
    fn access_straddling_a_range_end_is_unmapped() {
        let l = AddressLayout::default();
        assert!(l.tier_of(MIB - 32, 32).is_ok());
        assert!(l.tier_of(MIB - 16, 32).is_err());
    }

    #[test]
    fn cache_config_validation() {
        assert!(CacheConfig::default().validate().is_ok());
        for kb in [8, 16, 32] {
            let c = CacheConfig::with_size_kb(kb);
            assert!(c.validate().is_ok());
            assert_eq!(c.size_kb(), kb);
        }
        let bad = CacheConfig {
            size_bytes: 3000,
            ..CacheConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = CacheConfig {
            size_bytes: 128,
            line_bytes: 64,
            ways: 4,
            prefetch: Prefetch::None,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn latency_ordering() {
        assert!(LatencyConfig::default().validate().is_ok());
        assert!(LatencyConfig::zero().validate().is_err());
        let l = LatencyConfig {
            l2_hit: 200,
            ..LatencyConfig::default()
        };
        assert!(l.validate().is_err());
    }

    #[test]
    fn overlapping_layout_is_rejected() {
        let l = AddressLayout {
            l2: 0..2 * MIB,
            dram: MIB..3 * MIB,
        };
        assert!(l.validate().is_err());
    }
}
