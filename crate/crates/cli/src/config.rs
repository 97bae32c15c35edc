//! Run configuration: built-in defaults, then a key=value file, then
//! `--set` overrides, then the dedicated flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use slapsim_core::kv::{self, KvError};
use slapsim_core::memsys::{AddressLayout, CacheConfig, LatencyConfig, MemConfig, Prefetch};
use slapsim_core::metrics::{CostConfig, Machine};
use slapsim_core::multicore::PoolConfig;
use slapsim_core::tracegen::DEFAULT_SEED;
use slapsim_core::{PipelineConfig, SlapConfig};

pub const SEED_ENV: &str = "SLAPSIM_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub machine: Machine,
    pub trace: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub pipeline: PipelineConfig,
    pub cache_kb: u64,
    pub line_bytes: u64,
    pub ways: u64,
    pub lockstep_prefetch: Prefetch,
    pub gpcu_prefetch: Prefetch,
    pub latency: LatencyConfig,
    pub layout: AddressLayout,
    pub port_max_outstanding: usize,
    pub fifo_depth: usize,
    pub lab_depth: Option<usize>,
    pub sab_depth: Option<usize>,
    pub cam_entries: usize,
    pub num_cus: usize,
    pub lane_stride: u32,
    pub pool: PoolConfig,
    pub pool_jobs: Option<PathBuf>,
    pub cost: CostConfig,
    pub sweep_fifo_depths: Vec<usize>,
    pub sweep_cache_kbs: Vec<u64>,
    /// SLAP point compared against the baseline in the region table.
    pub region_fifo: usize,
    pub region_cache_kb: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cache = CacheConfig::default();
        let mem = MemConfig::default();
        let slap = SlapConfig::default();
        RunConfig {
            machine: Machine::Slap,
            trace: None,
            out: None,
            seed: None,
            pipeline: PipelineConfig::default(),
            cache_kb: cache.size_kb(),
            line_bytes: cache.line_bytes,
            ways: cache.ways,
            lockstep_prefetch: Prefetch::NextLine,
            gpcu_prefetch: Prefetch::None,
            latency: mem.latency,
            layout: mem.layout,
            port_max_outstanding: mem.port_max_outstanding,
            fifo_depth: slap.fifo_depth,
            lab_depth: None,
            sab_depth: None,
            cam_entries: slap.cam_entries,
            num_cus: slap.num_cus,
            lane_stride: slap.lane_stride,
            pool: PoolConfig::default(),
            pool_jobs: None,
            cost: CostConfig::default(),
            sweep_fifo_depths: vec![8, 16, 24, 32],
            sweep_cache_kbs: vec![8, 16, 32],
            region_fifo: 24,
            region_cache_kb: 8,
        }
    }
}

/// Every key the config file and `--set` accept.
pub const KEYS: &[&str] = &[
    "machine",
    "trace",
    "out",
    "seed",
    "pipe.fetch",
    "pipe.ds",
    "pipe.dc",
    "pipe.ex_scalar",
    "pipe.ex_vector",
    "cache.size_kb",
    "cache.line_b",
    "cache.ways",
    "cache.prefetch",
    "lat.l1_hit",
    "lat.l2",
    "lat.dram",
    "lat.cu_port",
    "port.max_outstanding",
    "layout.l2_base",
    "layout.l2_size",
    "layout.dram_base",
    "layout.dram_size",
    "slap.fifo_depth",
    "slap.lab_depth",
    "slap.sab_depth",
    "slap.cam_entries",
    "slap.num_cus",
    "slap.lane_stride",
    "slap.gpcu_prefetch",
    "pool.num_gpcus",
    "pool.num_cus",
    "pool.simd_per_cu",
    "pool.mem_grants_per_cycle",
    "pool.reconfig_penalty",
    "pool.jobs",
    "cost.area_per_cache_kb",
    "cost.area_per_fifo_entry",
    "cost.area_per_cam_entry",
    "cost.energy_per_cache_access",
    "cost.energy_per_fifo_access",
    "sweep.fifo_depths",
    "sweep.cache_kbs",
    "report.region_fifo",
    "report.region_cache_kb",
];

fn int(key: &str, v: &str) -> Result<u64, KvError> {
    kv::int_value(key, v)
}

fn usize_of(key: &str, v: &str) -> Result<usize, KvError> {
    Ok(int(key, v)? as usize)
}

fn prefetch(key: &str, v: &str) -> Result<Prefetch, KvError> {
    v.parse().map_err(|_| KvError::BadValue {
        key: key.into(),
        value: v.into(),
    })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), KvError> {
        match key {
            "machine" => {
                self.machine = v.parse().map_err(|_| KvError::BadValue {
                    key: key.into(),
                    value: v.into(),
                })?
            }
            "trace" => self.trace = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            "seed" => self.seed = Some(int(key, v)?),
            "pipe.fetch" => self.pipeline.fetch_stages = int(key, v)?,
            "pipe.ds" => self.pipeline.ds_stages = int(key, v)?,
            "pipe.dc" => self.pipeline.dc_stages = int(key, v)?,
            "pipe.ex_scalar" => self.pipeline.ex_scalar = int(key, v)?,
            "pipe.ex_vector" => self.pipeline.ex_vector = int(key, v)?,
            "cache.size_kb" => self.cache_kb = int(key, v)?,
            "cache.line_b" => self.line_bytes = int(key, v)?,
            "cache.ways" => self.ways = int(key, v)?,
            "cache.prefetch" => self.lockstep_prefetch = prefetch(key, v)?,
            "lat.l1_hit" => self.latency.l1_hit = int(key, v)?,
            "lat.l2" => self.latency.l2_hit = int(key, v)?,
            "lat.dram" => self.latency.dram = int(key, v)?,
            "lat.cu_port" => self.latency.cu_port = int(key, v)?,
            "port.max_outstanding" => self.port_max_outstanding = usize_of(key, v)?,
            "layout.l2_base" => {
                let size = self.layout.l2.end - self.layout.l2.start;
                let base = int(key, v)?;
                self.layout.l2 = base..base + size;
            }
            "layout.l2_size" => self.layout.l2.end = self.layout.l2.start + int(key, v)?,
            "layout.dram_base" => {
                let size = self.layout.dram.end - self.layout.dram.start;
                let base = int(key, v)?;
                self.layout.dram = base..base + size;
            }
            "layout.dram_size" => self.layout.dram.end = self.layout.dram.start + int(key, v)?,
            "slap.fifo_depth" => self.fifo_depth = usize_of(key, v)?,
            "slap.lab_depth" => self.lab_depth = Some(usize_of(key, v)?),
            "slap.sab_depth" => self.sab_depth = Some(usize_of(key, v)?),
            "slap.cam_entries" => self.cam_entries = usize_of(key, v)?,
            "slap.num_cus" => self.num_cus = usize_of(key, v)?,
            "slap.lane_stride" => {
                self.lane_stride = u32::try_from(int(key, v)?).map_err(|_| KvError::BadValue {
                    key: key.into(),
                    value: v.into(),
                })?
            }
            "slap.gpcu_prefetch" => self.gpcu_prefetch = prefetch(key, v)?,
            "pool.num_gpcus" => self.pool.num_gpcus = usize_of(key, v)?,
            "pool.num_cus" => self.pool.num_cus = usize_of(key, v)?,
            "pool.simd_per_cu" => self.pool.simd_per_cu = usize_of(key, v)?,
            "pool.mem_grants_per_cycle" => {
                self.pool.mem_grants_per_cycle = match v {
                    "none" | "unlimited" => None,
                    _ => Some(kv::value(key, v)?),
                }
            }
            "pool.reconfig_penalty" => self.pool.reconfig_penalty = int(key, v)?,
            "pool.jobs" => self.pool_jobs = Some(PathBuf::from(v)),
            "cost.area_per_cache_kb" => self.cost.area_per_cache_kb = kv::value(key, v)?,
            "cost.area_per_fifo_entry" => self.cost.area_per_fifo_entry = kv::value(key, v)?,
            "cost.area_per_cam_entry" => self.cost.area_per_cam_entry = kv::value(key, v)?,
            "cost.energy_per_cache_access" => {
                self.cost.energy_per_cache_access = kv::value(key, v)?
            }
            "cost.energy_per_fifo_access" => {
                self.cost.energy_per_fifo_access = kv::value(key, v)?
            }
            "sweep.fifo_depths" => self.sweep_fifo_depths = kv::list_value(key, v)?,
            "sweep.cache_kbs" => self.sweep_cache_kbs = kv::list_value(key, v)?,
            "report.region_fifo" => self.region_fifo = usize_of(key, v)?,
            "report.region_cache_kb" => self.region_cache_kb = int(key, v)?,
            _ => return Err(KvError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn apply_all(&mut self, pairs: &BTreeMap<String, String>) -> Result<(), KvError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Relative `trace`, `out` and `pool.jobs` paths in a config file are
    /// taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let pairs = kv::parse_kv(&text).with_context(|| format!("in {}", path.display()))?;
        let mut cfg = RunConfig::default();
        cfg.apply_all(&pairs)
            .with_context(|| format!("in {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.trace, &mut cfg.out, &mut cfg.pool_jobs]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Flag, then config file, then `SLAPSIM_SEED`, then the built-in default.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => kv::int_value(SEED_ENV, v.trim())
                .map_err(|_| anyhow!("{SEED_ENV}={v} is not an integer")),
            Err(_) => Ok(DEFAULT_SEED),
        }
    }

    pub fn cache(&self, size_kb: u64, prefetch: Prefetch) -> CacheConfig {
        CacheConfig {
            size_bytes: size_kb * 1024,
            line_bytes: self.line_bytes,
            ways: self.ways,
            prefetch,
        }
    }

    pub fn mem(&self, cache_kb: u64) -> MemConfig {
        MemConfig {
            cache: self.cache(cache_kb, self.lockstep_prefetch),
            latency: self.latency,
            layout: self.layout.clone(),
            port_max_outstanding: self.port_max_outstanding,
        }
    }

    pub fn slap(&self, fifo_depth: usize, cache_kb: u64) -> SlapConfig {
        SlapConfig {
            fifo_depth,
            lab_depth: self.lab_depth,
            sab_depth: self.sab_depth,
            cam_entries: self.cam_entries,
            num_cus: self.num_cus,
            lane_stride: self.lane_stride,
            pipeline: self.pipeline,
            gpcu_cache: self.cache(cache_kb, self.gpcu_prefetch),
        }
    }

    /// Checks every section, whichever machine will run.
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        let mem = self.mem(self.cache_kb);
        mem.validate()?;
        self.slap(self.fifo_depth, self.cache_kb).validate()?;
        self.pool.validate()?;
        self.cost.validate()?;
        if self.sweep_fifo_depths.is_empty() || self.sweep_cache_kbs.is_empty() {
            bail!("sweep axes must be non-empty");
        }
        for &d in &self.sweep_fifo_depths {
            if d == 0 {
                bail!("sweep.fifo_depths: depth 0");
            }
        }
        for &kb in &self.sweep_cache_kbs {
            self.cache(kb, Prefetch::None).validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_settable() {
        let samples: BTreeMap<&str, &str> = [
            ("machine", "lockstep"),
            ("cache.prefetch", "none"),
            ("slap.gpcu_prefetch", "next-line"),
            ("pool.mem_grants_per_cycle", "2"),
            ("sweep.fifo_depths", "8,32"),
            ("sweep.cache_kbs", "8"),
            ("trace", "t.trace"),
            ("out", "o"),
            ("pool.jobs", "jobs.txt"),
            ("cost.area_per_cache_kb", "2.0"),
            ("cost.area_per_fifo_entry", "0.5"),
            ("cost.area_per_cam_entry", "0.5"),
            ("cost.energy_per_cache_access", "3"),
            ("cost.energy_per_fifo_access", "1"),
        ]
        .into_iter()
        .collect();
        let mut c = RunConfig::default();
        for k in KEYS {
            let v = samples.get(k).copied().unwrap_or("2");
            c.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
        assert!(c.set("cache.sise_kb", "8").is_err());
    }

    #[test]
    fn zero_fifo_depth_is_rejected() {
        let mut c = RunConfig::default();
        c.set("slap.fifo_depth", "0").unwrap();
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn layout_keys_move_ranges() {
        let mut c = RunConfig::default();
        c.set("layout.dram_base", "0x8000000").unwrap();
        c.set("layout.dram_size", "0x100000").unwrap();
        assert_eq!(c.layout.dram, 0x800_0000..0x810_0000);
    }

    #[test]
    fn seed_precedence() {
        let mut c = RunConfig::default();
        assert_eq!(c.resolve_seed(Some(3)).unwrap(), 3);
        c.seed = Some(5);
        assert_eq!(c.resolve_seed(Some(3)).unwrap(), 3);
        assert_eq!(c.resolve_seed(None).unwrap(), 5);
    }
}
