//! Run metrics, the derived figures (overhead, area, perf/area, energy) and
//! the comparison table written by sweeps and reports.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lockstep::LockstepResult;
use crate::memsys::CacheStats;
use crate::multicore::PoolResult;
use crate::slap::{SlapConfig, SlapResult, StallCause};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str =
    "machine,fifo_depth,cache_kb,cycles,overhead_pct,area,perf_area_eff,energy";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("flat cycle count is zero")]
    ZeroFlat,
    #[error("perf/area needs positive cycles and area (got {cycles}, {area})")]
    ZeroInput { cycles: u64, area: f64 },
    #[error("{0}")]
    Invalid(String),
    #[error("report has no {0} run")]
    Missing(&'static str),
    #[error("region boundaries missing or inconsistent: {0}")]
    Regions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Machine {
    Flat,
    Lockstep,
    Slap,
    Pool,
}

impl Machine {
    pub fn name(self) -> &'static str {
        match self {
            Machine::Flat => "flat",
            Machine::Lockstep => "lockstep",
            Machine::Slap => "slap",
            Machine::Pool => "pool",
        }
    }
}

impl std::str::FromStr for Machine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(Machine::Flat),
            "lockstep" => Ok(Machine::Lockstep),
            "slap" => Ok(Machine::Slap),
            "pool" => Ok(Machine::Pool),
            _ => Err(format!("unknown machine `{s}` (flat, lockstep, slap, pool)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitMetrics {
    pub unit: String,
    pub stalls: BTreeMap<String, u64>,
}

/// Storage that the area model charges for.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resources {
    /// Data cache across all pipelines; `None` for the flat machine.
    pub cache_kb: Option<u64>,
    pub num_cus: usize,
    pub fifo_depth: usize,
    pub lab_depth: usize,
    pub sab_depth: usize,
    pub cam_entries: usize,
}

/// Queue traffic summed over every CU.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueTraffic {
    pub fifo_pushes: u64,
    pub fifo_pops: u64,
    pub lab_pushes: u64,
    pub lab_pops: u64,
    pub sab_pushes: u64,
    pub sab_pops: u64,
}

impl QueueTraffic {
    pub fn total(&self) -> u64 {
        self.fifo_pushes
            + self.fifo_pops
            + self.lab_pushes
            + self.lab_pops
            + self.sab_pushes
            + self.sab_pops
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub machine: Machine,
    pub trace: Option<String>,
    pub seed: Option<u64>,
    pub bundles: u64,
    pub total_cycles: u64,
    /// Filled in once the flat run for the same trace is known.
    pub flat_cycles: Option<u64>,
    pub overhead_pct: Option<f64>,
    pub resources: Resources,
    pub units: Vec<UnitMetrics>,
    pub cache: Option<CacheStats>,
    /// One histogram per CU, index = occupancy.
    pub fifo_histograms: Vec<Vec<u64>>,
    pub fifo_high_water: u64,
    pub cam_high_water: u64,
    pub lab_high_water: u64,
    pub sab_high_water: u64,
    pub queues: QueueTraffic,
    pub region_cycles: Vec<u64>,
}

impl Metrics {
    fn base(machine: Machine, bundles: u64, total_cycles: u64) -> Self {
        Metrics {
            schema_version: SCHEMA_VERSION,
            machine,
            trace: None,
            seed: None,
            bundles,
            total_cycles,
            flat_cycles: None,
            overhead_pct: None,
            resources: Resources::default(),
            units: Vec::new(),
            cache: None,
            fifo_histograms: Vec::new(),
            fifo_high_water: 0,
            cam_high_water: 0,
            lab_high_water: 0,
            sab_high_water: 0,
            queues: QueueTraffic::default(),
            region_cycles: Vec::new(),
        }
    }

    pub fn from_flat(r: &LockstepResult) -> Self {
        let mut m = Self::base(Machine::Flat, r.issue_cycles, r.total_cycles);
        m.region_cycles = r.region_cycles.clone();
        m.units.push(UnitMetrics {
            unit: "pipeline".into(),
            stalls: BTreeMap::new(),
        });
        m
    }

    pub fn from_lockstep(r: &LockstepResult, cache_kb: u64) -> Self {
        let mut m = Self::base(Machine::Lockstep, r.issue_cycles, r.total_cycles);
        m.region_cycles = r.region_cycles.clone();
        m.cache = r.cache;
        m.resources.cache_kb = Some(cache_kb);
        let mut stalls = BTreeMap::new();
        for (k, v) in [
            ("SCALAR_MISS", r.scalar_miss_stall),
            ("VECTOR_MISS", r.vector_miss_stall),
        ] {
            if v > 0 {
                stalls.insert(k.to_string(), v);
            }
        }
        m.units.push(UnitMetrics {
            unit: "pipeline".into(),
            stalls,
        });
        m
    }

    pub fn from_slap(r: &SlapResult, cfg: &SlapConfig) -> Self {
        let mut m = Self::base(Machine::Slap, r.bundles, r.total_cycles);
        m.region_cycles = r.region_cycles.clone();
        m.cache = Some(r.cache);
        m.resources = Resources {
            cache_kb: Some(cfg.gpcu_cache.size_kb()),
            num_cus: r.cus.len(),
            fifo_depth: cfg.fifo_depth,
            lab_depth: cfg.lab_depth(),
            sab_depth: cfg.sab_depth(),
            cam_entries: cfg.cam_entries,
        };
        m.units.push(UnitMetrics {
            unit: "gpcu0".into(),
            stalls: r.gpcu.stalls.to_map(),
        });
        m.add_cus(&r.cus);
        m
    }

    pub fn from_pool(r: &PoolResult, cfg: &SlapConfig, bundles: u64) -> Self {
        let mut m = Self::base(Machine::Pool, bundles, r.total_cycles);
        let mut cache = CacheStats::default();
        for g in &r.gpcus {
            cache.hits += g.cache.hits;
            cache.misses += g.cache.misses;
            cache.evictions += g.cache.evictions;
            cache.writebacks += g.cache.writebacks;
            cache.prefetches += g.cache.prefetches;
            cache.prefetch_hits += g.cache.prefetch_hits;
            cache.flushed += g.cache.flushed;
            m.units.push(UnitMetrics {
                unit: format!("gpcu{}", g.gpcu),
                stalls: g.stats.stalls.to_map(),
            });
        }
        m.cache = Some(cache);
        m.resources = Resources {
            cache_kb: Some(cfg.gpcu_cache.size_kb() * r.gpcus.len() as u64),
            num_cus: r.cus.len(),
            fifo_depth: cfg.fifo_depth,
            lab_depth: cfg.lab_depth(),
            sab_depth: cfg.sab_depth(),
            cam_entries: cfg.cam_entries,
        };
        m.add_cus(&r.cus);
        m
    }

    fn add_cus(&mut self, cus: &[crate::slap::CuStats]) {
        for cu in cus {
            self.units.push(UnitMetrics {
                unit: format!("cu{}", cu.id),
                stalls: cu.stalls.to_map(),
            });
            self.fifo_histograms.push(cu.fifo_histogram.clone());
            self.fifo_high_water = self.fifo_high_water.max(cu.fifo.high_water);
            self.cam_high_water = self.cam_high_water.max(cu.cam_high_water);
            self.lab_high_water = self.lab_high_water.max(cu.lab.high_water);
            self.sab_high_water = self.sab_high_water.max(cu.sab.high_water);
            self.queues.fifo_pushes += cu.fifo.pushes;
            self.queues.fifo_pops += cu.fifo.pops;
            self.queues.lab_pushes += cu.lab.pushes;
            self.queues.lab_pops += cu.lab.pops;
            self.queues.sab_pushes += cu.sab.pushes;
            self.queues.sab_pops += cu.sab.pops;
        }
    }

    /// Records the flat-machine baseline and the resulting overhead.
    pub fn set_flat(&mut self, flat_cycles: u64) -> Result<(), MetricsError> {
        self.overhead_pct = Some(overhead_vs_flat(self.total_cycles, flat_cycles)?);
        self.flat_cycles = Some(flat_cycles);
        Ok(())
    }

    pub fn stall_total(&self, cause: StallCause) -> u64 {
        self.units
            .iter()
            .filter_map(|u| u.stalls.get(cause.name()))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }

    pub fn from_json(s: &str) -> Result<Self, MetricsError> {
        let m: Metrics =
            serde_json::from_str(s).map_err(|e| MetricsError::Invalid(e.to_string()))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(MetricsError::Invalid(format!(
                "schema_version {} (expected {SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub area_per_cache_kb: f64,
    pub area_per_fifo_entry: f64,
    pub area_per_cam_entry: f64,
    pub energy_per_cache_access: f64,
    pub energy_per_fifo_access: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            area_per_cache_kb: 1.0,
            area_per_fifo_entry: 0.01,
            area_per_cam_entry: 0.02,
            energy_per_cache_access: 10.0,
            energy_per_fifo_access: 1.0,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        for (k, v) in [
            ("cost.area_per_cache_kb", self.area_per_cache_kb),
            ("cost.area_per_fifo_entry", self.area_per_fifo_entry),
            ("cost.area_per_cam_entry", self.area_per_cam_entry),
            ("cost.energy_per_cache_access", self.energy_per_cache_access),
            ("cost.energy_per_fifo_access", self.energy_per_fifo_access),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MetricsError::Invalid(format!("{k} must be positive")));
            }
        }
        Ok(())
    }

    /// Area units; `None` for the flat machine, which has no cache to cost.
    /// LAB and SAB entries are charged at the FIFO entry rate.
    pub fn area(&self, r: &Resources) -> Option<f64> {
        let kb = r.cache_kb?;
        let queue_entries = (r.fifo_depth + r.lab_depth + r.sab_depth) * r.num_cus;
        Some(
            kb as f64 * self.area_per_cache_kb
                + queue_entries as f64 * self.area_per_fifo_entry
                + (r.cam_entries * r.num_cus) as f64 * self.area_per_cam_entry,
        )
    }
}

pub fn overhead_vs_flat(cycles: u64, flat_cycles: u64) -> Result<f64, MetricsError> {
    if flat_cycles == 0 {
        return Err(MetricsError::ZeroFlat);
    }
    Ok(100.0 * (cycles as f64 - flat_cycles as f64) / flat_cycles as f64)
}

/// Unnormalized `(1 / cycles) / area`.
pub fn perf_area_efficiency(cycles: u64, area: f64) -> Result<f64, MetricsError> {
    if cycles == 0 || area.is_nan() || area <= 0.0 {
        return Err(MetricsError::ZeroInput { cycles, area });
    }
    Ok(1.0 / cycles as f64 / area)
}

/// Demand cache accesses plus FIFO/LAB/SAB pushes and pops, weighted.
pub fn energy_proxy(m: &Metrics, cost: &CostConfig) -> f64 {
    let cache = m.cache.map_or(0, |c| c.accesses());
    cache as f64 * cost.energy_per_cache_access
        + m.queues.total() as f64 * cost.energy_per_fifo_access
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub machine: Machine,
    pub fifo_depth: Option<usize>,
    pub cache_kb: Option<u64>,
    pub cycles: u64,
    pub overhead_pct: f64,
    pub area: Option<f64>,
    pub perf_area_eff: Option<f64>,
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub region: usize,
    pub flat_cycles: u64,
    pub baseline_cycles: u64,
    pub slap_cycles: u64,
    pub improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub rows: Vec<ReportRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regions: Option<Vec<RegionRow>>,
}

fn row_order(a: &ReportRow, b: &ReportRow) -> Ordering {
    (a.machine, a.fifo_depth, a.cache_kb).cmp(&(b.machine, b.fifo_depth, b.cache_kb))
}

impl ComparisonReport {
    /// Builds one row per run. Exactly one flat run is required; the
    /// perf/area baseline is the lock-step run with the largest cache.
    /// Rows come out ordered by machine, FIFO depth, cache size.
    pub fn build(runs: &[Metrics], cost: &CostConfig) -> Result<Self, MetricsError> {
        cost.validate()?;
        let mut flats = runs.iter().filter(|m| m.machine == Machine::Flat);
        let flat = flats.next().ok_or(MetricsError::Missing("flat"))?;
        if flats.next().is_some() {
            return Err(MetricsError::Invalid("more than one flat run".into()));
        }
        let baseline = runs
            .iter()
            .filter(|m| m.machine == Machine::Lockstep)
            .max_by_key(|m| m.resources.cache_kb)
            .ok_or(MetricsError::Missing("lockstep"))?;
        let base_area = cost.area(&baseline.resources).expect("lockstep has a cache");
        let base_eff = perf_area_efficiency(baseline.total_cycles, base_area)?;

        let mut rows = Vec::with_capacity(runs.len());
        for m in runs {
            let area = cost.area(&m.resources);
            let eff = match area {
                Some(a) => Some(perf_area_efficiency(m.total_cycles, a)? / base_eff),
                None => None,
            };
            let slap_like = matches!(m.machine, Machine::Slap | Machine::Pool);
            rows.push(ReportRow {
                machine: m.machine,
                fifo_depth: slap_like.then_some(m.resources.fifo_depth),
                cache_kb: m.resources.cache_kb,
                cycles: m.total_cycles,
                overhead_pct: overhead_vs_flat(m.total_cycles, flat.total_cycles)?,
                area,
                perf_area_eff: eff,
                energy: (m.machine != Machine::Flat).then(|| energy_proxy(m, cost)),
            });
        }
        rows.sort_by(row_order);
        Ok(ComparisonReport {
            schema_version: SCHEMA_VERSION,
            rows,
            regions: None,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.2},{},{},{}",
                r.machine.name(),
                opt(r.fifo_depth.map(|v| v.to_string())),
                opt(r.cache_kb.map(|v| v.to_string())),
                r.cycles,
                r.overhead_pct,
                opt(r.area.map(|v| format!("{v:.2}"))),
                opt(r.perf_area_eff.map(|v| format!("{v:.4}"))),
                opt(r.energy.map(|v| format!("{v:.1}"))),
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialize") + "\n"
    }

    pub fn row(&self, machine: Machine, fifo: Option<usize>, cache_kb: u64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.machine == machine && r.fifo_depth == fifo && r.cache_kb == Some(cache_kb))
    }
}

/// Per-region SLAP improvement over the baseline machine.
pub fn region_report(
    slap: &Metrics,
    flat: &Metrics,
    baseline: &Metrics,
) -> Result<Vec<RegionRow>, MetricsError> {
    let n = slap.region_cycles.len();
    if n == 0 {
        return Err(MetricsError::Regions("no region cycles recorded".into()));
    }
    if flat.region_cycles.len() != n || baseline.region_cycles.len() != n {
        return Err(MetricsError::Regions(format!(
            "region counts differ: slap {n}, flat {}, baseline {}",
            flat.region_cycles.len(),
            baseline.region_cycles.len()
        )));
    }
    Ok((0..n)
        .map(|k| {
            let b = baseline.region_cycles[k];
            let s = slap.region_cycles[k];
            RegionRow {
                region: k + 1,
                flat_cycles: flat.region_cycles[k],
                baseline_cycles: b,
                slap_cycles: s,
                improvement_pct: if b == 0 {
                    0.0
                } else {
                    100.0 * (b as f64 - s as f64) / b as f64
                },
            }
        })
        .collect())
}

pub fn region_csv(rows: &[RegionRow]) -> String {
    let mut out = String::from("region,flat_cycles,baseline_cycles,slap_cycles,improvement_pct\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.2}",
            r.region, r.flat_cycles, r.baseline_cycles, r.slap_cycles, r.improvement_pct
        );
    }
    out
}
