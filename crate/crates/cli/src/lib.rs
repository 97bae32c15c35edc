//! Library side of the `slapsim` binary. Every subcommand is a plain
//! function so tests can drive it without spawning a process.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use slapsim_core::kv;
use slapsim_core::metrics::{region_csv, region_report, ComparisonReport, Machine, Metrics, RegionRow};
use slapsim_core::multicore::{simulate_pool, AllocationMap, Job};
use slapsim_core::tracegen::{gen_combo, ComboSpec};
use slapsim_core::{
    parse_trace, serialize_trace, simulate_flat, simulate_lockstep, simulate_slap, Trace,
};

pub use config::RunConfig;

/// A trace plus where it came from, for the metrics header.
#[derive(Debug, Clone)]
pub struct Workload {
    pub trace: Trace,
    pub label: String,
    pub seed: Option<u64>,
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_trace(&text).with_context(|| format!("parsing {}", path.display()))
}

/// The configured trace file, or the default combo generated from `seed`.
pub fn load_workload(cfg: &RunConfig, seed: u64) -> Result<Workload> {
    match &cfg.trace {
        Some(p) => {
            let trace = read_trace(p)?;
            let seed = trace.meta.seed;
            Ok(Workload {
                trace,
                label: p.display().to_string(),
                seed,
            })
        }
        None => {
            let spec = ComboSpec::default_combo(seed);
            let (trace, _) = gen_combo(&spec)?;
            Ok(Workload {
                trace,
                label: spec.name,
                seed: Some(seed),
            })
        }
    }
}

/// One simulation. `fifo` and `cache_kb` override the config's values so a
/// sweep can share one config across grid points.
pub fn simulate(
    machine: Machine,
    cfg: &RunConfig,
    w: &Workload,
    fifo: usize,
    cache_kb: u64,
) -> Result<Metrics> {
    let t = &w.trace;
    let mut m = match machine {
        Machine::Flat => Metrics::from_flat(&simulate_flat(t, &cfg.pipeline)),
        Machine::Lockstep => {
            let r = simulate_lockstep(t, &cfg.pipeline, &cfg.mem(cache_kb))?;
            Metrics::from_lockstep(&r, cache_kb)
        }
        Machine::Slap => {
            let s = cfg.slap(fifo, cache_kb);
            Metrics::from_slap(&simulate_slap(t, &s, &cfg.mem(cache_kb))?, &s)
        }
        Machine::Pool => bail!("the pool machine runs from pool.jobs, not a single trace"),
    };
    m.trace = Some(w.label.clone());
    m.seed = w.seed;
    let flat = simulate_flat(t, &cfg.pipeline).total_cycles;
    m.set_flat(flat)?;
    Ok(m)
}

/// Parses a pool job list: one `gpcu trace [datasets]` entry per line.
/// Trace paths are relative to the list file.
pub fn read_pool_jobs(path: &Path, num_gpcus: usize) -> Result<Vec<Vec<Job>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut jobs: Vec<Vec<Job>> = (0..num_gpcus).map(|_| Vec::new()).collect();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let ctx = || format!("{} line {}", path.display(), i + 1);
        if !(2..=3).contains(&fields.len()) {
            bail!("{}: expected `gpcu trace [datasets]`", ctx());
        }
        let g: usize = fields[0].parse().with_context(ctx)?;
        if g >= num_gpcus {
            bail!("{}: GPCU {g} but the pool has {num_gpcus}", ctx());
        }
        let datasets = match fields.get(2) {
            Some(d) => Some(d.parse::<usize>().with_context(ctx)?),
            None => None,
        };
        let p = Path::new(fields[1]);
        let trace = read_trace(&if p.is_relative() { dir.join(p) } else { p.to_path_buf() })?;
        jobs[g].push(Job { trace, datasets });
    }
    if let Some(g) = jobs.iter().position(Vec::is_empty) {
        bail!("{}: GPCU {g} has no jobs", path.display());
    }
    Ok(jobs)
}

/// Starting allocation: each GPCU gets what its first job asks for; GPCUs
/// whose first job names no data-set count split the remaining CUs evenly.
pub fn initial_allocation(jobs: &[Vec<Job>], num_cus: usize, simd: usize) -> Result<AllocationMap> {
    let wants: Vec<Option<usize>> = jobs.iter().map(|q| q[0].cus_needed(simd)).collect();
    let fixed: usize = wants.iter().flatten().sum();
    let open = wants.iter().filter(|w| w.is_none()).count();
    if fixed > num_cus {
        bail!("first jobs need {fixed} CUs but the pool has {num_cus}");
    }
    let spare = num_cus - fixed;
    let mut handed = 0;
    let sizes: Vec<usize> = wants
        .iter()
        .map(|w| match w {
            Some(n) => *n,
            None => {
                let share = spare / open + usize::from(handed < spare % open);
                handed += 1;
                share
            }
        })
        .collect();
    Ok(AllocationMap::contiguous(num_cus, &sizes)?)
}

pub fn simulate_pool_run(cfg: &RunConfig) -> Result<Metrics> {
    let path = cfg
        .pool_jobs
        .as_ref()
        .ok_or_else(|| anyhow!("machine pool needs pool.jobs"))?;
    let jobs = read_pool_jobs(path, cfg.pool.num_gpcus)?;
    let alloc = initial_allocation(&jobs, cfg.pool.num_cus, cfg.pool.simd_per_cu)?;
    let slap = cfg.slap(cfg.fifo_depth, cfg.cache_kb);
    let r = simulate_pool(&jobs, &alloc, &cfg.pool, &slap, &cfg.mem(cfg.cache_kb))?;
    let bundles: u64 = jobs.iter().flatten().map(|j| j.trace.len() as u64).sum();
    let mut m = Metrics::from_pool(&r, &slap, bundles);
    m.trace = Some(path.display().to_string());
    // the flat reference is the longest per-GPCU job sequence
    let flat = jobs
        .iter()
        .map(|q| {
            q.iter()
                .map(|j| simulate_flat(&j.trace, &cfg.pipeline).total_cycles)
                .sum::<u64>()
        })
        .max()
        .unwrap_or(0);
    m.set_flat(flat)?;
    Ok(m)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_run(cfg: &RunConfig, seed: u64) -> Result<(Metrics, PathBuf)> {
    cfg.validate()?;
    let m = match cfg.machine {
        Machine::Pool => simulate_pool_run(cfg)?,
        machine => simulate(machine, cfg, &load_workload(cfg, seed)?, cfg.fifo_depth, cfg.cache_kb)?,
    };
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.json", m.machine.name())));
    write(&out, &m.to_json())?;
    Ok((m, out))
}

pub fn summary_line(m: &Metrics, out: &Path) -> String {
    format!(
        "{} cycles={} flat={} overhead={:.2}% bundles={} -> {}",
        m.machine.name(),
        m.total_cycles,
        m.flat_cycles.unwrap_or(0),
        m.overhead_pct.unwrap_or(0.0),
        m.bundles,
        out.display()
    )
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub machine: Machine,
    pub fifo_depth: Option<usize>,
    pub cache_kb: Option<u64>,
}

impl GridPoint {
    pub fn file_name(&self) -> String {
        match (self.machine, self.fifo_depth, self.cache_kb) {
            (Machine::Flat, _, _) => "flat.json".into(),
            (m, None, Some(kb)) => format!("{}_c{kb}.json", m.name()),
            (m, Some(f), Some(kb)) => format!("{}_f{f}_c{kb}.json", m.name()),
            (m, _, _) => format!("{}.json", m.name()),
        }
    }
}

/// Flat, then lock-step per cache size, then SLAP over FIFO depth × cache.
pub fn sweep_grid(cfg: &RunConfig) -> Vec<GridPoint> {
    let mut grid = vec![GridPoint {
        machine: Machine::Flat,
        fifo_depth: None,
        cache_kb: None,
    }];
    for &kb in &cfg.sweep_cache_kbs {
        grid.push(GridPoint {
            machine: Machine::Lockstep,
            fifo_depth: None,
            cache_kb: Some(kb),
        });
    }
    for &f in &cfg.sweep_fifo_depths {
        for &kb in &cfg.sweep_cache_kbs {
            grid.push(GridPoint {
                machine: Machine::Slap,
                fifo_depth: Some(f),
                cache_kb: Some(kb),
            });
        }
    }
    grid
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub runs: Vec<(GridPoint, Metrics)>,
    pub report: ComparisonReport,
}

pub fn run_sweep(cfg: &RunConfig, seed: u64, jobs: usize) -> Result<SweepOutput> {
    cfg.validate()?;
    if cfg.machine == Machine::Pool {
        bail!("sweeps cover flat, lockstep and slap; run the pool machine with `run`");
    }
    let w = load_workload(cfg, seed)?;
    let grid = sweep_grid(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("starting worker threads")?;
    let results: Vec<Result<Metrics>> = pool.install(|| {
        grid.par_iter()
            .map(|p| {
                simulate(
                    p.machine,
                    cfg,
                    &w,
                    p.fifo_depth.unwrap_or(cfg.fifo_depth),
                    p.cache_kb.unwrap_or(cfg.cache_kb),
                )
                .with_context(|| format!("grid point {}", p.file_name()))
            })
            .collect()
    });
    let mut runs = Vec::with_capacity(grid.len());
    for (p, r) in grid.into_iter().zip(results) {
        runs.push((p, r?));
    }
    let metrics: Vec<Metrics> = runs.iter().map(|(_, m)| m.clone()).collect();
    let report = assemble_report(&metrics, cfg)?;
    Ok(SweepOutput { runs, report })
}

/// Comparison table plus, when the region point is present, the per-region
/// table against the largest-cache lock-step run.
pub fn assemble_report(runs: &[Metrics], cfg: &RunConfig) -> Result<ComparisonReport> {
    let mut report = ComparisonReport::build(runs, &cfg.cost)?;
    report.regions = regions_for(runs, cfg)?;
    Ok(report)
}

fn regions_for(runs: &[Metrics], cfg: &RunConfig) -> Result<Option<Vec<RegionRow>>> {
    let flat = runs.iter().find(|m| m.machine == Machine::Flat);
    let base = runs
        .iter()
        .filter(|m| m.machine == Machine::Lockstep)
        .max_by_key(|m| m.resources.cache_kb);
    let slap = runs.iter().find(|m| {
        m.machine == Machine::Slap
            && m.resources.fifo_depth == cfg.region_fifo
            && m.resources.cache_kb == Some(cfg.region_cache_kb)
    });
    match (slap, flat, base) {
        (Some(s), Some(f), Some(b)) => Ok(Some(region_report(s, f, b)?)),
        _ => Ok(None),
    }
}

pub fn cmd_sweep(cfg: &RunConfig, seed: u64, jobs: usize, out_dir: &Path) -> Result<SweepOutput> {
    let s = run_sweep(cfg, seed, jobs)?;
    for (p, m) in &s.runs {
        write(&out_dir.join(p.file_name()), &m.to_json())?;
    }
    write(&out_dir.join("sweep.csv"), &s.report.to_csv())?;
    if let Some(rows) = &s.report.regions {
        write(&out_dir.join("regions.csv"), &region_csv(rows))?;
    }
    Ok(s)
}

/// Metrics files named directly, plus every `*.json` in named directories
/// in file-name order.
pub fn collect_metrics(paths: &[PathBuf]) -> Result<Vec<Metrics>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no metrics files to report on");
    }
    files
        .iter()
        .map(|f| {
            let text =
                fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            Metrics::from_json(&text).with_context(|| format!("parsing {}", f.display()))
        })
        .collect()
}

pub fn cmd_report(paths: &[PathBuf], cfg: &RunConfig) -> Result<ComparisonReport> {
    cfg.cost.validate()?;
    assemble_report(&collect_metrics(paths)?, cfg)
}

/// Generates a combo trace from a spec file, or the default combo.
/// `seed` overrides the spec's own seed.
pub fn cmd_gen(spec: Option<&Path>, seed: Option<u64>) -> Result<String> {
    let combo = match spec {
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let has_seed = kv::parse_kv(&text)
                .with_context(|| format!("in {}", p.display()))?
                .contains_key("seed");
            let seed = match seed {
                Some(s) => Some(s),
                None if has_seed => None,
                None => Some(RunConfig::default().resolve_seed(None)?),
            };
            ComboSpec::from_kv(&text, seed).with_context(|| format!("in {}", p.display()))?
        }
        None => ComboSpec::default_combo(RunConfig::default().resolve_seed(seed)?),
    };
    let (trace, _) = gen_combo(&combo)?;
    Ok(serialize_trace(&trace))
}

pub fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
