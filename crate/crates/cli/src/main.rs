use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use slapsim_cli::{cmd_gen, cmd_report, cmd_run, cmd_sweep, summary_line, write_output, RunConfig};
use slapsim_core::kv;
use slapsim_core::metrics::region_csv;

#[derive(Parser)]
#[command(name = "slapsim", version, about = "Lock-step vs split-pipeline VLIW simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one machine and write its metrics JSON.
    Run(Common),
    /// Run flat, lock-step and SLAP over the FIFO depth × cache size grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads.
        #[arg(long, short = 'j', default_value_t = 1)]
        jobs: usize,
    },
    /// Write a synthetic combo trace.
    Gen {
        /// Combo spec file; the default five-region combo if omitted.
        spec: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rebuild the comparison table from metrics files or sweep directories.
    Report {
        paths: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit JSON (table plus region rows) instead of CSV.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// flat, lockstep, slap or pool.
    #[arg(long)]
    machine: Option<String>,
    /// Metrics file for `run`, output directory for `sweep`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn load_config(path: Option<&PathBuf>, sets: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for s in sets {
        let (k, v) = kv::parse_pair(s).with_context(|| format!("--set {s}"))?;
        cfg.set(&k, &v).with_context(|| format!("--set {s}"))?;
    }
    Ok(cfg)
}

impl Common {
    fn config(&self) -> Result<(RunConfig, u64)> {
        let mut cfg = load_config(self.config.as_ref(), &self.set)?;
        if let Some(t) = &self.trace {
            cfg.trace = Some(t.clone());
        }
        if let Some(m) = &self.machine {
            cfg.set("machine", m)?;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        let seed = cfg.resolve_seed(self.seed)?;
        Ok((cfg, seed))
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("slapsim: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run(c) => {
            let (cfg, seed) = c.config()?;
            let (m, out) = cmd_run(&cfg, seed)?;
            println!("{}", summary_line(&m, &out));
        }
        Cmd::Sweep { common, jobs } => {
            let (cfg, seed) = common.config()?;
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("sweep"));
            let s = cmd_sweep(&cfg, seed, jobs, &dir)?;
            print!("{}", s.report.to_csv());
            if let Some(rows) = &s.report.regions {
                print!("{}", region_csv(rows));
            }
        }
        Cmd::Gen { spec, out, seed } => {
            let text = cmd_gen(spec.as_deref(), seed)?;
            write_output(out.as_deref(), &text)?;
        }
        Cmd::Report {
            paths,
            config,
            set,
            out,
            json,
        } => {
            let cfg = load_config(config.as_ref(), &set)?;
            let r = cmd_report(&paths, &cfg)?;
            let text = if json { r.to_json() } else { r.to_csv() };
            write_output(out.as_deref(), &text)?;
        }
    }
    Ok(())
}
