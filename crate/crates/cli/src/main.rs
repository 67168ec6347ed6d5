use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use vsa_core::estimator::{throughput_report, DeploymentFile, FabricCapacity, LayerRates};
use vsa_core::fabric::{build_inventory, plan_inventory, tiling_csv, MacroConstraints};
use vsa_core::mgmt::cli_session;
use vsa_core::sim::{explain_latency, header_growth, measure_latency, spawn_engine, Engine, Scenario};
use vsa_core::types::{PHYS_LANES, PS_PER_MS};

#[derive(Parser)]
#[command(name = "vsa", version, about = "Switch virtualization platform simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and report goodput, drops and latency.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Directory for CSV reports.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every processed event to events.log.
        #[arg(long)]
        log_events: bool,
        /// Print the unloaded per-hop latency of each deployed pipeline.
        #[arg(long)]
        explain_latency: bool,
    },
    /// Print the layer throughput table, optionally for a deployment file.
    Estimate {
        #[arg(long)]
        deployment: Option<PathBuf>,
    },
    /// Print the FIFO inventory and its memory tiling.
    PlanFifos {
        #[arg(long, default_value_t = 26)]
        slots: usize,
        #[arg(long, default_value_t = PHYS_LANES)]
        lanes: usize,
    },
    /// Management shell attached to a paused engine; `run <duration>` advances it.
    Shell {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Batch file of commands instead of standard input.
        #[arg(long)]
        script: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { scenario, out, log_events, explain_latency } => {
            simulate(scenario, out, log_events, explain_latency)
        }
        Command::Estimate { deployment } => estimate(deployment),
        Command::PlanFifos { slots, lanes } => plan_fifos(slots, lanes),
        Command::Shell { scenario, script } => shell(scenario, script),
    }
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::from_file(path).map_err(|e| anyhow::anyhow!("{e}"))
}

fn simulate(path: PathBuf, out: Option<PathBuf>, log_events: bool, explain: bool) -> Result<()> {
    let mut sc = load(&path)?;
    sc.log_events = log_events;
    let frame_len = sc.traffic.first().map_or(1518, |t| t.size.bounds().0);
    let engine = Engine::new(sc.clone()).map_err(|e| anyhow::anyhow!("{e}"))?;
    let result = engine.run();
    let m = &result.metrics;
    print!("{}", m.summary());
    if explain {
        let lat = measure_latency(m);
        let names: BTreeSet<&str> = sc.deploy.iter().map(|(_, n)| n.as_str()).collect();
        for name in names {
            let spec = &sc.specs[name];
            let b = explain_latency(spec, 1.0, frame_len, frame_len + header_growth(spec));
            println!("\nunloaded latency, {name}, {frame_len} B:");
            print!("{}", b.render());
            let measured =
                sc.deploy.iter().filter(|(_, n)| n == name).filter_map(|(s, _)| lat.get(s).map(|l| l.min)).min();
            if let Some(min) = measured {
                println!("  {:<24}{:>10} ps", "measured minimum", min);
            }
        }
    }
    if let Some(dir) = out {
        m.write_dir(&dir, result.event_log.as_deref()).with_context(|| format!("writing {}", dir.display()))?;
        println!("\nreports written to {}", dir.display());
    }
    let v = m.conservation_violations();
    if !v.is_empty() {
        bail!("conservation violated: {}", v.join("; "));
    }
    Ok(())
}

fn estimate(path: Option<PathBuf>) -> Result<()> {
    let (rates, cap, dep) = match path {
        None => (LayerRates::default(), FabricCapacity::default(), None),
        Some(p) => {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            let f = DeploymentFile::parse(&text)?;
            (f.rates.unwrap_or_default(), f.capacity.unwrap_or_default(), Some(f.expand()?))
        }
    };
    print!("{}", throughput_report(&rates, &cap, dep.as_deref()));
    Ok(())
}

fn plan_fifos(slots: usize, lanes: usize) -> Result<()> {
    let inv = build_inventory(slots, lanes, 2)?;
    let plans = plan_inventory(&inv, &MacroConstraints::default())?;
    print!("{}", tiling_csv(&plans));
    let bits: u64 = inv.iter().map(|f| f.capacity_bits()).sum();
    println!("# {} fifos, {} payload bits ({} bytes)", inv.len(), bits, bits / 8);
    Ok(())
}

fn shell(scenario: Option<PathBuf>, script: Option<PathBuf>) -> Result<()> {
    let sc = match &scenario {
        Some(p) => load(p)?,
        None => Scenario::new(1000 * PS_PER_MS),
    };
    let engine = Engine::new(sc).map_err(|e| anyhow::anyhow!("{e}"))?;
    let (mut host, handle) = spawn_engine(engine);
    let mut out = io::stdout();
    match script {
        Some(p) => {
            let f = File::open(&p).with_context(|| format!("opening {}", p.display()))?;
            cli_session(BufReader::new(f), &mut host, &mut out, true)?;
        }
        None => cli_session(io::stdin().lock(), &mut host, &mut out, false)?,
    }
    drop(host);
    handle.join().map_err(|_| anyhow::anyhow!("engine thread panicked"))?;
    Ok(())
}
