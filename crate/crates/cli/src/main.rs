mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::json;

use config::{Mode, RunConfig};
use output::OutDir;

/// Pseudo-Lindblad optimization, master-equation integration and sign-bit
/// quantum trajectories.
#[derive(Parser, Debug)]
#[command(name = "pseudolind", version)]
struct Cli {
    #[arg(value_enum)]
    command: Mode,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `run.master_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.run.master_seed = seed;
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    cfg.validate(cli.command)?;
    cfg.mode = Some(cli.command);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .context("building thread pool")?;
    let threads = pool.current_num_threads();

    let mut out = OutDir::create(&cfg.output.dir)?;
    let start = Instant::now();
    let summary = pool.install(|| match cli.command {
        Mode::Optimize => commands::optimize(&cfg, &mut out),
        Mode::Evolve => commands::evolve(&cfg, &mut out),
        Mode::Plqt => commands::plqt(&cfg, &mut out),
        Mode::Rates => commands::rates(&cfg, &mut out),
        Mode::HpzCheck => commands::hpz_check(&cfg, &mut out),
    })?;
    let wall = start.elapsed().as_secs_f64();

    // Rerunning with this file reproduces the outputs bit for bit.
    out.json("resolved_config.json", &cfg)?;
    let manifest = json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "master_seed": cfg.run.master_seed,
        "threads": threads,
        "wall_time_s": wall,
        "outputs": out.written(),
        "config": &cfg,
        "summary": &summary,
    });
    out.json("manifest.json", &manifest)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    eprintln!("wrote {} files to {}", out.written().len(), out.path().display());
    Ok(())
}
