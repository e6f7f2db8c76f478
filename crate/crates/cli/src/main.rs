use std::path::PathBuf;
use std::process::ExitCode;

use allelo::config::{apply_override, parse_tree, read_tree, set_path};
use allelo::{execute, Mode, RunConfig};
use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "allelo",
    version,
    about = "Multitype contact process with frozen states"
)]
struct Cli {
    #[command(subcommand)]
    mode: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward simulation with density series and PGM snapshots.
    Simulate(Common),
    /// Several parameter variants on one representation, with domination checks.
    Couple(Common),
    /// Dual colors against the forward run, dual tree export.
    DualCheck(Common),
    /// Mean-field fixed points, stability and a trajectory.
    Meanfield(Common),
    /// Mean-field phase map over a parameter grid.
    Sweep(Common),
    /// Block occupancy and blocking experiments.
    Blocks(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (relative paths go under $ALLELO_OUT when set).
    #[arg(short, long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replica-level parallelism.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    lambda1: Option<String>,
    #[arg(long)]
    lambda2: Option<String>,
    /// Thaw rate; `inf` for instant thaw.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    /// Torus sides, e.g. `200x200`.
    #[arg(long)]
    sides: Option<String>,
    /// e.g. `product(0,0.5,0.5,0)`, `all-2`, `single-seed(1)`.
    #[arg(long)]
    initial: Option<String>,
    /// Any other key, as `key.path=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn split(cmd: Command) -> (Mode, Common) {
    match cmd {
        Command::Simulate(c) => (Mode::Simulate, c),
        Command::Couple(c) => (Mode::Couple, c),
        Command::DualCheck(c) => (Mode::DualCheck, c),
        Command::Meanfield(c) => (Mode::Meanfield, c),
        Command::Sweep(c) => (Mode::Sweep, c),
        Command::Blocks(c) => (Mode::Blocks, c),
    }
}

fn resolve(mode: Mode, c: &Common) -> Result<RunConfig> {
    let mut tree = match &c.config {
        Some(p) => read_tree(p)?,
        None => parse_tree("")?,
    };
    set_path(&mut tree, "mode", mode.name().into())?;
    let num = |s: &String| -> toml::Value { s.clone().into() };
    let mut flags: Vec<(&str, toml::Value)> = Vec::new();
    if let Some(s) = c.seed {
        flags.push(("seed", toml::Value::Integer(s as i64)));
    }
    if let Some(o) = &c.out {
        flags.push(("output", o.clone().into()));
    }
    for (key, v) in [
        ("params.lambda1", &c.lambda1),
        ("params.lambda2", &c.lambda2),
        ("params.gamma", &c.gamma),
        ("horizon", &c.horizon),
    ] {
        if let Some(v) = v {
            flags.push((key, num(v)));
        }
    }
    if let Some(s) = &c.sides {
        let sides = s
            .split(['x', ','])
            .map(|t| {
                t.trim()
                    .parse::<i64>()
                    .map(toml::Value::Integer)
                    .map_err(|_| anyhow::anyhow!("`sides`: cannot parse `{s}`"))
            })
            .collect::<Result<Vec<_>>>()?;
        flags.push(("sides", toml::Value::Array(sides)));
    }
    if let Some(i) = &c.initial {
        flags.push(("initial", i.clone().into()));
    }
    for (k, v) in flags {
        set_path(&mut tree, k, v)?;
    }
    for s in &c.set {
        apply_override(&mut tree, s)?;
    }
    Ok(RunConfig::from_tree(tree)?)
}

fn main() -> ExitCode {
    let (mode, common) = split(Cli::parse().mode);
    match run(mode, &common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(mode: Mode, common: &Common) -> Result<bool> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()?;
    }
    let cfg = resolve(mode, common)?;
    println!("seed: {}", cfg.seed);
    let dir = cfg.output_dir();
    let (outcome, manifest) = execute(&cfg, &dir)?;
    for l in &outcome.lines {
        println!("{l}");
    }
    println!(
        "wrote {} files to {}",
        manifest.files.len() + 1,
        dir.display()
    );
    if !outcome.ok {
        eprintln!("a built-in check failed; see the reports");
    }
    Ok(outcome.ok)
}
