//! Command-line front end of the `allelopathy` crate: configuration,
//! mode dispatch and output files with a hash manifest.

pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;

use anyhow::Result;

pub use commands::Outcome;
pub use config::{ConfigError, Mode, RunConfig};
pub use output::{Manifest, Outputs};

/// Name of the echoed configuration in the output directory.
pub const CONFIG_ECHO: &str = "config.toml";

/// Runs `cfg`, writing every output and the manifest into `dir`.
pub fn execute(cfg: &RunConfig, dir: &Path) -> Result<(Outcome, Manifest)> {
    let mut out = Outputs::create(dir)?;
    out.write(CONFIG_ECHO, cfg.to_toml().as_bytes())?;
    let outcome = commands::dispatch(cfg, &mut out)?;
    let manifest = out.finish()?;
    Ok((outcome, manifest))
}
