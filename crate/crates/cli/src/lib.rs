//! Batch front end for the `sbmap` runs: configuration, presets, dispatch and
//! artifact writing.

pub mod checks;
pub mod config;
pub mod output;
pub mod presets;
pub mod run;

use std::path::{Path, PathBuf};

use clap::Parser;

use crate::config::{ConfigError, RunConfig};
use crate::run::{RunError, RunSummary, Subcommand};

/// Default output root when neither `--out` nor `run.out` is set.
pub const OUT_ENV: &str = "SBMAP_OUT";
pub const DEFAULT_OUT: &str = "sbmap-out";

#[derive(Debug, Parser)]
#[command(name = "sbmap", version, about = "Regulated long-time spin-boson dynamics")]
pub struct Cli {
    /// What to run; falls back to `run.subcommand` in the configuration.
    #[arg(value_enum)]
    pub subcommand: Option<Subcommand>,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named parameter set; expands before the file and overrides.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for angle sweeps.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// `section.key=value`, applied last (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Print the preset table and exit.
    #[arg(long)]
    pub list_presets: bool,
}

/// Directory of one configuration: an explicit directory is used as is for a
/// single run; otherwise each run gets `<root>/<label>`.
pub fn output_dir(cli_out: Option<&Path>, cfg: &RunConfig, runs: usize, env_root: Option<&str>) -> PathBuf {
    let explicit = cli_out.map(Path::to_path_buf).or_else(|| cfg.run.out.as_ref().map(PathBuf::from));
    match explicit {
        Some(dir) if runs == 1 => dir,
        Some(dir) => dir.join(cfg.label()),
        None => PathBuf::from(env_root.unwrap_or(DEFAULT_OUT)).join(cfg.label()),
    }
}

pub fn preset_table() -> String {
    let mut out = String::from("preset           variant  s        lambda2  xi     delta_phi  t_max\n");
    for p in presets::PRESETS {
        for v in p.variants {
            let mark = if p.default == Some(v.label) { "*" } else { "" };
            out.push_str(&format!(
                "{:<16} {:<8} {:<8.4} {:<8} {:<6} {:<10} {}\n",
                p.name,
                format!("{}{mark}", v.label),
                v.s,
                v.lambda2,
                v.xi,
                v.delta_phi,
                v.t_max
            ));
        }
    }
    out
}

/// Resolves configurations and runs them; returns one summary per run.
pub fn execute(cli: &Cli) -> Result<Vec<RunSummary>, RunError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| {
            ConfigError::Syntax(format!("cannot read {}: {e}", path.display()))
        })?,
        None => String::new(),
    };
    if cli.config.is_none() && cli.preset.is_none() {
        return Err(ConfigError::Syntax("nothing to run: give --config or --preset".into()).into());
    }
    let configs = config::expand(&text, cli.preset.as_deref(), &cli.overrides)?;
    let env_root = std::env::var(OUT_ENV).ok();
    let mut summaries = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let cmd = match (cli.subcommand, &cfg.run.subcommand) {
            (Some(c), _) => c,
            (None, Some(name)) => name.parse()?,
            (None, None) => {
                return Err(ConfigError::Invalid {
                    field: "run.subcommand".into(),
                    message: "no subcommand given".into(),
                }
                .into())
            }
        };
        let dir = output_dir(cli.out.as_deref(), cfg, configs.len(), env_root.as_deref());
        summaries.push(run::run(cmd, cfg, &dir, cli.threads)?);
    }
    Ok(summaries)
}
