//! Command-line front end: loads a TOML experiment file, runs one pipeline
//! and writes its CSV tables plus a `manifest.json` into the output directory.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipelines;
pub mod validation;

use std::path::PathBuf;

use clap::{ArgAction, Parser, Subcommand};
use mcp_core::{Link, Unit};
use serde_json::Value;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use manifest::{emit_csv, FileEntry, Manifest};

/// Seed used when neither the flag nor the file sets one.
pub const DEFAULT_SEED: u64 = 1;

#[derive(Clone, Debug, Parser)]
#[command(
    name = "mcp",
    version,
    about = "Two-cell limited-cooperation experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment file; missing tables use defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random draw; overrides the file.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory; overrides the file. Default `out`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Rate unit of the written tables; overrides the file.
    #[arg(long, global = true, value_parser = parse_unit)]
    pub unit: Option<Unit>,
    /// Print progress to stderr; repeat for more.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

fn parse_unit(s: &str) -> std::result::Result<Unit, String> {
    s.parse().map_err(|e: mcp_core::Error| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Joint rates of both MACs over a power grid.
    MiSurface,
    /// Error covariances and rates over an snr sweep.
    Mmse,
    /// Power allocation by one solver.
    Power,
    /// Precoders of both MACs and the min-max selection.
    Precode,
    /// Uplink trace.
    SimUl,
    /// Downlink trace with prediction.
    SimDl,
    /// The acceptance suite.
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::MiSurface => "mi-surface",
            Command::Mmse => "mmse",
            Command::Power => "power",
            Command::Precode => "precode",
            Command::SimUl => "sim-ul",
            Command::SimDl => "sim-dl",
            Command::Validate => "validate",
        }
    }
}

/// A fully resolved run.
#[derive(Clone, Debug)]
pub struct Request {
    pub command: Command,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub unit: Unit,
    pub out: PathBuf,
    pub verbosity: u8,
}

impl Request {
    /// Merges the flags over the file; flags win.
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let config = match &cli.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        Ok(Self {
            command: cli.command,
            seed: cli.seed.or(config.seed).unwrap_or(DEFAULT_SEED),
            unit: cli.unit.or(config.unit).unwrap_or_default(),
            out: cli
                .out
                .clone()
                .or_else(|| config.out.clone())
                .unwrap_or_else(|| "out".into()),
            verbosity: cli.verbose.max(config.verbosity.unwrap_or(0)),
            config,
        })
    }
}

fn section(req: &Request) -> Result<Value> {
    let c = &req.config;
    Ok(match req.command {
        Command::MiSurface => serde_json::to_value(&c.mi_surface)?,
        Command::Mmse => serde_json::to_value(&c.mmse)?,
        Command::Power => serde_json::to_value(&c.power)?,
        Command::Precode => serde_json::to_value(&c.precode)?,
        Command::SimUl | Command::SimDl => serde_json::to_value(&c.sim)?,
        Command::Validate => serde_json::to_value(&c.validate)?,
    })
}

/// Runs the pipeline, writes its files and the manifest, and returns the manifest.
pub fn run_experiment(req: &Request) -> Result<Manifest> {
    let c = &req.config;
    if req.verbosity > 0 {
        eprintln!(
            "mcp {}: seed {}, output {}",
            req.command.name(),
            req.seed,
            req.out.display()
        );
    }
    let output = match req.command {
        Command::MiSurface => pipelines::mi_surface(&c.mi_surface, req.unit)?,
        Command::Mmse => pipelines::mmse(&c.mmse, req.unit)?,
        Command::Power => pipelines::power(&c.power, req.seed, req.unit)?,
        Command::Precode => pipelines::precode(&c.precode, req.unit)?,
        Command::SimUl => pipelines::sim(&c.sim, Link::Uplink, req.seed, req.unit)?,
        Command::SimDl => pipelines::sim(&c.sim, Link::Downlink, req.seed, req.unit)?,
        Command::Validate => pipelines::validate(c, req.verbosity > 0)?,
    };
    std::fs::create_dir_all(&req.out).map_err(|source| Error::Io {
        path: req.out.clone(),
        source,
    })?;
    let mut files = Vec::new();
    for (name, table) in &output.tables {
        let entry = emit_csv(&req.out, name, table)?;
        if req.verbosity > 0 {
            eprintln!(
                "wrote {} ({} rows)",
                req.out.join(name).display(),
                entry.rows
            );
        }
        files.push(entry);
    }
    let manifest = Manifest {
        command: req.command.name().to_string(),
        seed: req.seed,
        unit: req.unit,
        config: section(req)?,
        files,
        warnings: output.warnings,
        summary: output.summary,
    };
    manifest.write(&req.out)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(manifest)
}
