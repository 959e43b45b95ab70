//! Command-line front end: argument parsing, configuration and the
//! individual commands. `main.rs` only maps the result to an exit code.

mod commands;
pub mod config;
pub mod error;
pub mod figure;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gradfield", version, about = "Point clouds from learned gradient fields of log-density")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// key=value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random seed (overrides the `seed` key)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides the `out` key)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override any config key, e.g. `--set n=1000`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic shapes to files
    #[command(after_help = help(config::GEN_DATA))]
    GenData(Common),
    /// Train encoder and score decoder on a set of clouds
    #[command(after_help = help(config::TRAIN))]
    Train(Common),
    /// Draw points by annealed Langevin dynamics
    #[command(after_help = help(config::SAMPLE))]
    Sample(Common),
    /// Extract a 2D iso-contour or filter candidate surface points
    #[command(after_help = help(config::EXTRACT))]
    Extract(Common),
    /// Sphere-trace the iso-surface of a 3D field into a PPM image
    #[command(after_help = help(config::RENDER))]
    Render(Common),
    /// Compare clouds (or directories of clouds) with CD, EMD and set metrics
    #[command(after_help = help(config::EVAL))]
    Eval {
        #[command(flatten)]
        common: Common,
        /// Reference cloud file or directory (overrides `reference`)
        reference: Option<PathBuf>,
        /// Generated cloud file or directory (overrides `generated`)
        generated: Option<PathBuf>,
    },
    /// Plot log-density (or distance) heatmaps with gradient arrows
    #[command(after_help = help(config::FIELD_VIZ))]
    FieldViz(Common),
}

fn help(groups: &[&[config::Key]]) -> String {
    config::help_text(groups)
}

fn resolve(groups: &[&[config::Key]], c: &Common, extra: &[String]) -> Result<config::Config, CliError> {
    let mut sets = c.sets.clone();
    sets.extend_from_slice(extra);
    config::Config::resolve(groups, c.config.as_deref(), &sets, c.seed, c.out.as_deref())
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(c) => commands::gen_data(&resolve(config::GEN_DATA, &c, &[])?),
        Command::Train(c) => commands::train(&resolve(config::TRAIN, &c, &[])?),
        Command::Sample(c) => commands::sample(&resolve(config::SAMPLE, &c, &[])?),
        Command::Extract(c) => commands::extract(&resolve(config::EXTRACT, &c, &[])?),
        Command::Render(c) => commands::render(&resolve(config::RENDER, &c, &[])?),
        Command::Eval {
            common,
            reference,
            generated,
        } => {
            let mut extra = Vec::new();
            if let Some(r) = reference {
                extra.push(format!("reference={}", r.display()));
            }
            if let Some(g) = generated {
                extra.push(format!("generated={}", g.display()));
            }
            commands::eval(&resolve(config::EVAL, &common, &extra)?)
        }
        Command::FieldViz(c) => commands::field_viz(&resolve(config::FIELD_VIZ, &c, &[])?),
    }
}
