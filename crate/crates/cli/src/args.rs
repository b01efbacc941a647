use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Command;
use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "porofeti", version, about = "Coupled poroelastic/elastic simulations with FETI domain decomposition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// March one scenario in time and write VTK snapshots and solver logs.
    Solve(Flags),
    /// Manufactured-solution convergence study.
    Converge(Flags),
    /// Barry-Mercer benchmark with the pressure oscillation check.
    BarryMercer(Flags),
}

/// Every flag overrides the key of the same name in the config file.
#[derive(Debug, Args, Default)]
pub struct Flags {
    /// `key = value` file applied before the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// mms or barry-mercer (solve only).
    #[arg(long)]
    pub scenario: Option<String>,
    /// Cells per unit length.
    #[arg(long)]
    pub mesh: Option<String>,
    /// Comma separated mesh sequence of the convergence study.
    #[arg(long)]
    pub meshes: Option<String>,
    #[arg(long = "fe-order")]
    pub fe_order: Option<String>,
    #[arg(long)]
    pub nu: Option<String>,
    /// Young's modulus.
    #[arg(long = "E")]
    pub young: Option<String>,
    #[arg(long)]
    pub dt: Option<String>,
    /// Final time.
    #[arg(long = "T")]
    pub t_end: Option<String>,
    /// feti-generalized, feti-schur or monolithic.
    #[arg(long)]
    pub solver: Option<String>,
    #[arg(long)]
    pub tol: Option<String>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    /// Write every n-th snapshot.
    #[arg(long)]
    pub stride: Option<String>,
}

impl Flags {
    pub fn overrides(&self) -> Vec<(&'static str, &str)> {
        [
            ("scenario", &self.scenario),
            ("mesh", &self.mesh),
            ("meshes", &self.meshes),
            ("fe-order", &self.fe_order),
            ("nu", &self.nu),
            ("E", &self.young),
            ("dt", &self.dt),
            ("T", &self.t_end),
            ("solver", &self.solver),
            ("tol", &self.tol),
            ("max-iters", &self.max_iters),
            ("out", &self.out),
            ("stride", &self.stride),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }

    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        RunConfig::resolve(self.config.as_deref(), self.overrides())
    }
}

impl Cmd {
    pub fn split(&self) -> (Command, &Flags) {
        match self {
            Cmd::Solve(f) => (Command::Solve, f),
            Cmd::Converge(f) => (Command::Converge, f),
            Cmd::BarryMercer(f) => (Command::BarryMercer, f),
        }
    }
}
