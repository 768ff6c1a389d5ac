use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{load_file, resolve, FileConfig, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "edg-lab", version, about = "Exchange-driven growth on the complete graph: particle ensembles, mean-field integration and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble of particle systems and write trajectories and summaries.
    Simulate(Common),
    /// Integrate the mean-field equation.
    Ode(Common),
    /// Follow a tagged particle and compare its law with the limit.
    Tagged(Common),
    /// Run the verification checks; exits nonzero if any fails.
    Verify(Common),
    /// Fit coarsening laws over gamma values and study absorption over L.
    Scaling(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML (key = value with [sections]) or JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replica parallelism.
    #[arg(long, env = "EDG_LAB_JOBS")]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Product kernel exponent; replaces any kernel table.
    #[arg(long)]
    gamma: Option<f64>,
    /// Number of sites.
    #[arg(long = "L")]
    sites: Option<usize>,
    /// Density; sets N = round(rho * L).
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Observation grid "t0:t1:dt".
    #[arg(long)]
    grid: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => load_file(path)?,
            None => FileConfig::default(),
        };
        resolve(
            file,
            &Overrides {
                seed: self.seed,
                jobs: self.jobs,
                out: self.out.clone(),
                gamma: self.gamma,
                sites: self.sites,
                rho: self.rho,
                t_end: self.t_end,
                replicas: self.replicas,
                grid: self.grid.clone(),
            },
        )
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(c) => commands::simulate(&c.resolve()?).map(|_| true),
        Command::Ode(c) => commands::ode(&c.resolve()?).map(|_| true),
        Command::Tagged(c) => commands::tagged(&c.resolve()?).map(|_| true),
        Command::Verify(c) => commands::verify(&c.resolve()?),
        Command::Scaling(c) => commands::scaling(&c.resolve()?).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
