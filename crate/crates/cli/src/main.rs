use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use colony_cli::commands::{self, Status};
use colony_cli::config::RunConfig;

/// Chemotaxis–growth colony simulator.
#[derive(Parser)]
#[command(name = "colony", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set grid.nx=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        Ok(match &self.config {
            Some(path) => RunConfig::load(path, &self.overrides)?,
            None => RunConfig::from_text("", &self.overrides, std::path::Path::new("."))?,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the spatial simulation.
    Run(ConfigArgs),
    /// Integrate the spatially homogeneous system to its steady state.
    Kinetics(ConfigArgs),
    /// Check the configured nonlinearities against the model assumptions.
    ValidateModel {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Upper end of the sampled interval.
        #[arg(long, default_value_t = 10.0)]
        s_max: f64,
        #[arg(long, default_value_t = 10001)]
        samples: usize,
    },
    /// Sweep initial mass and width in the parabolic–elliptic setting.
    BlowupScan(ConfigArgs),
    /// Write gridded u and u+w data from a snapshot.
    EmitPlot {
        /// Directory holding snapshot files.
        #[arg(long)]
        dir: PathBuf,
        /// Snapshot time.
        #[arg(long)]
        time: f64,
        /// Where to write the data files (default: the snapshot directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify pure-diffusion decay against the first Neumann eigenvalue.
    Eigencheck(ConfigArgs),
}

fn dispatch(cmd: Command) -> Result<Status> {
    let stdout = std::io::stdout();
    let out = &mut stdout.lock();
    let status = match cmd {
        Command::Run(a) => commands::cmd_run(&a.load()?, out)?.status,
        Command::Kinetics(a) => {
            commands::cmd_kinetics(&a.load()?, out)?;
            Status::Success
        }
        Command::ValidateModel { cfg, s_max, samples } => commands::cmd_validate_model(&cfg.load()?, s_max, samples, out)?.1,
        Command::BlowupScan(a) => {
            commands::cmd_blowup_scan(&a.load()?, out)?;
            Status::Success
        }
        Command::EmitPlot { dir, time, out: target } => {
            let target = target.unwrap_or_else(|| dir.clone());
            commands::cmd_emit_plot(&dir, time, &target, out)?;
            Status::Success
        }
        Command::Eigencheck(a) => commands::cmd_eigencheck(&a.load()?, out)?.1,
    };
    out.flush()?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
