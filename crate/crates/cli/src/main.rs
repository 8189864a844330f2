//! `cpwl-geom`: config-driven experiments on the local geometry of CPWL generators.

mod commands;
mod run;
mod specs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{run_command, Overrides};

#[derive(Parser)]
#[command(name = "cpwl-geom", version, about = "Local geometry descriptors of CPWL generative models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for grid and per-sample evaluation. Outputs do not depend on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the toy R² → R³ surface generator.
    TrainToy(Common),
    /// Train a VAE on digit images.
    TrainVae(Common),
    /// Train a 2-D DDPM on a toy distribution.
    TrainDdpm(Common),
    /// ψ, ν and δ at a set of latents.
    Descriptors(Common),
    /// Descriptor fields on a grid over a 2-D slice.
    Grid(Common),
    /// Exact linear-region partition of a 2-D slice as polygon JSON.
    Slice(Common),
    /// Out-of-distribution scoring by ψ and ν.
    Ood(Common),
    /// Descriptor trends over VAE training at several data-noise levels.
    Dynamics(Common),
    /// Descriptors along DDPM reverse trajectories.
    Trajectory(Common),
    /// Train the binned-ψ reward classifier on noisy latents.
    TrainReward(Common),
    /// Reward-guided DDPM sampling over a grid of step sizes.
    Guide(Common),
    /// Vendi diversity of descriptor level sets.
    Report(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let dispatch = |c: &Common, f: fn(&std::path::Path, &Overrides) -> run::CliResult<()>| {
        f(
            &c.config,
            &Overrides {
                out: c.out.clone(),
                seed: c.seed,
                workers: c.workers,
            },
        )
    };
    let result = match &cli.command {
        Cmd::TrainToy(c) => dispatch(c, run_command::<commands::TrainToy>),
        Cmd::TrainVae(c) => dispatch(c, run_command::<commands::TrainVae>),
        Cmd::TrainDdpm(c) => dispatch(c, run_command::<commands::TrainDdpm>),
        Cmd::Descriptors(c) => dispatch(c, run_command::<commands::Descriptors>),
        Cmd::Grid(c) => dispatch(c, run_command::<commands::Grid>),
        Cmd::Slice(c) => dispatch(c, run_command::<commands::Slice>),
        Cmd::Ood(c) => dispatch(c, run_command::<commands::Ood>),
        Cmd::Dynamics(c) => dispatch(c, run_command::<commands::Dynamics>),
        Cmd::Trajectory(c) => dispatch(c, run_command::<commands::Trajectory>),
        Cmd::TrainReward(c) => dispatch(c, run_command::<commands::TrainReward>),
        Cmd::Guide(c) => dispatch(c, run_command::<commands::Guide>),
        Cmd::Report(c) => dispatch(c, run_command::<commands::Report>),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
