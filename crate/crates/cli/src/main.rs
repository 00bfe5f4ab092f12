use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eventum_cli::{
    cmd_commutant, cmd_embed, cmd_geiger, cmd_simulate, cmd_verify, parse_complex, EmbedArgs,
    GeigerArgs, SimulateArgs, DEFAULT_TOLERANCE,
};
use num_complex::Complex64;

/// Simulate and verify compatible classical-quantum worlds.
#[derive(Parser)]
#[command(name = "eventum", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model or raw unitary for compatibility. Exit 0 iff compatible.
    Verify {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Sample trajectories and write a run record.
    Simulate {
        model: PathBuf,
        state: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        ntraj: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Omit per-trajectory records.
        #[arg(long)]
        summary_only: bool,
    },
    /// Embed a Kraus family into a system, apparatus and environment-ring model.
    Embed {
        kraus: PathBuf,
        #[arg(long)]
        cells: usize,
        /// Defaults to half the ring.
        #[arg(long)]
        classical_cells: Option<usize>,
        #[arg(long)]
        gated: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        unitary_out: Option<PathBuf>,
    },
    /// Commutant dimension, commutativity and centre of a generator set.
    Commutant {
        generators: PathBuf,
        /// Also print the commutant basis as a generators document.
        #[arg(long)]
        basis: bool,
    },
    /// Geiger counter click statistics and no-click posteriors.
    Geiger {
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        alpha: Complex64,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        beta: Complex64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        horizon: usize,
        /// Also sample this many trajectories for a click-time histogram.
        #[arg(long)]
        ntraj: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify { file, tolerance } => cmd_verify(&file, tolerance),
        Command::Simulate {
            model,
            state,
            steps,
            ntraj,
            seed,
            out,
            summary_only,
        } => cmd_simulate(&SimulateArgs {
            model,
            state,
            steps,
            n_traj: ntraj,
            seed,
            out,
            summary_only,
        }),
        Command::Embed {
            kraus,
            cells,
            classical_cells,
            gated,
            out,
            unitary_out,
        } => cmd_embed(&EmbedArgs {
            kraus,
            cells,
            classical_cells,
            gated,
            out,
            unitary_out,
        }),
        Command::Commutant { generators, basis } => cmd_commutant(&generators, basis),
        Command::Geiger {
            alpha,
            beta,
            gamma,
            horizon,
            ntraj,
            seed,
            out,
        } => cmd_geiger(&GeigerArgs {
            alpha,
            beta,
            gamma,
            horizon,
            n_traj: ntraj,
            seed,
            out,
        }),
    };
    match result {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            ExitCode::from(outcome.status.code() as u8)
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.status.code() as u8)
        }
    }
}
