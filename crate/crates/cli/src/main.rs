use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use photon_pinn_cli::{cmd_cost, cmd_eval, cmd_mesh_demo, cmd_train};

#[derive(Parser)]
#[command(name = "photon-pinn", version, about = "Photonic PINN training simulator")]
struct Cli {
    /// Worker threads for evaluation (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory; overrides the config's `out_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a chip on-chip with SPSA sign-SGD.
    Train { config: PathBuf },
    /// Re-evaluate a checkpoint on fresh points.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n_val: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Hardware cost report for a config.
    Cost { config: PathBuf },
    /// Decompose a random orthogonal matrix into an MZI mesh and rebuild it.
    MeshDemo {
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot start thread pool: {e}");
        return ExitCode::from(1);
    }
    let out = cli.out_dir.as_deref();
    let result = match &cli.command {
        Command::Train { config } => cmd_train(config, out),
        Command::Eval {
            checkpoint,
            n_val,
            seed,
        } => cmd_eval(checkpoint, *n_val, *seed),
        Command::Cost { config } => cmd_cost(config, out),
        Command::MeshDemo { n, seed } => cmd_mesh_demo(*n, *seed),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
