use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use torus_mfg_cli::commands::{self, Globals};

/// Mean-field-game equilibria on the flat torus.
#[derive(Parser)]
#[command(name = "torus-mfg", version)]
struct Cli {
    /// Worker threads for the Monte-Carlo oracles (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Oracle seed; overrides `oracles.seed` of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print nothing but errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for an equilibrium and write its bundle.
    Solve {
        config: PathBuf,
        /// Bundle directory (default: $TORUS_MFG_OUT/<name>, root `runs`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a bundle: residuals, hypotheses and stochastic oracles.
    Verify { bundle: PathBuf, config: PathBuf },
    /// Write one field of a bundle as `flow` or `csv`.
    Export {
        bundle: PathBuf,
        field: String,
        format: String,
        /// Target file (default: <bundle>/export/<field>.<format>).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let g = Globals {
        seed: cli.seed,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Solve { config, out } => {
            let (code, dir) = commands::solve(&config, out.as_deref(), g)?;
            if !g.quiet {
                println!("{}", dir.display());
            }
            Ok(code)
        }
        Command::Verify { bundle, config } => Ok(commands::verify(&bundle, &config, g)?.0),
        Command::Export {
            bundle,
            field,
            format,
            output,
        } => {
            commands::export(&bundle, &field, &format, output.as_deref(), g)?;
            Ok(commands::EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
