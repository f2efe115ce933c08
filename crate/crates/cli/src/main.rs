use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use frontlab_cli::{run_command, Command, RunManifest, VerifyKind};

#[derive(Parser, Debug)]
#[command(name = "frontlab", version, about = "Accelerating invasion fronts: PDE, branching particles and theory")]
struct Cli {
    /// TOML configuration (sections model, grid, time, bbm, verify).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory; must not exist or be empty.
    #[arg(long, global = true, default_value = "frontlab-run")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "FRONTLAB_THREADS")]
    threads: Option<usize>,
    /// Dotted key=value override, e.g. model.A=2 (repeatable).
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Integrate the PDE and dump fields.
    Solve,
    /// Run branching Brownian motion trees.
    Bbm,
    /// Write the closed-form constants and curves.
    Theory,
    /// Track the front and compare with theory.
    Front,
    /// Run a verification suite.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Suite {
    Mckean,
    Moments,
    Lemmas,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let command = match cli.command {
        Cmd::Solve => Command::Solve,
        Cmd::Bbm => Command::Bbm,
        Cmd::Theory => Command::Theory,
        Cmd::Front => Command::Front,
        Cmd::Verify { suite } => Command::Verify(match suite {
            Suite::Mckean => VerifyKind::Mckean,
            Suite::Moments => VerifyKind::Moments,
            Suite::Lemmas => VerifyKind::Lemmas,
        }),
    };
    let manifest = RunManifest {
        command,
        config_path: cli.config,
        out: cli.out,
        seed: cli.seed,
        overrides: cli.overrides,
        threads: cli.threads,
    };
    let outcome = run_command(&manifest);
    match &outcome.reason {
        Some(r) => eprintln!("frontlab: exit {}: {r}", outcome.exit_code),
        None => eprintln!("frontlab: ok -> {}", manifest.out.display()),
    }
    ExitCode::from(outcome.exit_code as u8)
}
