//! `behave`: run, learn, check and diagnose two-layer rule engines, and
//! serve inference over HTTP or standard input/output.

mod commands;
mod failure;
mod serve;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use behave_core::dsl::SceneMode;
use behave_core::learn::Heuristic;
use clap::{ArgGroup, Parser, Subcommand};

use failure::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "behave",
    version,
    about = "Two-layer rule engine for behaviour planning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Infer the behaviour for one scene.
    Infer {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Include the per-layer trace.
        #[arg(long)]
        trace: bool,
        /// `strict` rejects partial scenes, `completing` fills them with undefined.
        #[arg(long, default_value = "strict")]
        mode: SceneMode,
    },
    /// Learn or repair both theories from a labelled dataset.
    Learn {
        #[arg(long)]
        dataset: PathBuf,
        /// Rules to start from; empty theories when absent.
        #[arg(long)]
        base_rules: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "laplace")]
        heuristic: Heuristic,
    },
    /// List the training scenes each layer misclassifies.
    Check {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Explain why a scene does not get the desired behaviour.
    Diagnose {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// A behaviour, or `{"maneuver_label", "final_label"}`.
        #[arg(long)]
        desired: PathBuf,
    },
    /// Measure inference latency over a cycle of scenes.
    Bench {
        #[arg(long)]
        rules: PathBuf,
        /// A scene document or an array of them.
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        iterations: u64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        threads: u64,
    },
    /// Serve inference requests until stopped.
    #[command(group(ArgGroup::new("transport").required(true).args(["listen", "stdio"])))]
    Serve {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        listen: Option<SocketAddr>,
        /// One JSON request per input line, one response per output line.
        #[arg(long)]
        stdio: bool,
    },
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Infer {
            rules,
            scene,
            trace,
            mode,
        } => commands::infer(&rules, &scene, trace, mode),
        Command::Learn {
            dataset,
            base_rules,
            out,
            seed,
            heuristic,
        } => commands::learn(&dataset, base_rules.as_deref(), &out, seed, heuristic),
        Command::Check { rules, dataset } => commands::check(&rules, &dataset),
        Command::Diagnose {
            rules,
            dataset,
            scene,
            desired,
        } => commands::diagnose(&rules, &dataset, &scene, &desired),
        Command::Bench {
            rules,
            scenes,
            iterations,
            threads,
        } => commands::bench(&rules, &scenes, iterations, threads as usize),
        Command::Serve {
            rules,
            listen,
            stdio,
        } => {
            let (_, cfg) = commands::load_rules(&rules)?;
            match listen {
                Some(addr) if !stdio => serve::http(cfg, addr),
                _ => serve::stdio(cfg),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return Failure::usage(e.to_string()).report(),
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => f.report(),
    }
}
