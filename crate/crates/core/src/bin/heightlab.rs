use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use heightlab::audit::{self, SUITES};
use heightlab::experiments::{parse_patch_spec, run_experiment, ExperimentConfig, ExperimentError};

#[derive(Parser)]
#[command(name = "heightlab", version, about = "Height-function simulation and audit lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Master seed, overriding the config's sampler seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run an audit suite (fkg, enrichment, exploration or all).
    Audit {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a patch, e.g. `honeycomb:ball=3` or `truncated_square:torus=4x4`.
    Patch {
        spec: String,
        #[arg(long, value_enum, default_value_t = Emit::Json)]
        emit: Emit,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Json,
}

fn fail(e: ExperimentError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn verdict(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::Run { config, seed, out, threads } => {
            if let Some(k) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            let cfg = match ExperimentConfig::from_path(&config) {
                Ok(cfg) => cfg,
                Err(e) => return fail(e),
            };
            let master = seed.unwrap_or(cfg.sampler.seed);
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            match run_experiment(&cfg, master, &dir) {
                Ok(outcome) => {
                    println!("{}", dir.join("manifest.json").display());
                    verdict(outcome.passed)
                }
                Err(e) => fail(e),
            }
        }
        Command::Audit { suite, seed } => {
            let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite.as_str()] };
            let mut passed = true;
            let mut reports = Vec::new();
            for name in names {
                match audit::run_suite(name, seed) {
                    Ok(r) => {
                        passed &= r.passed;
                        reports.push(r);
                    }
                    Err(e) => return fail(e.into()),
                }
            }
            let json = if reports.len() == 1 {
                serde_json::to_string_pretty(&reports[0])
            } else {
                serde_json::to_string_pretty(&reports)
            };
            println!("{}", json.expect("report serializes"));
            verdict(passed)
        }
        Command::Patch { spec, emit: Emit::Json } => match parse_patch_spec(&spec) {
            Ok(patch) => {
                println!("{}", serde_json::to_string_pretty(&patch.to_json()).expect("patch serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
