//! `unicity`: re-identification risk analysis of sparse behavioral datasets.

mod commands;
mod manifest;
mod output;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::{Command, NumericalFailure};
use manifest::{ReplayMismatch, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "unicity", version, about, propagate_version = true)]
struct Cli {
    /// Worker threads; defaults to the available parallelism. Outputs do not
    /// depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Where to write the run manifest; `<output>.manifest.json` by default.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Top,
}

#[derive(Subcommand, Debug)]
enum Top {
    #[command(flatten)]
    Run(Command),
    /// Re-run a manifest and check that every output is byte-identical.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// Manifest written by an earlier run.
    path: PathBuf,
    /// Keep replayed outputs here instead of a temporary directory.
    #[arg(long)]
    keep: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(UsageError("--workers must be at least 1".into()).into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context("starting worker pool")?;

    match cli.command {
        Top::Run(mut command) => {
            let started = Instant::now();
            command.canonicalize_inputs()?;
            let outcome = command.run()?;
            let manifest = RunManifest::new(command, &outcome, workers, started.elapsed())?;
            let path = cli
                .manifest
                .unwrap_or_else(|| output::sidecar(&outcome.outputs[0], ".manifest.json"));
            manifest.write(&path)?;
            for out in &manifest.outputs {
                eprintln!("wrote {}", out.path.display());
            }
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        Top::Replay(args) => {
            let manifest = RunManifest::read(&args.path)?;
            let temp;
            let dir = match &args.keep {
                Some(dir) => {
                    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                    dir.as_path()
                }
                None => {
                    temp = tempfile::tempdir().context("creating a temporary directory")?;
                    temp.path()
                }
            };
            eprintln!("replaying {} from {}", manifest.command.name(), args.path.display());
            match manifest::replay(&manifest, dir) {
                Ok(pairs) => {
                    for (recorded, _) in pairs {
                        println!("identical {} {}", recorded.sha256, recorded.path.display());
                    }
                    Ok(())
                }
                Err(e) => {
                    if let Some(m) = e.downcast_ref::<ReplayMismatch>() {
                        for path in &m.0 {
                            println!("differs {}", path.display());
                        }
                    }
                    Err(e)
                }
            }
        }
    }
}

/// Invalid arguments detected after parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 2 usage error, 3 data error, 4 numerical failure.
fn exit_code(e: &anyhow::Error) -> u8 {
    use unicity_core::Error as E;
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if cause.is::<NumericalFailure>() {
            return 4;
        }
        if let Some(core) = cause.downcast_ref::<E>() {
            return match core {
                _ if core.is_numerical() => 4,
                E::InvalidParameter(_) | E::InvalidConfig(_) | E::InvalidSchedule(_) => 2,
                _ => 3,
            };
        }
    }
    3
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn default_seed_matches_library() {
        let cli = Cli::try_parse_from(["unicity", "unicity", "--dataset", "d.bin", "-o", "r.json"]).unwrap();
        match cli.command {
            Top::Run(Command::Unicity(a)) => {
                assert_eq!(a.estimator.seed, unicity_core::DEFAULT_SEED);
                assert_eq!(a.n.0, (1..=10).collect::<Vec<_>>());
                assert_eq!(a.estimator.samples, 20);
                assert_eq!(a.estimator.sample_size, 10_000);
            }
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn manifests_round_trip_parameters() {
        let cli = Cli::try_parse_from([
            "unicity",
            "scaling",
            "--dataset",
            "d.bin",
            "--sizes",
            "10k,20k",
            "--s",
            "3",
            "--strategy",
            "random",
            "--seed",
            "7",
            "-o",
            "c.json",
        ])
        .unwrap();
        let Top::Run(command) = cli.command else { panic!() };
        let text = serde_json::to_string(&command).unwrap();
        assert!(text.contains("\"subcommand\":\"scaling\""), "{text}");
        let back: Command = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn core_errors_map_to_exit_codes() {
        let data: anyhow::Error = unicity_core::Error::EmptyDataset.into();
        assert_eq!(exit_code(&data), 3);
        let usage: anyhow::Error = unicity_core::Error::InvalidParameter("x".into()).into();
        assert_eq!(exit_code(&usage.context("while running")), 2);
        assert_eq!(exit_code(&NumericalFailure("x".into()).into()), 4);
    }
}
