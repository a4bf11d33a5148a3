//! `d2sim`: run decentralized SGD experiments, inspect mixing matrices and
//! check the analysis lemmas numerically.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use d2sim::harness::{self, compare_report, ExperimentConfig, Trajectory};
use d2sim::lemma_oracles;
use d2sim::mixing::{MixingMatrix, MixingScheme, SpectralConstants, Topology, TopologyKind};

#[derive(Parser)]
#[command(name = "d2sim", version, about = "Deterministic D2 / D-PSGD / C-PSGD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config and write metric CSV.
    ///
    /// The CSV goes to --out, else to the config's "out", else to stdout.
    /// A comparison table is printed to stderr when several algorithms ran.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the spectrum and validity checks of a mixing matrix.
    ///
    /// Exits with status 1 when the matrix fails validation.
    Spectrum {
        #[arg(long)]
        topology: TopologyKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        scheme: MixingScheme,
        /// Print the matrix dump as JSON instead of key=value lines.
        #[arg(long)]
        json: bool,
    },
    /// Check the recurrence, geometric-sum and rotation lemmas on seeded
    /// random cases.
    LemmaCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a bundled experiment and write its CSV.
    Preset {
        /// One of: unshuffled-ring, shuffled-ring, deterministic-quadratic
        name: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write the preset's config JSON here.
        #[arg(long)]
        save_config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> d2sim::Result<ExitCode> {
    match command {
        Command::Run { config, out } => {
            let config = harness::load_config(&config)?;
            let trajectories = match (out, &config.out) {
                (Some(path), _) => harness::run_experiment_to(&config, &path)?,
                (None, Some(_)) => harness::run_experiment(&config)?,
                (None, None) => {
                    let t = harness::run_experiment(&config)?;
                    print!("{}", harness::csv_string(&t));
                    t
                }
            };
            summarize(&trajectories)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Spectrum {
            topology,
            n,
            scheme,
            json,
        } => {
            let w = MixingMatrix::build(&Topology::build(topology, n)?, scheme)?;
            let report = w.validate();
            if json {
                println!("{}", w.to_json());
            } else {
                print!("{}", report.to_key_value_lines());
                if report.is_valid() {
                    let c = SpectralConstants::of(&w)?;
                    if let Some(v) = c.v {
                        println!("v={v}");
                    }
                    println!("c1={}", c.c1);
                    println!("c2={}", c.c2);
                }
            }
            Ok(if report.is_valid() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::LemmaCheck { seed } => {
            let checks = lemma_oracles::run_all(seed)?;
            let mut ok = true;
            for c in &checks {
                println!(
                    "{} {} cases={} worst={:e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.cases,
                    c.worst
                );
                ok &= c.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Preset {
            name,
            out,
            save_config,
        } => {
            let config: ExperimentConfig = harness::preset(&name)?;
            if let Some(path) = save_config {
                std::fs::write(&path, config.to_json() + "\n")
                    .map_err(|e| d2sim::Error::Io {
                        path: path.display().to_string(),
                        source: e,
                    })?;
            }
            let trajectories = harness::run_experiment_to(&config, &out)?;
            summarize(&trajectories)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn summarize(trajectories: &[Trajectory]) -> d2sim::Result<()> {
    if trajectories.len() >= 2 {
        eprint!("{}", compare_report(trajectories)?.to_text());
    } else {
        for t in trajectories {
            for w in &t.warnings {
                eprintln!("warning: {w}");
            }
        }
    }
    Ok(())
}
