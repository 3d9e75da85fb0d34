use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seqcs::harness::{self, verify, PRESETS};
use seqcs::Error;

#[derive(Parser)]
#[command(name = "seqcs", version, about = "Sequential compressed sensing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a TOML experiment config.
    Run {
        /// Preset name (see `list-presets`) or path to a config file.
        config: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted `key=value` assignment, e.g. `estimator.t=10`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List the built-in presets.
    ListPresets,
    /// Run the acceptance property checks.
    Verify {
        /// Smaller trial counts for a fast smoke run.
        #[arg(long)]
        quick: bool,
        /// Only these criteria (1-11).
        #[arg(long = "only", value_name = "ID")]
        only: Vec<usize>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_TRIAL: u8 = 3;

fn run(
    config: &str,
    trials: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    mut overrides: Vec<String>,
) -> ExitCode {
    if let Some(t) = trials {
        overrides.push(format!("trials={t}"));
    }
    if let Some(s) = seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(o) = out {
        overrides.push(format!("out={}", toml::Value::String(o.display().to_string())));
    }
    let cfg = match harness::load_config(config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match harness::run(&cfg) {
        Ok(summary) => {
            let m = &summary.manifest;
            println!(
                "wrote {} file(s) to {} in {:.1}s",
                m.outputs.len(),
                summary.out_dir.display(),
                m.wall_clock_secs
            );
            for f in &m.failures {
                eprintln!("trial failed: {f}");
            }
            if summary.failed() {
                ExitCode::from(EXIT_TRIAL)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(EXIT_TRIAL)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            trials,
            seed,
            out,
            overrides,
        } => run(&config, trials, seed, out, overrides),
        Command::ListPresets => {
            for (name, about, _) in PRESETS {
                println!("{name:14} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Verify { quick, only } => {
            let scale = if quick { verify::Scale::Quick } else { verify::Scale::Full };
            let mut all_ok = true;
            for (id, _, f) in verify::CRITERIA {
                if !only.is_empty() && !only.contains(id) {
                    continue;
                }
                let rep = f(scale);
                all_ok &= rep.passed();
                println!("{rep}");
            }
            if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
