use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use statedecomp::indistinguishability::DEFAULT_TOLERANCE;
use statedecomp_harness::runner::{self, indist_suite, suite_text, sweep, sweep_medians, write_sweep};
use statedecomp_harness::scenario::{preset_text, SeedRange, PRESETS};
use statedecomp_harness::{execute, resolve, write_outputs, Scenario};

/// Average consensus with state decomposition, obfuscation baselines and
/// adversary models.
#[derive(Debug, Parser)]
#[command(name = "statedecomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of rounds.
    #[arg(long)]
    horizon: Option<usize>,
    /// Root directory for artifacts.
    #[arg(long, env = "STATEDECOMP_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Exit non-zero when a scenario check fails.
    #[arg(long)]
    check: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file or preset and write its artifacts.
    Run {
        /// Path to a TOML scenario, or a preset name.
        scenario: String,
        #[command(flatten)]
        common: Common,
    },
    /// List presets, or print one as TOML.
    Preset { name: Option<String> },
    /// Alternate-world indistinguishability trials on a decomposed run.
    Indist {
        scenario: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run every (noise scale, seed) pair and report medians.
    Sweep {
        scenario: String,
        /// Seed range such as `0..50`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        noise_scales: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
}

fn load(arg: &str, common: &Common) -> Result<(Scenario, PathBuf)> {
    let mut s = resolve(arg)?;
    if let Some(seed) = common.seed {
        s = s.with_seed(seed);
    }
    if let Some(h) = common.horizon {
        s = s.with_horizon(h);
    }
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    let root = common
        .out_dir
        .clone()
        .or_else(|| s.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    Ok((s, root))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, common } => {
            let (s, root) = load(&scenario, &common)?;
            let out = execute(&s)?;
            let dir = write_outputs(&out, &root)?;
            print!("{}", runner::summary_text(&out));
            println!("output = {}", dir.display());
            for c in &out.checks {
                println!("{}", c.line());
            }
            Ok(!common.check || out.passed())
        }
        Command::Preset { name: None } => {
            for p in PRESETS {
                println!("{p}");
            }
            Ok(true)
        }
        Command::Preset { name: Some(name) } => match preset_text(&name) {
            Some(text) => {
                print!("{}", text.trim_start());
                Ok(true)
            }
            None => bail!("unknown preset {name:?}; known: {}", PRESETS.join(", ")),
        },
        Command::Indist {
            scenario,
            trials,
            tolerance,
            common,
        } => {
            let (s, root) = load(&scenario, &common)?;
            let report = indist_suite(&s, trials, tolerance)?;
            let text = suite_text(&s, &report);
            let dir = root.join(&s.name).join(format!("seed-{}", s.config.seed));
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            std::fs::write(dir.join("indist.txt"), &text)?;
            print!("{text}");
            Ok(!common.check || report.ok())
        }
        Command::Sweep {
            scenario,
            seeds,
            noise_scales,
            common,
        } => {
            let (s, root) = load(&scenario, &common)?;
            let defaults = s.sweep.clone();
            let seeds = match seeds {
                Some(r) => SeedRange::parse(&r).map_err(anyhow::Error::msg)?,
                None => defaults
                    .as_ref()
                    .and_then(|d| d.seeds)
                    .context("no seed range given and the scenario has none")?,
            };
            let scales = noise_scales
                .or_else(|| defaults.and_then(|d| d.noise_scales))
                .unwrap_or_else(|| vec![s.config.noise.scale]);
            let rows = sweep(&s, seeds, &scales)?;
            let medians = sweep_medians(&rows, &scales);
            let dir = write_sweep(&s, &rows, &medians, &root)?;
            print!("{}", runner::medians_csv(&medians));
            println!("output = {}", dir.display());
            let monotone = medians.windows(2).all(|w| w[0].avg_err < w[1].avg_err);
            Ok(!common.check || monotone)
        }
    }
}
