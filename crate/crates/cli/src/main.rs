//! `pomo`: post-modifier dataset construction, claim selection, and
//! generation from the command line.

mod data;
mod eval;
mod gen;
mod manifest;
mod select;
mod settings;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use settings::Settings;

pub const DEFAULT_SEED: u64 = 1;
pub const DATA_DIR_VAR: &str = "POMO_DATA_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "pomo",
    version,
    about = "Post-modifier dataset and generation pipeline"
)]
struct Cli {
    /// Seed for every random choice of the run [default: 1].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel inference; outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Flat key = value configuration file; command-line flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every document of a parsed corpus against the format invariants.
    IngestValidate(data::ValidateArgs),
    /// Extract person mentions with appositive post-modifiers.
    Extract(data::ExtractArgs),
    /// Link candidates to the claim store and write dataset instances.
    BuildDataset(data::BuildArgs),
    /// Split instances entity-disjointly into train, valid, and test.
    Split(data::SplitArgs),
    /// Dataset statistics and the occupation distribution.
    Stats(data::StatsArgs),
    /// Claim selection models.
    #[command(subcommand)]
    Select(select::SelectCommand),
    /// Post-modifier generation models.
    #[command(subcommand)]
    Gen(gen::GenCommand),
    /// Score a decode file against its dataset.
    Eval(eval::EvalArgs),
}

/// State shared by every subcommand.
pub struct Run {
    pub seed: u64,
    pub settings: Settings,
    config_path: Option<PathBuf>,
    data_dir: Option<PathBuf>,
}

impl Run {
    /// Writes the run manifest beside `outputs[0]`; the config file, if
    /// any, is recorded as an input.
    pub fn manifest(
        &self,
        command: &str,
        config: &serde_json::Value,
        inputs: &[&Path],
        outputs: &[&Path],
    ) -> Result<()> {
        let mut all: Vec<&Path> = inputs.to_vec();
        all.extend(self.config_path.as_deref());
        manifest::write(command, self.seed, config, &all, outputs)?;
        Ok(())
    }

    /// Resolves an input path: as given if it exists, else under
    /// `POMO_DATA_DIR` for relative paths.
    pub fn input(&self, path: &Path) -> Result<PathBuf> {
        if path.exists() {
            return Ok(path.to_path_buf());
        }
        if let (true, Some(root)) = (path.is_relative(), &self.data_dir) {
            let alt = root.join(path);
            if alt.exists() {
                return Ok(alt);
            }
        }
        bail!("input {} does not exist", path.display())
    }
}

/// Creates the parent directory of an output file.
pub fn prepare_output(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Pretty JSON to `out`, or to stdout without one.
pub fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => {
            prepare_output(p)?;
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli.config.clone();
    let settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => settings.value("seed")?.unwrap_or(DEFAULT_SEED),
    };
    let jobs = match cli.jobs {
        Some(j) => Some(j),
        None => settings.value("jobs")?,
    };
    if let Some(j) = jobs {
        if j == 0 {
            bail!("--jobs must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let run = Run {
        seed,
        settings,
        config_path,
        data_dir: std::env::var_os(DATA_DIR_VAR).map(PathBuf::from),
    };
    match cli.command {
        Command::IngestValidate(a) => data::validate(&run, a),
        Command::Extract(a) => data::extract(&run, a),
        Command::BuildDataset(a) => data::build(&run, a),
        Command::Split(a) => data::split(&run, a),
        Command::Stats(a) => data::stats(&run, a),
        Command::Select(c) => select::dispatch(&run, c),
        Command::Gen(c) => gen::dispatch(&run, c),
        Command::Eval(a) => eval::eval(&run, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
