//! Argument handling and output files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};

use crate::config::{parse_config, ConfigError};
use crate::exec::RayonExecutor;
use crate::manifest::{config_hash, RunManifest};
use crate::report::Format;
use crate::run::{check_applicable, run, Options, Subcommand};
use fnl_core::verify::Verdict;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Equilibrium,
    Verify,
    Adjudicate,
    Converge,
    DerivCheck,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Simulate => Subcommand::Simulate,
            Command::Equilibrium => Subcommand::Equilibrium,
            Command::Verify => Subcommand::Verify,
            Command::Adjudicate => Subcommand::Adjudicate,
            Command::Converge => Subcommand::Converge,
            Command::DerivCheck => Subcommand::DerivCheck,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "fnl", version, about = "Forward relative performance equilibria under common noise")]
pub struct Cli {
    pub command: Command,
    /// Scenario configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; defaults to `<subcommand>.<format>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write every wealth path (simulate).
    #[arg(long)]
    pub dump_paths: bool,
    /// Add per-agent columns (simulate, equilibrium).
    #[arg(long)]
    pub per_agent: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("run: {0}")]
    Run(#[from] fnl_core::Error),
    #[error("io: {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("threads: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// `out.csv` with suffix `paths` becomes `out.paths.csv`.
fn sibling(out: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.{ext}"))
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Runs the command and returns the process exit code.
pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&cli.config).map_err(io_err(&cli.config))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    let cmd = Subcommand::from(cli.command);
    check_applicable(cmd, &cfg)?;
    let format = match cli.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.{}", cmd.name(), format.extension())));
    let exec = RayonExecutor::new(cli.threads)?;
    log::info!("running {} on {} thread(s)", cmd.name(), exec.threads());
    let outcome = run(&exec, cmd, &cfg, Options { dump_paths: cli.dump_paths, per_agent: cli.per_agent })?;

    let mut written = Vec::new();
    std::fs::write(&out, outcome.table.render(format)).map_err(io_err(&out))?;
    written.push(out.display().to_string());
    for (suffix, table) in &outcome.extra {
        let p = sibling(&out, suffix, format.extension());
        std::fs::write(&p, table.render(format)).map_err(io_err(&p))?;
        written.push(p.display().to_string());
    }
    let manifest = RunManifest {
        subcommand: cmd.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config_hash(&text),
        seed: cfg.master_seed,
        threads: exec.threads(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: written,
        verdict: outcome.verdict.map(|v| v.name().to_string()),
        summary: outcome.summary,
    };
    let mp = manifest_path(&out);
    std::fs::write(&mp, manifest.to_json()).map_err(io_err(&mp))?;
    Ok(if outcome.verdict == Some(Verdict::Inconclusive) { 2 } else { 0 })
}

/// Renders an error for standard error, one violation per line.
pub fn render_error(e: &CliError) -> String {
    match e {
        CliError::Config(ConfigError::Validation(v)) => {
            let mut s = String::from("error: config: invalid configuration");
            for m in v {
                s.push_str("\n  - ");
                s.push_str(m);
            }
            s
        }
        CliError::Run(fnl_core::Error::Invalid(v)) => {
            let mut s = String::from("error: run: invalid model");
            for m in v {
                s.push_str("\n  - ");
                s.push_str(m);
            }
            s
        }
        other => format!("error: {other}"),
    }
}
