//! `ccup-lab`: runs scenario configs and writes traces, summaries and a
//! manifest per run.
//!
//! Exit status: 0 when every seed converged/solved/passed, 2 when any seed
//! diverged, cycled or stayed unsolved, 1 on configuration or I/O errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccup_core::scenario::{
    default_config_text, load_config, parse_config, parse_seed_range, run_scenario, validate_config, Format, Kind,
    Overrides, ScenarioConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Caps the number of seeds run at once.
const THREADS_ENV: &str = "CCUP_LAB_THREADS";

#[derive(Parser)]
#[command(name = "ccup-lab", version, about = "Seeded scenario runner for the ccup-core laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config.
    Run(RunArgs),
    /// Check a config against its schema without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Information-bottleneck frontier; uses a built-in 2×2 joint without --config.
    IbCurve(ShortcutArgs),
    /// Sinkhorn against exact transport on seeded instances.
    OtCheck(ShortcutArgs),
}

#[derive(Args)]
struct Overriding {
    /// Single seed, replacing the config's seeds.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Inclusive seed range `A..B`.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory, replacing the config's.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overriding,
}

#[derive(Args)]
struct ShortcutArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overriding,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl Overriding {
    fn resolve(&self) -> Result<Overrides, String> {
        let seeds = match (self.seed, &self.seeds) {
            (Some(s), _) => Some(vec![s]),
            (None, Some(r)) => Some(parse_seed_range(r).map_err(|e| e.to_string())?),
            (None, None) => None,
        };
        Ok(Overrides {
            seeds,
            output_dir: self.out.clone(),
            format: self.format.map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            }),
        })
    }
}

fn threads() -> Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}")),
    }
}

fn execute(cfg: &ScenarioConfig) -> Result<u8, String> {
    let report = run_scenario(cfg, threads()?).map_err(|e| e.to_string())?;
    for r in &report.runs {
        println!("seed {}: {} ({})", r.seed, r.verdict, r.detail);
    }
    let ok = report.runs.iter().filter(|r| r.ok).count();
    println!(
        "{}: {ok}/{} ok, outputs in {}",
        cfg.kind,
        report.runs.len(),
        report.output_dir.display()
    );
    Ok(report.exit_code as u8)
}

fn shortcut(kind: Kind, args: &ShortcutArgs) -> Result<u8, String> {
    let overrides = args.overrides.resolve()?;
    let cfg = match &args.config {
        Some(path) => load_config(path, &overrides).map_err(|e| e.to_string())?,
        None => {
            let out = args.overrides.out.clone().unwrap_or_else(|| Path::new("out").join(kind.name()));
            let text = default_config_text(kind, 0, &out).expect("shortcut kinds have defaults");
            parse_config(&text, &overrides)
                .map_err(|issues| issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))?
        }
    };
    if cfg.kind != kind {
        return Err(format!("config kind is '{}' but this subcommand runs '{kind}'", cfg.kind));
    }
    execute(&cfg)
}

fn main() -> ExitCode {
    // clap's own usage-error status (2) would read as a bad verdict
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => args
            .overrides
            .resolve()
            .and_then(|o| load_config(&args.config, &o).map_err(|e| e.to_string()))
            .and_then(|cfg| execute(&cfg)),
        Command::Validate { config } => match validate_config(config) {
            Err(e) => Err(e.to_string()),
            Ok(issues) if issues.is_empty() => {
                println!("{}: ok", config.display());
                Ok(0)
            }
            Ok(issues) => Err(issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")),
        },
        Command::IbCurve(args) => shortcut(Kind::IbCurve, args),
        Command::OtCheck(args) => shortcut(Kind::OtCheck, args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
