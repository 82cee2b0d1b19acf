mod commands;
mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kemeny_core::Error;

use commands::{Report, Status};
use config::RunConfig;

/// Boundary classification, hitting times and Kemeny constants for
/// one-dimensional diffusions.
#[derive(Parser)]
#[command(name = "kemeny", version)]
struct Cli {
    /// INI run configuration.
    #[arg(long, short, global = true, env = "KEMENY_CONFIG")]
    config: Option<PathBuf>,

    /// Write the JSON report here (overrides [output] json).
    #[arg(long, global = true)]
    json: Option<PathBuf>,

    /// Write tabular output here instead of stdout (overrides [output] csv).
    #[arg(long, global = true)]
    csv: Option<PathBuf>,

    /// Simulation seed (overrides [simulation] seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Euler-Maruyama step (overrides [simulation] dt).
    #[arg(long, global = true)]
    dt: Option<f64>,

    /// Number of simulated paths (overrides [simulation] paths).
    #[arg(long, global = true)]
    paths: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Positive recurrence and entrance tests at both boundaries.
    Classify,
    /// Tabulate the invariant density and CDF on a grid.
    #[command(allow_negative_numbers = true)]
    Density {
        #[arg(long, default_value_t = -3.0)]
        from: f64,
        #[arg(long, default_value_t = 3.0)]
        to: f64,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
    },
    /// Expected hitting time E_x tau_y.
    #[command(allow_negative_numbers = true)]
    Hit {
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        /// Also estimate it by simulation.
        #[arg(long)]
        simulate: bool,
    },
    /// Kemeny constant by both integral forms, plus an optional profile.
    #[command(allow_negative_numbers = true)]
    Kemeny {
        /// Starting points x at which to evaluate E_x tau_X.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        profile: Vec<f64>,
    },
    /// Run the full battery of consistency checks.
    #[command(allow_negative_numbers = true)]
    Verify {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-2,-1,0,1,2")]
        profile: Vec<f64>,
    },
    /// Draw samples from the invariant law.
    Sample {
        #[arg(long, short)]
        n: usize,
    },
}

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;
const EXIT_INCONCLUSIVE: u8 = 4;

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Parse(_) | Error::Config(_) => EXIT_USAGE,
        e if e.is_domain() => EXIT_DOMAIN,
        e if e.is_inconclusive() => EXIT_INCONCLUSIVE,
        _ => EXIT_FAILED,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn load(cli: &Cli) -> Result<RunConfig, String> {
    let path = cli
        .config
        .as_deref()
        .ok_or("no configuration given; pass --config or set KEMENY_CONFIG")?;
    let mut cfg = RunConfig::load(path).map_err(|e| e.to_string())?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(dt) = cli.dt {
        cfg.sim.dt = dt;
    }
    if let Some(paths) = cli.paths {
        cfg.sim.n_paths = paths;
    }
    cfg.sim.validate().map_err(|e| e.to_string())?;
    if cli.json.is_some() {
        cfg.output.json = cli.json.clone();
    }
    if cli.csv.is_some() {
        cfg.output.csv = cli.csv.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<Report, Error> {
    match &cli.command {
        Command::Classify => commands::cmd_classify(cfg),
        Command::Density { from, to, step } => commands::cmd_density(cfg, *from, *to, *step),
        Command::Hit { x, y, simulate } => commands::cmd_hit(cfg, *x, *y, *simulate),
        Command::Kemeny { profile } => commands::cmd_kemeny(cfg, profile),
        Command::Verify { profile } => commands::cmd_verify(cfg, profile),
        Command::Sample { n } => commands::cmd_sample(cfg, *n),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let report = match run(&cli, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_for(&e));
        }
    };

    let mut text = report.text;
    if let (Some(csv), Some(path)) = (&report.csv, &cfg.output.csv) {
        if let Err(msg) = write_file(path, csv) {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_FAILED);
        }
        // Tabular commands print only their table; keep stdout quiet then.
        if text == *csv {
            text = format!("wrote {}\n", path.display());
        }
    }
    if let Some(path) = &cfg.output.json {
        let body = serde_json::to_string_pretty(&report.json).expect("report is valid JSON");
        if let Err(msg) = write_file(path, &(body + "\n")) {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_FAILED);
        }
    }
    print!("{text}");

    match report.status {
        Status::Ok => ExitCode::SUCCESS,
        Status::Failed => ExitCode::from(EXIT_FAILED),
        Status::Inconclusive => ExitCode::from(EXIT_INCONCLUSIVE),
    }
}
