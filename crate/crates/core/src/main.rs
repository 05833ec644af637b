use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use voxevo::analysis::{aggregate, read_generations_csv, write_aggregate_csv};
use voxevo::config::ExperimentConfig;
use voxevo::tools::{fixed_robot, replay, run_batch, write_fixed_robot_csv};

#[derive(Parser)]
#[command(name = "voxevo", about = "Evolve 2D voxel robots with lifetime learning", version)]
struct Cli {
    /// Size of the rayon thread pool (defaults to the core count).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-run logs under the output directory.
    Run {
        /// Experiment config (JSON); defaults apply for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed, overriding the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of independent runs, overriding the config.
        #[arg(long)]
        runs: Option<usize>,
        /// Output directory for run_NNN subdirectories.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Aggregate generations.csv files from several runs into one curve.
    Analyze {
        /// Run directories (each containing generations.csv).
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Moving-average window for smoothing.
        #[arg(long, default_value_t = 1)]
        window: usize,
        /// Output CSV path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate random fixed robots under both goal directions on flat ground.
    FixedRobot {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of random morphologies.
        #[arg(long, default_value_t = 10)]
        morphs: usize,
        /// Number of random parameter vectors per morphology.
        #[arg(long, default_value_t = 10)]
        params: usize,
        /// Output CSV path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-simulate one recorded evaluation from a run directory.
    Replay {
        /// Run directory written by `run`.
        #[arg(long)]
        run: PathBuf,
        /// Robot id from robots.jsonl.
        #[arg(long)]
        robot: u64,
        /// Evaluation index within that robot's learning record.
        #[arg(long, default_value_t = 0)]
        eval: usize,
        /// Output JSON path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config file, then print the resolved form.
    ValidateConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, String> {
    match path {
        Some(p) => ExperimentConfig::load(p).map_err(|e| e.to_string()),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Print to stdout, treating a closed pipe as a normal exit.
fn print_line(text: &str) -> Result<(), String> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.to_string()),
        _ => Ok(()),
    }
}

fn emit<W: FnOnce(Box<dyn std::io::Write>) -> Result<(), String>>(
    out: &Option<PathBuf>,
    write: W,
) -> Result<(), String> {
    match out {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| e.to_string())?;
            write(Box::new(f))
        }
        None => write(Box::new(std::io::stdout().lock())),
    }
}

fn run(cli: Cli) -> Result<(), String> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    match cli.command {
        Command::Run { config, seed, runs, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = runs {
                cfg.runs = r;
            }
            let dirs = run_batch(&cfg, &out).map_err(|e| e.to_string())?;
            for d in dirs {
                print_line(&d.display().to_string())?;
            }
            Ok(())
        }
        Command::Analyze { dirs, window, out } => {
            let runs = dirs
                .iter()
                .map(|d| read_generations_csv(&d.join("generations.csv")))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let rows = aggregate(&runs, window).map_err(|e| e.to_string())?;
            emit(&out, |w| write_aggregate_csv(&rows, w).map_err(|e| e.to_string()))
        }
        Command::FixedRobot { config, seed, morphs, params, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let rows = fixed_robot(&cfg, morphs, params, cfg.seed).map_err(|e| e.to_string())?;
            emit(&out, |w| write_fixed_robot_csv(&rows, w).map_err(|e| e.to_string()))
        }
        Command::Replay { run, robot, eval, out } => {
            let replayed = replay(&run, robot, eval).map_err(|e| e.to_string())?;
            let json = serde_json::to_string_pretty(&replayed).map_err(|e| e.to_string())?;
            emit(&out, |mut w| {
                writeln!(w, "{json}").map_err(|e| e.to_string())
            })
        }
        Command::ValidateConfig { config } => {
            let cfg = load_config(&config)?;
            cfg.validate().map_err(|e| e.to_string())?;
            let json = serde_json::to_string_pretty(&cfg).map_err(|e| e.to_string())?;
            print_line(&json)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
