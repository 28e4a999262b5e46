use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use strombench::config::{
    expand_experiment_matrix, validate_config, ConfigError, ExperimentConfig, RunConfig,
};
use strombench::orchestrator::{
    compute_resources, emit_chain, run_experiment, write_chain, ExperimentOptions, ModeChoice,
    OrchestratorError,
};
use strombench::postprocess::{postprocess, PostprocessError, DEFAULT_WARMUP_FRACTION};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(
    name = "strombench",
    about = "Benchmark harness for stream-processing pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Auto,
    Local,
    SlurmInteractive,
    SlurmBatch,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and list the runs it expands to.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Execute every run of an experiment, or submit them as batch jobs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        mode: Mode,
        /// Write batch scripts without submitting them.
        #[arg(long)]
        dry_run: bool,
        /// Execute a single run of the matrix.
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Write one chained SLURM script per run.
    EmitSbatch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate and aggregate finished runs into plot-ready CSVs.
    Postprocess {
        #[arg(long)]
        results: PathBuf,
        /// Defaults to `<results>/postprocessed`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_WARMUP_FRACTION)]
        warmup: f64,
    },
    Version,
}

fn load(path: &Path) -> Result<Vec<RunConfig>, ConfigError> {
    expand_experiment_matrix(&validate_config(ExperimentConfig::load(path)?)?)
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Version => {
            println!("strombench {}", strombench::VERSION);
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Ok(runs) => {
                for r in &runs {
                    match compute_resources(r) {
                        Ok(_) => println!("{}", r.run_id),
                        Err(e) => return fail(EXIT_VALIDATION, format!("{}: {e}", r.run_id)),
                    }
                }
                println!("{} run(s)", runs.len());
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_VALIDATION, e),
        },
        Command::EmitSbatch { config, out } => {
            let result = load(&config)
                .map_err(OrchestratorError::from)
                .and_then(|runs| {
                    let path = config.canonicalize().unwrap_or(config.clone());
                    let chain = emit_chain(&runs, &path.to_string_lossy())?;
                    write_chain(&out, &chain)?;
                    Ok(chain.len())
                });
            match result {
                Ok(n) => {
                    println!("wrote {n} script(s) to {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e.exit_code() as u8, e),
            }
        }
        Command::Run {
            config,
            mode,
            dry_run,
            run_id,
        } => {
            let opts = ExperimentOptions {
                config_path: config,
                mode: match mode {
                    Mode::Auto => ModeChoice::Auto,
                    Mode::Local => ModeChoice::Local,
                    Mode::SlurmInteractive => ModeChoice::SlurmInteractive,
                    Mode::SlurmBatch => ModeChoice::SlurmBatch,
                },
                dry_run,
                run_id,
            };
            match run_experiment(&opts) {
                Ok(summaries) => {
                    let width = summaries
                        .iter()
                        .map(|s| s.run_id.len())
                        .max()
                        .unwrap_or(6)
                        .max(6);
                    println!("{:<width$}  {:<9}  detail", "run_id", "status");
                    for s in &summaries {
                        println!("{:<width$}  {:<9}  {}", s.run_id, s.status, s.detail);
                    }
                    if summaries.iter().all(|s| s.is_ok()) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_RUNTIME)
                    }
                }
                Err(e) => fail(e.exit_code() as u8, e),
            }
        }
        Command::Postprocess {
            results,
            out,
            warmup,
        } => {
            if !results.is_dir() {
                return fail(
                    EXIT_VALIDATION,
                    format!("{}: not a directory", results.display()),
                );
            }
            let out = out.unwrap_or_else(|| results.join("postprocessed"));
            match postprocess(&results, &out, warmup) {
                Ok(summary) => {
                    println!(
                        "{} run(s) written to {}",
                        summary.reports.len(),
                        out.display()
                    );
                    for (run, v) in &summary.violations {
                        eprintln!("violation in {run}: {v}");
                    }
                    if summary.violations.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_RUNTIME)
                    }
                }
                Err(e @ PostprocessError::Io { .. }) => fail(EXIT_RUNTIME, e),
                Err(e) => fail(EXIT_VALIDATION, e),
            }
        }
    }
}
