//! `teamnet` — experiments with distributed MMSE estimation over sensor
//! networks.
//!
//! Three subcommands share one configuration format (TOML, or a built-in
//! preset):
//!
//! - `simulate` runs the configured Monte Carlo experiment and writes cost
//!   reports (CSV and JSON), plus a pairwise comparison when more than one
//!   algorithm or network is involved;
//! - `weights` synthesises the weight schedules the scheduled estimators
//!   use and writes them as reloadable files, so later simulations skip
//!   synthesis;
//! - `verify` recomputes the estimator identities and span invariants the
//!   library is built on and reports each check.
//!
//! Exit codes: 0 on success, 1 for runtime or verification failures, 2 for
//! usage and configuration errors. All outputs are deterministic in the
//! configuration and seed; rerunning overwrites byte-identical files.

mod presets;
mod verify;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use teamnet_core::harness::{
    compare_report, run_experiment_with, AlgorithmSpec, CostReport, ExperimentConfig,
    GraphChoice, LoadedSchedule,
};
use teamnet_core::oedol::oedol_schedule;
use teamnet_core::oracle::odol_schedule;
use teamnet_core::schedule_io::{read_schedule, write_schedule, WeightSchedule};
use teamnet_core::sdol::sdol_weights;
use teamnet_core::Error as CoreError;

#[derive(Parser)]
#[command(
    name = "teamnet",
    version,
    about = "Distributed MMSE estimation experiments over sensor networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured Monte Carlo experiment and write cost reports.
    Simulate(JobArgs),
    /// Synthesise weight schedules and write them as reloadable files.
    Weights(JobArgs),
    /// Check the estimator identities and span invariants of a configuration.
    Verify(JobArgs),
}

#[derive(Args)]
struct JobArgs {
    /// Experiment configuration file (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Built-in experiment preset: fig6, fig7, fig10, fig11, or fig12.
    #[arg(long, value_name = "NAME", conflicts_with = "config")]
    preset: Option<String>,

    /// Output directory for reports and schedule files.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Override the configured number of Monte Carlo trials.
    #[arg(long, value_name = "N")]
    trials: Option<usize>,

    /// Override the configured master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads; defaults to all cores. Outputs do not depend on it.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,

    /// Directory of precomputed weight files (as written by `weights`);
    /// matching files are loaded instead of synthesised.
    #[arg(long, value_name = "DIR")]
    weights: Option<PathBuf>,

    /// Chattier progress logging on stderr.
    #[arg(short, long)]
    verbose: bool,
}

/// A failed command: the message goes to stderr, the code to the shell.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        // Anything wrong with what the user asked for — sizes, graphs,
        // windows, file contents — is a configuration error (2); failures
        // of the computation itself report as runtime errors (1).
        let code = match &e {
            CoreError::InvalidSize(_)
            | CoreError::InvalidGraph(_)
            | CoreError::InvalidScale(_)
            | CoreError::InvalidWindow(_)
            | CoreError::InvalidInput(_)
            | CoreError::InvalidConfig(_)
            | CoreError::UnsupportedPrior(_)
            | CoreError::NotATree(_)
            | CoreError::NotACellTree(_)
            | CoreError::MalformedFile(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// One experiment to process: the configuration plus the stem its output
/// files are named under.
struct Job {
    stem: String,
    config: ExperimentConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let args = match &cli.command {
        Command::Simulate(a) | Command::Weights(a) | Command::Verify(a) => a,
    };
    let level = if args.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init()
        .ok();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::runtime(format!("thread pool: {e}")))?;
    }
    let jobs = load_jobs(args)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", args.out.display())))?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&jobs, a),
        Command::Weights(a) => cmd_weights(&jobs, a),
        Command::Verify(a) => verify::cmd_verify(&jobs, a),
    }
}

fn load_jobs(args: &JobArgs) -> Result<Vec<Job>, Failure> {
    let mut jobs = match (&args.config, &args.preset) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
            let config: ExperimentConfig = toml::from_str(&text)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "experiment".into());
            vec![Job { stem, config }]
        }
        (None, Some(name)) => presets::configs(name)
            .ok_or_else(|| {
                Failure::usage(format!(
                    "unknown preset {name:?}; available: {}",
                    presets::NAMES.join(", ")
                ))
            })?
            .into_iter()
            .map(|(stem, config)| Job { stem, config })
            .collect(),
        _ => {
            return Err(Failure::usage(
                "pass exactly one of --config <path> or --preset <name>",
            ))
        }
    };
    for job in &mut jobs {
        if let Some(trials) = args.trials {
            job.config.trials = trials;
        }
        if let Some(seed) = args.seed {
            job.config.master_seed = seed;
        }
        job.config.validate()?;
    }
    Ok(jobs)
}

/// File name a schedule is stored under: the algorithm label joined with the
/// topology label, e.g. `odol_line.weights.json`.
fn schedule_filename(algorithm: &str, topology: &str) -> String {
    format!("{algorithm}_{topology}.weights.json")
}

/// Loads every precomputed weight file in `dir` that matches an algorithm of
/// this configuration. Absent files are fine (those algorithms synthesise);
/// present but unreadable ones are not.
fn collect_schedules(
    dir: Option<&std::path::Path>,
    config: &ExperimentConfig,
) -> Result<Vec<LoadedSchedule>, Failure> {
    let Some(dir) = dir else {
        return Ok(Vec::new());
    };
    let mut provided = Vec::new();
    for spec in &config.algorithms {
        if matches!(spec, AlgorithmSpec::Drls { .. }) {
            continue;
        }
        let algorithm = spec.label();
        let topology = config.topology_label(spec);
        let path = dir.join(schedule_filename(&algorithm, &topology));
        if !path.exists() {
            continue;
        }
        let mut file = File::open(&path)
            .map_err(|e| Failure::runtime(format!("cannot open {}: {e}", path.display())))?;
        let schedule = read_schedule(&mut file)?;
        log::info!("loaded {} weights from {}", algorithm, path.display());
        provided.push(LoadedSchedule {
            algorithm,
            topology,
            schedule,
        });
    }
    Ok(provided)
}

fn create_output(path: &std::path::Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn finish_output(mut w: BufWriter<File>, path: &std::path::Path) -> Result<(), Failure> {
    w.flush()
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_simulate(jobs: &[Job], args: &JobArgs) -> Result<(), Failure> {
    let mut reports: Vec<CostReport> = Vec::new();
    for job in jobs {
        let provided = collect_schedules(args.weights.as_deref(), &job.config)?;
        log::info!(
            "simulating {} (horizon {}, {} trials)",
            job.stem,
            job.config.horizon,
            job.config.trials
        );
        let report = run_experiment_with(&job.config, provided)?;
        let csv_path = args.out.join(format!("{}.csv", job.stem));
        let mut csv = create_output(&csv_path)?;
        report.write_csv(&mut csv)?;
        finish_output(csv, &csv_path)?;
        let json_path = args.out.join(format!("{}.json", job.stem));
        let mut json = create_output(&json_path)?;
        report.write_json(&mut json)?;
        finish_output(json, &json_path)?;
        println!("wrote {} and {}", csv_path.display(), json_path.display());
        for skip in report.skipped() {
            println!(
                "  skipped {} on {}: {}",
                skip.algorithm, skip.topology, skip.reason
            );
        }
        reports.push(report);
    }

    let total_runs: usize = reports.iter().map(|r| r.runs().len()).sum();
    if total_runs >= 2 {
        let refs: Vec<&CostReport> = reports.iter().collect();
        let summary = compare_report(&refs)?;
        let group = args
            .preset
            .clone()
            .unwrap_or_else(|| jobs[0].stem.clone());
        let path = args.out.join(format!("{group}_comparison.json"));
        let mut out = create_output(&path)?;
        serde_json::to_writer_pretty(&mut out, &summary)
            .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
        writeln!(out).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
        finish_output(out, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_weights(jobs: &[Job], args: &JobArgs) -> Result<(), Failure> {
    for job in jobs {
        let (topo, model, _) = teamnet_core::harness::experiment_world(&job.config)?;
        for spec in &job.config.algorithms {
            let label = spec.label();
            if matches!(spec, AlgorithmSpec::Drls { .. }) {
                println!("{label}: the diffusion baseline is recursive and has no precomputed weights");
                continue;
            }
            let graph = match spec.graph() {
                GraphChoice::Original => topo.clone(),
                GraphChoice::SpanningTree => topo.spanning_tree(),
            };
            log::info!("synthesising {label} weights for {}", job.stem);
            let schedule = match spec {
                AlgorithmSpec::Odol { .. } => {
                    WeightSchedule::Odol(odol_schedule(&graph, &model, job.config.horizon)?)
                }
                AlgorithmSpec::Oedol { .. } => {
                    WeightSchedule::Oedol(oedol_schedule(&graph, &model, job.config.horizon)?)
                }
                AlgorithmSpec::Sdol { window, .. } => {
                    WeightSchedule::Sdol(sdol_weights(&graph, &model, *window)?)
                }
                AlgorithmSpec::Drls { .. } => unreachable!("handled above"),
            };
            let path = args
                .out
                .join(schedule_filename(&label, &job.config.topology_label(spec)));
            let mut file = create_output(&path)?;
            write_schedule(&mut file, &schedule)?;
            finish_output(file, &path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
