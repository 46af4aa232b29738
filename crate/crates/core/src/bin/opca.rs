use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opca::data::{
    center_columns, empirical_covariance, load_matrix_file, save_f64le, MatrixFormat,
};
use opca::harness::output::{
    write_aggregate_csv, write_file, write_json, write_ode_csv, write_sweep_csv, write_trace_csv,
    OdeSummaryEntry, RunSummary, SweepSummary,
};
use opca::harness::{
    parse_gamma_set, run_experiment, run_ode, run_sweep, worker_count, Experiment, ExperimentConfig,
};
use opca::matops::symmetric_eig;
use opca::OpcaError;

#[derive(Parser)]
#[command(name = "opca", version, about = "Streaming PCA experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of a config and write trace.csv, aggregate.csv, summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a run for each stepsize parameter and mark the best.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `2^a..2^b` or a comma list such as `0.5,1,2^3`.
        #[arg(long, default_value = "2^-5..2^5")]
        gammas: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forward-Euler integration of the limiting ODEs.
    Ode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top eigenpairs of a data file's sample covariance.
    Eig {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: MatrixFormat,
        #[arg(long)]
        top: usize,
        /// Eigenvectors go here as f64le; eigenvalues to the same stem with `.values.csv`.
        #[arg(long)]
        out: PathBuf,
        /// Skip mean-centering the samples.
        #[arg(long)]
        no_center: bool,
    },
}

enum Failure {
    Error(OpcaError),
    AllTrialsFailed,
}

impl From<OpcaError> for Failure {
    fn from(e: OpcaError) -> Self {
        Failure::Error(e)
    }
}

fn ensure_dir(dir: &Path) -> Result<(), OpcaError> {
    std::fs::create_dir_all(dir).map_err(|e| OpcaError::io(dir, e))
}

fn cmd_run(config: &Path, out: &Path) -> Result<(), Failure> {
    let exp = Experiment::new(ExperimentConfig::load(config)?)?;
    let result = run_experiment(&exp, worker_count())?;
    ensure_dir(out)?;
    write_file(&out.join("trace.csv"), |w| {
        write_trace_csv(w, result.records())
    })?;
    write_file(&out.join("aggregate.csv"), |w| {
        write_aggregate_csv(w, &result.aggregate)
    })?;
    write_json(&out.join("summary.json"), &RunSummary::new(&exp, &result))?;
    if result.all_failed() {
        return Err(Failure::AllTrialsFailed);
    }
    println!(
        "final error {:.4e} (variance {:.2e}) over {} trial(s), {} failed",
        result.aggregate.final_mean(),
        result.aggregate.final_variance(),
        result.outcomes.len(),
        result.failed
    );
    Ok(())
}

fn cmd_sweep(config: &Path, gammas: &str, out: &Path) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config)?;
    let gammas = parse_gamma_set(gammas)?;
    let sweep = run_sweep(&cfg, &gammas, worker_count())?;
    ensure_dir(out)?;
    write_file(&out.join("trace.csv"), |w| write_sweep_csv(w, &sweep))?;
    let summary = SweepSummary {
        algo: format!("{:?}", cfg.algo.name).to_lowercase(),
        stepsize: cfg.stepsize_kind()?.label().to_string(),
        entries: &sweep.entries,
        best_gamma: sweep.best_gamma(),
        best_final_error: sweep.best_error(),
        wall_seconds: sweep.wall_seconds,
    };
    write_json(&out.join("summary.json"), &summary)?;
    match sweep.best_gamma() {
        Some(g) => {
            println!(
                "best gamma {g} with final error {:.4e}",
                sweep.best_error().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        None => Err(Failure::AllTrialsFailed),
    }
}

fn cmd_ode(config: &Path, out: &Path) -> Result<(), Failure> {
    let exp = Experiment::new(ExperimentConfig::load(config)?)?;
    let runs = run_ode(&exp)?;
    ensure_dir(out)?;
    let traces: Vec<_> = runs.iter().map(|(t, _)| t.clone()).collect();
    write_file(&out.join("ode.csv"), |w| write_ode_csv(w, &traces))?;
    let summary: Vec<OdeSummaryEntry> = runs
        .iter()
        .map(|(t, s)| OdeSummaryEntry::new(t, *s))
        .collect();
    write_json(&out.join("summary.json"), &summary)?;
    for e in &summary {
        println!(
            "{} dt={} final error {:.3e}{}",
            e.limit,
            e.dt,
            e.final_error,
            if e.diverged { " (diverged)" } else { "" }
        );
    }
    Ok(())
}

fn cmd_eig(
    input: &Path,
    format: MatrixFormat,
    top: usize,
    out: &Path,
    no_center: bool,
) -> Result<(), Failure> {
    let mut a = load_matrix_file(input, format)?;
    if !no_center {
        a = center_columns(&a);
    }
    if top == 0 || top > a.nrows() {
        return Err(OpcaError::Config(format!("--top must be in 1..={}", a.nrows())).into());
    }
    let eig = symmetric_eig(&empirical_covariance(&a))?;
    save_f64le(out, &eig.top(top))?;
    let values_path = out.with_extension("values.csv");
    write_file(&values_path, |w| {
        use std::io::Write;
        for v in eig.eigenvalues.iter().take(top) {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    })?;
    println!("wrote {} and {}", out.display(), values_path.display());
    Ok(())
}

fn exit_code(err: &OpcaError) -> u8 {
    match err {
        OpcaError::Io { .. } | OpcaError::Parse { .. } | OpcaError::DimensionMismatch(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out } => cmd_run(config, out),
        Command::Sweep {
            config,
            gammas,
            out,
        } => cmd_sweep(config, gammas, out),
        Command::Ode { config, out } => cmd_ode(config, out),
        Command::Eig {
            input,
            format,
            top,
            out,
            no_center,
        } => cmd_eig(input, *format, *top, out, *no_center),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::AllTrialsFailed) => {
            eprintln!("error: every trial failed");
            ExitCode::from(3)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
