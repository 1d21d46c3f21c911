use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use nfce::SimulationConfig;
use nfce_harness::{
    emit_results, load_config, results::write_results, run_scenario, Format, HarnessError, RunOptions, ScenarioName,
    ScenarioSection, ScenarioSpec,
};

/// Run one simulation scenario and write its result table.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Cli {
    scenario: ScenarioName,
    /// JSON configuration; missing fields take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Zero the `seconds` column so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
    #[arg(long, short)]
    quiet: bool,
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let (sim, section) = match &cli.config {
        Some(path) => {
            let loaded = load_config(path)?;
            (loaded.simulation, loaded.scenario)
        }
        None => (SimulationConfig::default(), ScenarioSection::default()),
    };
    let spec = ScenarioSpec::resolve(&section, Some(cli.scenario), cli.trials, cli.seed)?;
    if !cli.quiet {
        eprintln!("{}: {} trials, seed {}", spec.name, spec.trials, spec.seed);
    }
    let started = Instant::now();
    let output = run_scenario(
        &spec,
        &sim,
        RunOptions {
            progress: !cli.quiet,
            timing: !cli.no_timing,
        },
    )?;
    match &cli.out {
        Some(path) => {
            emit_results(&output.records, path, cli.format)?;
            if let Some(theta) = &output.theta {
                let mut theta_path = path.clone().into_os_string();
                theta_path.push(".theta.csv");
                let theta_path = PathBuf::from(theta_path);
                let file = std::fs::File::create(&theta_path).map_err(|e| HarnessError::Io {
                    path: theta_path.clone(),
                    source: e,
                })?;
                theta.write_csv(std::io::BufWriter::new(file))?;
                if !cli.quiet {
                    eprintln!("reconstruction map written to {}", theta_path.display());
                }
            }
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_results(&output.records, &mut lock, cli.format)?;
            lock.flush().map_err(|e| HarnessError::Output(e.to_string()))?;
        }
    }
    if !cli.quiet {
        eprintln!(
            "{}: {} records, {} failed trials, {:.2} s",
            spec.name,
            output.records.len(),
            output.failed_trials,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
