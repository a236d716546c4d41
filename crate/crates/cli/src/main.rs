//! `floodchain` command-line driver.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use floodchain::experiment::{
    build_scenario, label, make_forcings, run_experiment, run_matrix, summary_table, threads_from_env, with_threads,
    write_experiment, write_matrix, write_twin, Experiment, ExperimentConfig, ForcingSource, Manifest, Twin,
};
use floodchain::Error;

#[derive(Parser)]
#[command(
    name = "floodchain",
    version,
    about = "Twin experiments for flood reanalysis with ensemble data assimilation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run(RunArgs),
    /// Run OL, IDA and IGDA under both forcings and write the summary table.
    Matrix(MatrixArgs),
    /// Check a configuration without running anything expensive.
    Validate(ConfigArg),
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    experiment: Option<Experiment>,
    #[arg(long)]
    forcing: Option<ForcingSource>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = threads_from_env().and_then(|threads| {
        with_threads(threads, || match cli.command {
            Command::Run(a) => run(a),
            Command::Matrix(a) => matrix(a),
            Command::Validate(a) => validate(&a.config),
        })?
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({
                "status": "error",
                "kind": e.kind(),
                "message": e.to_string(),
            });
            eprintln!("{report}");
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
    out
}

fn run(a: RunArgs) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(e) = a.experiment {
        cfg.run.experiment = e;
    }
    if let Some(f) = a.forcing {
        cfg.run.forcing = f;
    }
    if let Some(s) = a.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = a.out {
        cfg.run.output = o;
    }
    cfg.validate_experiment(cfg.run.experiment)?;
    let out = cfg.run.output.clone();
    let mut timings = BTreeMap::new();
    let twin = timed(&mut timings, "twin", || Twin::build(&cfg))?;
    let (e, f, seed) = (cfg.run.experiment, cfg.run.forcing, cfg.run.seed);
    let result = timed(&mut timings, "experiment", || run_experiment(&twin, e, f, seed))?;
    let mut files = write_twin(&out.join("twin"), &twin)?;
    files.extend(write_experiment(&out.join(result.label()), &twin, &result)?);
    print!("{}", summary_table(&twin, std::slice::from_ref(&result))?.to_text());
    finish("run", &twin, seed, vec![label(e, f)], &out, &files, timings)
}

fn matrix(a: MatrixArgs) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = a.out {
        cfg.run.output = o;
    }
    cfg.validate_matrix()?;
    let out = cfg.run.output.clone();
    let seed = cfg.run.seed;
    let mut timings = BTreeMap::new();
    let twin = timed(&mut timings, "twin", || Twin::build(&cfg))?;
    let results = timed(&mut timings, "matrix", || run_matrix(&twin, seed))?;
    let mut files = write_twin(&out.join("twin"), &twin)?;
    files.extend(write_matrix(&out, &twin, &results)?);
    print!("{}", summary_table(&twin, &results)?.to_text());
    let labels = results.iter().map(|r| r.label()).collect();
    finish("matrix", &twin, seed, labels, &out, &files, timings)
}

fn finish(
    command: &str,
    twin: &Twin,
    seed: u64,
    experiments: Vec<String>,
    out: &Path,
    files: &[PathBuf],
    timings: BTreeMap<String, f64>,
) -> Result<(), Error> {
    let manifest = Manifest::new(command, twin, seed, experiments, out, files, timings)?;
    let path = out.join("manifest.toml");
    manifest.write(&path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn validate(path: &Path) -> Result<(), Error> {
    let cfg = ExperimentConfig::load(path)?;
    cfg.validate_experiment(cfg.run.experiment)?;
    let scenario = build_scenario(&cfg)?;
    let forcings = make_forcings(&cfg)?;
    println!(
        "ok: {}x{} grid, {} stations, {} subdomains, {} reaches, {} forcing steps",
        scenario.grid.nx(),
        scenario.grid.ny(),
        scenario.stations.len(),
        scenario.subdomains.len(),
        forcings.network.len(),
        forcings.observed.times().len(),
    );
    Ok(())
}
