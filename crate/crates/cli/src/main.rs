//! `polymer`: batch runner for the experiment catalog.
//!
//! Exit status: 0 when every suite passes, 1 when a suite fails, 2 for
//! unusable input (bad config, unknown experiment, invalid parameters).

mod cache;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use polymer::experiments::{experiment_info, resolved_params, run_suite, Table, CATALOG};
use polymer::mc::McRunner;
use polymer::stats::{Report, TestRecord};

use crate::cache::FileCache;
use crate::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "polymer", version, about = "Monte Carlo checks for half-space polymer stationary measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Run with this single seed instead of the configured list.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory, overriding `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the experiment catalog.
    List,
}

/// Failure that maps to exit status 2.
struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Usage> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_table(dir: &Path, t: &Table) -> Result<(), Usage> {
    let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", t.name)))?;
    w.write_record(&t.header)?;
    for row in &t.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn run(config_path: &Path, seed_override: Option<u64>, workers: Option<usize>, out: Option<PathBuf>) -> Result<bool, Usage> {
    let mut config = ExperimentConfig::load(config_path).map_err(Usage)?;
    let info = experiment_info(&config.experiment).ok_or_else(|| {
        let names: Vec<&str> = CATALOG.iter().map(|e| e.name).collect();
        Usage(format!("unknown experiment '{}'; known: {}", config.experiment, names.join(", ")))
    })?;
    config.params = resolved_params(info.name, &config.params)?;
    config.n_samples = Some(config.n_samples.unwrap_or(info.default_samples));
    if let Some(s) = seed_override {
        config.seeds = vec![s];
    }
    if let Some(o) = out {
        config.output_dir = o;
    }

    let root = config.output_dir.join(info.name);
    fs::create_dir_all(&root)?;
    write_json(&root.join("config.json"), &config)?;
    let cache = Arc::new(FileCache::new(root.join(".checkpoint").join(config.sampling_hash()))?);

    let mut all_pass = true;
    for &seed in &config.seeds {
        let mut runner = McRunner::new(seed).with_cache(cache.clone());
        if let Some(w) = workers {
            runner = runner.with_workers(w);
        }
        let suite = run_suite(info.name, &config.params, config.n_samples, &runner)?;
        let dir = root.join(format!("seed-{seed}"));
        fs::create_dir_all(&dir)?;
        let mut seeds = vec![seed];
        if suite.retried {
            seeds.push(suite.seed_used);
        }
        let report = Report {
            experiment: info.name.to_string(),
            paper_ref: info.verifies.to_string(),
            params: config.params.clone(),
            seeds,
            results: suite.outcome.records.clone(),
            wallclock_s: suite.wallclock_s,
        };
        if config.emit.json {
            write_json(&dir.join("report.json"), &report)?;
        }
        if config.emit.csv {
            for t in &suite.outcome.tables {
                write_table(&dir, t)?;
            }
        }
        let failed: Vec<&TestRecord> = report.results.iter().filter(|r| !r.pass).collect();
        let pass = suite.verdict.passed();
        if pass {
            let _ = fs::remove_file(dir.join("failures.json"));
        } else {
            write_json(&dir.join("failures.json"), &failed)?;
        }
        println!(
            "{} seed {seed}: {:?}, {}/{} records pass{}",
            info.name,
            suite.verdict,
            report.results.len() - failed.len(),
            report.results.len(),
            if suite.retried { format!(" (retried with seed {})", suite.seed_used) } else { String::new() }
        );
        for r in &failed {
            eprintln!("failed: {}", serde_json::to_string(r)?);
        }
        all_pass &= pass;
    }
    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for e in &CATALOG {
                println!("{} → {}", e.name, e.verifies);
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, seed_override, workers, out } => match run(&config, seed_override, workers, out) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(Usage(msg)) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        },
    }
}
