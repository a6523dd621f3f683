//! `ergostat <experiment> --config <path> [--seed S] [--workers W] [--out DIR]`

mod config;
mod experiments;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use log::{error, info};
use serde_json::json;
use sha2::{Digest, Sha256};

use config::{Experiment, ExperimentConfig};

/// Overrides `--config` when set.
const CONFIG_ENV: &str = "ERGOSTAT_CONFIG";
const DEFAULT_OUT: &str = "ergostat-out";

#[derive(Debug, Parser)]
#[command(name = "ergostat", version, about = "Return-time and extreme-value experiments on interval maps")]
struct Args {
    #[arg(value_enum)]
    experiment: Experiment,
    /// Config file, TOML or JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ergostat_core::Error),
    #[error("io error: {0}")]
    Io(String),
}

impl RunError {
    fn csv(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Core(e) if e.is_validation() => 2,
            RunError::Core(_) | RunError::Io(_) => 3,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), RunError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}

fn execute(args: Args) -> Result<(), RunError> {
    let start = Instant::now();
    let config_path = match std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()) {
        Some(p) => PathBuf::from(p),
        None => args
            .config
            .clone()
            .ok_or_else(|| RunError::Config(format!("no config given; pass --config or set {CONFIG_ENV}")))?,
    };
    let config_text = std::fs::read(&config_path).map_err(|e| RunError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let text = String::from_utf8(config_text.clone()).map_err(|_| RunError::Config(format!("{} is not UTF-8", config_path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text, &config_path)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    cfg.validate(args.experiment)?;
    let workers = cfg.workers.unwrap_or_else(rayon::current_num_threads);
    let out_dir = args.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    info!("running {} with seed {} on {workers} workers", args.experiment.name(), cfg.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Io(format!("cannot start worker pool: {e}")))?;
    let artifacts = pool.install(|| experiments::run(args.experiment, &cfg))?;

    // the echo omits fields that must not change the numbers
    let mut echo = cfg.clone();
    echo.workers = None;
    echo.output_dir = None;
    echo.experiment = Some(args.experiment);
    let results = json!({
        "experiment": args.experiment.name(),
        "seed": cfg.seed,
        "config": echo,
        "results": artifacts.summary,
    });
    let mut results_bytes = serde_json::to_vec_pretty(&results).expect("serializable");
    results_bytes.push(b'\n');

    std::fs::create_dir_all(&out_dir).map_err(|e| RunError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut files = vec![("results.json".to_string(), results_bytes)];
    files.extend(artifacts.files);
    let mut listed = Vec::new();
    for (name, bytes) in &files {
        write_file(&out_dir, name, bytes)?;
        listed.push(json!({ "path": name, "sha256": sha256_hex(bytes), "bytes": bytes.len() }));
    }
    let manifest = json!({
        "tool": "ergostat",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": args.experiment.name(),
        "seed": cfg.seed,
        "workers": workers,
        "config_path": config_path.display().to_string(),
        "config_sha256": sha256_hex(&config_text),
        "elapsed_seconds": start.elapsed().as_secs_f64(),
        "files": listed,
    });
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("serializable");
    manifest_bytes.push(b'\n');
    write_file(&out_dir, "manifest.json", &manifest_bytes)?;
    info!("wrote {} files to {}", files.len() + 1, out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
