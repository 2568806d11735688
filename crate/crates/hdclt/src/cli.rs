//! Command-line definitions and dispatch.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use hdclt_core::bootstrap::{bootstrap, mean_test, simultaneous_cis, BootstrapMethod};
use hdclt_core::vectors::sample_population;
use serde_json::json;

use crate::checks::{run_suite, CheckScale, Suite};
use crate::error::{AppError, AppResult};
use crate::experiments::{method_name, run_experiment, write_outputs, ExperimentConfig};
use crate::io::{
    matrix_to_csv, read_sample, spec_from_json, write_atomic, write_json, write_matrix_binary,
};
use crate::manifest::{config_hash, sha256_hex, RunManifest, RunStatus};
use crate::parallel::{resolve_threads, with_pool};

#[derive(Debug, Parser)]
#[command(
    name = "hdclt",
    version,
    about = "High-dimensional CLT and bootstrap laboratory"
)]
pub struct Cli {
    /// Worker thread cap (falls back to HDCLT_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Empirical,
    Multiplier,
}

impl From<MethodArg> for BootstrapMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Empirical => BootstrapMethod::Empirical,
            MethodArg::Multiplier => BootstrapMethod::Multiplier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Base directory for relative output paths and the manifest
        /// (default: the config's directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a self-check suite.
    Check {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Where to write the JSON report (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the large probe counts and budgets.
        #[arg(long)]
        full: bool,
    },
    /// Simultaneous intervals and the zero-mean test for a data matrix.
    Infer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "multiplier")]
        method: MethodArg,
        #[arg(long = "B", default_value_t = 2000)]
        b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bootstrap the max statistic and save the summary.
    Boot {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "multiplier")]
        method: MethodArg,
        #[arg(long = "B", default_value_t = 2000)]
        b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a data matrix from a population spec.
    Sample {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "binary")]
        format: MatrixFormat,
    },
}

/// Runs a parsed command line and returns the process exit status.
pub fn execute(cli: Cli) -> i32 {
    let threads = resolve_threads(cli.threads);
    let result = with_pool(threads, move || dispatch(cli.command, threads)).and_then(|r| r);
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("hdclt: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, threads: Option<usize>) -> AppResult<i32> {
    match command {
        Command::Run { config, out, seed } => cmd_run(&config, out.as_deref(), seed, threads),
        Command::Check {
            suite,
            out,
            seed,
            full,
        } => cmd_check(suite, out.as_deref(), seed, full),
        Command::Infer {
            data,
            alpha,
            method,
            b,
            seed,
            out,
        } => cmd_infer(&data, alpha, method.into(), b, seed, out.as_deref()),
        Command::Boot {
            data,
            alpha,
            method,
            b,
            seed,
            out,
        } => cmd_boot(&data, alpha, method.into(), b, seed, &out),
        Command::Sample {
            spec,
            n,
            seed,
            out,
            format,
        } => cmd_sample(&spec, n, seed, &out, format),
    }
}

/// Executes an experiment config. The manifest is written before the run
/// and rewritten when it ends, including on failure.
pub fn cmd_run(
    config: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> AppResult<i32> {
    let base = match out {
        Some(dir) => dir.to_path_buf(),
        None => config
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    let manifest_path = base.join("manifest.json");
    let raw = fs::read(config);
    let raw_hash = raw.as_ref().map(|b| sha256_hex(b)).unwrap_or_default();
    let mut manifest = RunManifest::start(config, raw_hash, threads);
    let outcome = (|| -> AppResult<(i32, RunStatus)> {
        let bytes = raw.map_err(|e| AppError::io(config, e))?;
        let text =
            String::from_utf8(bytes).map_err(|_| AppError::validation("config: not UTF-8"))?;
        let mut cfg = ExperimentConfig::from_json(&text)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        manifest.config_sha256 = config_hash(&cfg);
        manifest.master_seed = Some(cfg.seed);
        manifest.write(&manifest_path)?;
        let result = run_experiment(&cfg)?;
        manifest.outputs = write_outputs(&cfg, &base, &result)?;
        Ok(if result.pass {
            (0, RunStatus::Succeeded)
        } else {
            (1, RunStatus::ChecksFailed)
        })
    })();
    match outcome {
        Ok((code, status)) => {
            manifest.finish(status, code, None);
            manifest.write(&manifest_path)?;
            Ok(code)
        }
        Err(e) => {
            manifest.finish(RunStatus::Failed, e.exit_code(), Some(e.to_string()));
            // the original error matters more than a failed manifest write
            let _ = manifest.write(&manifest_path);
            Err(e)
        }
    }
}

pub fn cmd_check(suite: Suite, out: Option<&Path>, seed: u64, full: bool) -> AppResult<i32> {
    let scale = if full {
        CheckScale::full()
    } else {
        CheckScale::quick()
    };
    let report = run_suite(suite, &scale, seed);
    match out {
        Some(path) => write_json(path, &report)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("serializes")
        ),
    }
    if report.pass {
        Ok(0)
    } else {
        eprintln!("hdclt: failed checks: {}", report.failed.join(", "));
        Ok(1)
    }
}

fn load_for_bootstrap(data: &Path) -> AppResult<hdclt_core::SampleMatrix> {
    let x = read_sample(data)?;
    if x.n() < 2 {
        return Err(AppError::validation(format!("data: n = {} < 2", x.n())));
    }
    Ok(x)
}

pub fn cmd_infer(
    data: &Path,
    alpha: f64,
    method: BootstrapMethod,
    b: usize,
    seed: u64,
    out: Option<&Path>,
) -> AppResult<i32> {
    let x = load_for_bootstrap(data)?;
    let summary =
        bootstrap(&x, method, b, seed, alpha).map_err(|e| AppError::validation(e.to_string()))?;
    let cis = simultaneous_cis(&x, &summary);
    let report = json!({
        "n": x.n(),
        "p": x.p(),
        "alpha": alpha,
        "method": method_name(method),
        "B": b,
        "seed": seed,
        "q_hat": summary.q_hat,
        "centers": cis.centers,
        "half_width": cis.half_width,
        "reject": mean_test(&x, &summary),
    });
    let text = serde_json::to_string_pretty(&report).expect("serializes");
    if let Some(path) = out {
        write_atomic(path, format!("{text}\n").as_bytes())?;
    }
    println!("{text}");
    Ok(0)
}

pub fn cmd_boot(
    data: &Path,
    alpha: f64,
    method: BootstrapMethod,
    b: usize,
    seed: u64,
    out: &Path,
) -> AppResult<i32> {
    let x = load_for_bootstrap(data)?;
    let summary =
        bootstrap(&x, method, b, seed, alpha).map_err(|e| AppError::validation(e.to_string()))?;
    write_json(out, &summary)?;
    println!(
        "{}",
        json!({ "q_hat": summary.q_hat, "B": b, "summary": out })
    );
    Ok(0)
}

pub fn cmd_sample(
    spec: &Path,
    n: usize,
    seed: u64,
    out: &Path,
    format: MatrixFormat,
) -> AppResult<i32> {
    let text = fs::read_to_string(spec).map_err(|e| AppError::io(spec, e))?;
    let spec = spec_from_json(&text)?;
    if n == 0 {
        return Err(AppError::validation("n: must be positive"));
    }
    let x = sample_population(&spec, n, seed)?;
    match format {
        MatrixFormat::Binary => write_matrix_binary(out, x.data())?,
        MatrixFormat::Csv => write_atomic(out, matrix_to_csv(x.data()).as_bytes())?,
    }
    Ok(0)
}
