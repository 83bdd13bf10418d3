//! Command line front end: generate streams, replay them with optional
//! per-step verification, and run benchmark sweeps.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use dynkc::harness::bench::{bench_sweep, cells_to_csv, parse_bench_config};
use dynkc::harness::gen::{generate, GenKind, MetricSpec, StreamSpec};
use dynkc::harness::run::{run_stream, EngineChoice, RunOptions};
use dynkc::stream::{parse_stream, write_stream_text};
use dynkc::RunError;

#[derive(Parser)]
#[command(name = "dynkc", about = "Fully dynamic k-centers clustering harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a stream through the ladder and write a JSON report.
    Run {
        #[arg(long)]
        stream: PathBuf,
        /// Engine: lfmis (exact), lsh, or det.
        #[arg(long)]
        engine: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps: f64,
        /// LSH approximation factor.
        #[arg(long, default_value_t = 2.0)]
        c: f64,
        /// LSH failure probability.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Cross-check every step against the brute-force oracles.
        #[arg(long)]
        verify: bool,
        /// Report solutions for every k simultaneously.
        #[arg(long)]
        k_all: bool,
        #[arg(long)]
        report: PathBuf,
    },
    /// Generate a stream file.
    Gen {
        /// Kind: uniform-churn, sliding-window, planted-clusters,
        /// adversarial-cluster-deletion.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        seed: u64,
        /// Metric: l2, l1, hamming, jaccard.
        #[arg(long, default_value = "l2")]
        metric: String,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 64)]
        universe: u64,
        /// Sliding-window width.
        #[arg(long, default_value_t = 0)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep a (engine, n, k) benchmark matrix into CSV.
    Bench {
        /// Plain-text key=value config file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { stream, engine, k, eps, c, delta, seed, verify, k_all, report } => {
            let parsed = parse_stream(&stream)
                .with_context(|| format!("reading stream {}", stream.display()))?;
            let base = stream.parent().unwrap_or_else(|| std::path::Path::new("."));
            let opts = RunOptions {
                engine: EngineChoice::parse(&engine)?,
                k,
                eps,
                c,
                delta,
                seed,
                verify,
                k_all,
            };
            let out = run_stream(&parsed, base, &opts);
            match out {
                Ok(rep) => {
                    let json = serde_json::to_string_pretty(&rep)?;
                    std::fs::write(&report, json)
                        .with_context(|| format!("writing {}", report.display()))?;
                    Ok(())
                }
                Err(RunError::Verify { step, msg }) => {
                    anyhow::bail!("verification failed at step {step}: {msg}")
                }
                Err(e) => Err(e.into()),
            }
        }
        Cmd::Gen { kind, n, m, k, seed, metric, dim, universe, window, out } => {
            let metric = match metric.as_str() {
                "l2" => MetricSpec::L2 { dim },
                "l1" => MetricSpec::L1 { dim },
                "hamming" => MetricSpec::Hamming { dim },
                "jaccard" => MetricSpec::Jaccard { universe },
                other => anyhow::bail!("unknown metric {other}"),
            };
            let spec = StreamSpec { kind: GenKind::parse(&kind, window)?, n, m, k, seed, metric };
            let stream = generate(&spec)?;
            std::fs::write(&out, write_stream_text(&stream.header, &stream.ops))
                .with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
        Cmd::Bench { config, out } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = parse_bench_config(&text)?;
            let cells = bench_sweep(&cfg)?;
            std::fs::write(&out, cells_to_csv(&cells))
                .with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
    }
}
