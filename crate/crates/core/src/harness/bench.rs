//! Benchmark sweep: a cartesian matrix of (engine, n, k) cells, each cell a
//! generated stream replayed without verification, emitted as CSV. Config is
//! plain key=value lines; lists are comma separated.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::RunError;
use crate::harness::gen::{generate, GenKind, MetricSpec, StreamSpec};
use crate::harness::run::{run_stream, EngineChoice, RunOptions};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub engines: Vec<EngineChoice>,
    pub ns: Vec<usize>,
    pub ks: Vec<usize>,
    pub kind: GenKind,
    pub metric: MetricSpec,
    pub m: usize,
    pub seed: u64,
    pub eps: f64,
    pub c: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchCell {
    pub engine: EngineChoice,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub amortized_queries_per_update: f64,
    pub mean_leader_changes_per_update: f64,
    pub wall_time_ms: f64,
    pub restarts: u64,
    pub lsh_wasted_collisions: u64,
}

pub fn parse_bench_config(text: &str) -> Result<BenchConfig, RunError> {
    let mut kv: HashMap<&str, &str> = HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| RunError::Config(format!("expected key=value, got {line}")))?;
        kv.insert(k.trim(), v.trim());
    }
    let get = |k: &str, d: &str| kv.get(k).copied().unwrap_or(d).to_string();
    let list_usize = |k: &str, d: &str| -> Result<Vec<usize>, RunError> {
        get(k, d)
            .split(',')
            .map(|s| s.trim().parse().map_err(|e| RunError::Config(format!("bad {k}: {e}"))))
            .collect()
    };
    let num = |k: &str, d: &str| -> Result<f64, RunError> {
        get(k, d).parse().map_err(|e| RunError::Config(format!("bad {k}: {e}")))
    };
    let engines = get("engines", "general")
        .split(',')
        .map(|s| EngineChoice::parse(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let dim = num("dim", "2")? as usize;
    let universe = num("universe", "64")? as u64;
    let metric = match get("metric", "l2").as_str() {
        "l2" => MetricSpec::L2 { dim },
        "l1" => MetricSpec::L1 { dim },
        "hamming" => MetricSpec::Hamming { dim },
        "jaccard" => MetricSpec::Jaccard { universe },
        other => return Err(RunError::Config(format!("unknown metric {other}"))),
    };
    let window = num("window", "0")? as usize;
    Ok(BenchConfig {
        engines,
        ns: list_usize("n", "256")?,
        ks: list_usize("k", "4")?,
        kind: GenKind::parse(&get("gen", "uniform-churn"), window)?,
        metric,
        m: num("m", "1000")? as usize,
        seed: num("seed", "1")? as u64,
        eps: num("eps", "1.0")?,
        c: num("c", "2.0")?,
        delta: num("delta", "0.1")?,
    })
}

/// Runs every (engine, n, k) cell in parallel with a fixed seed per cell.
pub fn bench_sweep(cfg: &BenchConfig) -> Result<Vec<BenchCell>, RunError> {
    let mut cells = Vec::new();
    for &engine in &cfg.engines {
        for &n in &cfg.ns {
            for &k in &cfg.ks {
                cells.push((engine, n, k));
            }
        }
    }
    let results: Result<Vec<BenchCell>, RunError> = cells
        .par_iter()
        .map(|&(engine, n, k)| {
            let stream = generate(&StreamSpec {
                kind: cfg.kind,
                n,
                m: cfg.m,
                k: k.min(n),
                seed: cfg.seed,
                metric: cfg.metric,
            })?;
            let opts = RunOptions {
                engine,
                k,
                eps: cfg.eps,
                c: cfg.c,
                delta: cfg.delta,
                seed: cfg.seed,
                verify: false,
                k_all: false,
            };
            let start = std::time::Instant::now();
            let report = run_stream(&stream, Path::new("."), &opts)?;
            Ok(BenchCell {
                engine,
                n,
                k,
                m: cfg.m,
                seed: cfg.seed,
                amortized_queries_per_update: report.aggregates.amortized_queries_per_update,
                mean_leader_changes_per_update: report
                    .aggregates
                    .mean_leader_changes_per_update,
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
                restarts: report.aggregates.restarts,
                lsh_wasted_collisions: report.aggregates.lsh_wasted_collisions,
            })
        })
        .collect();
    results
}

/// Schema-versioned CSV with one row per cell.
pub fn cells_to_csv(cells: &[BenchCell]) -> String {
    let mut out = String::from(
        "schema_version,engine,n,k,m,seed,amortized_queries_per_update,\
         mean_leader_changes_per_update,wall_time_ms,restarts,lsh_wasted_collisions\n",
    );
    for c in cells {
        let engine = match c.engine {
            EngineChoice::General => "general",
            EngineChoice::Lsh => "lsh",
            EngineChoice::Det => "det",
        };
        out.push_str(&format!(
            "1,{engine},{},{},{},{},{:.4},{:.4},{:.3},{},{}\n",
            c.n,
            c.k,
            c.m,
            c.seed,
            c.amortized_queries_per_update,
            c.mean_leader_changes_per_update,
            c.wall_time_ms,
            c.restarts,
            c.lsh_wasted_collisions
        ));
    }
    out
}
