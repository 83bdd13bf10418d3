//! Stream generators, the replay/verification driver, and the benchmark
//! sweep. Everything here is plumbing around the ladder: generators emit
//! well-formed stream files, `run` replays them and emits a schema-versioned
//! JSON report, and `bench` sweeps (n, k, engine) cells into CSV.

pub mod bench;
pub mod gen;
pub mod run;
pub mod verify;

pub use bench::{bench_sweep, parse_bench_config, BenchCell, BenchConfig};
pub use gen::{generate, GenKind, MetricSpec, StreamSpec};
pub use run::{run_stream, Aggregates, EngineChoice, RunOptions, RunReport, StepRecord};
