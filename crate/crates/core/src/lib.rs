//! Fully dynamic k-centers clustering under point insertions and deletions.
//!
//! A geometric ladder of threshold scales is maintained; at each scale a
//! leader-follower maximal-independent-set engine (exact neighbor scans,
//! LSH-bucketed scans, or a deterministic binary tree) answers whether k+1
//! pairwise-far points exist. The lowest valid scale yields a clustering with
//! a (2+eps)-style cost guarantee, verified against brute-force oracles.

pub mod dettree;
pub mod error;
pub mod harness;
pub mod ladder;
pub mod lfmis;
pub mod lsh;
pub mod metric;
pub mod oracles;
pub mod seeds;
pub mod stream;

pub use error::{EngineError, LshError, MetricError, OracleError, RunError, StreamError};
pub use ladder::{BackendKind, DoublingLadder, Ladder, RestartLadder, Solution};
pub use metric::{MetricConfig, MetricKind, PointId, PointPayload, PointStore};
pub use stream::{StreamFile, StreamHeader, StreamOp};

/// Concrete scalar used by the engines and the CLI.
pub type Scalar = f64;
