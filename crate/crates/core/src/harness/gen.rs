//! Deterministic stream generators. All kinds emit well-formed streams (no
//! double inserts, no dangling deletes, no id reuse) and derive r_min/r_max
//! from the realized pairwise distances, so the grid invariant holds for
//! every pair of points the stream ever activates.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::RunError;
use crate::metric::{distance, MetricConfig, MetricKind, PointId, PointPayload};
use crate::stream::{validate_ops, StreamFile, StreamHeader, StreamOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    UniformChurn,
    SlidingWindow { window: usize },
    PlantedClusters,
    AdversarialClusterDeletion,
}

impl GenKind {
    pub fn parse(s: &str, window: usize) -> Result<GenKind, RunError> {
        match s {
            "uniform-churn" => Ok(GenKind::UniformChurn),
            "sliding-window" => Ok(GenKind::SlidingWindow { window }),
            "planted-clusters" => Ok(GenKind::PlantedClusters),
            "adversarial-cluster-deletion" => Ok(GenKind::AdversarialClusterDeletion),
            other => Err(RunError::Config(format!("unknown generator kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricSpec {
    L2 { dim: usize },
    L1 { dim: usize },
    Hamming { dim: usize },
    Jaccard { universe: u64 },
}

impl MetricSpec {
    fn kind(&self) -> MetricKind {
        match self {
            MetricSpec::L2 { .. } => MetricKind::Lp { p: 2.0 },
            MetricSpec::L1 { .. } => MetricKind::Lp { p: 1.0 },
            MetricSpec::Hamming { .. } => MetricKind::Hamming,
            MetricSpec::Jaccard { .. } => MetricKind::Jaccard,
        }
    }

    fn dim(&self) -> usize {
        match self {
            MetricSpec::L2 { dim } | MetricSpec::L1 { dim } | MetricSpec::Hamming { dim } => *dim,
            MetricSpec::Jaccard { .. } => 0,
        }
    }

    fn universe(&self) -> u64 {
        match self {
            MetricSpec::Jaccard { universe } => *universe,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StreamSpec {
    pub kind: GenKind,
    /// Target maximum number of simultaneously active points.
    pub n: usize,
    /// Total number of stream operations.
    pub m: usize,
    /// Cluster count for the planted and adversarial kinds.
    pub k: usize,
    pub seed: u64,
    pub metric: MetricSpec,
}

struct PayloadGen {
    metric: MetricSpec,
    rng: ChaCha8Rng,
    emitted: Vec<PointPayload>,
    cluster_centers: Vec<PointPayload>,
}

impl PayloadGen {
    fn new(metric: MetricSpec, k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cluster_centers = (0..k).map(|_| Self::fresh_base(&metric, &mut rng)).collect();
        PayloadGen { metric, rng, emitted: Vec::new(), cluster_centers }
    }

    fn fresh_base(metric: &MetricSpec, rng: &mut ChaCha8Rng) -> PointPayload {
        match metric {
            MetricSpec::L2 { dim } | MetricSpec::L1 { dim } => {
                PointPayload::Vector((0..*dim).map(|_| rng.gen::<f64>()).collect())
            }
            MetricSpec::Hamming { dim } => {
                PointPayload::Bits((0..*dim).map(|_| rng.gen::<bool>()).collect())
            }
            MetricSpec::Jaccard { universe } => {
                let set: BTreeSet<u64> = (0..*universe).filter(|_| rng.gen::<bool>()).collect();
                PointPayload::Set(set)
            }
        }
    }

    fn near(&mut self, center: usize) -> PointPayload {
        let base = self.cluster_centers[center].clone();
        match (&base, self.metric) {
            (PointPayload::Vector(xs), _) => {
                // tight gaussian-ish jitter around the planted center
                PointPayload::Vector(
                    xs.iter().map(|x| x + (self.rng.gen::<f64>() - 0.5) * 0.05).collect(),
                )
            }
            (PointPayload::Bits(bs), _) => {
                let mut bs = bs.clone();
                if !bs.is_empty() {
                    let flips = 1 + self.rng.gen_range(0..1.max(bs.len() / 16));
                    for _ in 0..flips {
                        let i = self.rng.gen_range(0..bs.len());
                        bs[i] = !bs[i];
                    }
                }
                PointPayload::Bits(bs)
            }
            (PointPayload::Set(s), MetricSpec::Jaccard { universe }) => {
                let mut s = s.clone();
                for _ in 0..2 {
                    let e = self.rng.gen_range(0..universe.max(1));
                    if !s.remove(&e) {
                        s.insert(e);
                    }
                }
                PointPayload::Set(s)
            }
            _ => base,
        }
    }

    /// Draws a payload distinct (at positive distance) from everything
    /// emitted so far, by rejection.
    fn draw(&mut self, cluster: Option<usize>) -> Result<PointPayload, RunError> {
        let cfg = MetricConfig::new(self.metric.kind(), self.metric.dim(), self.metric.universe(), 1.0, 1.0)
            .map_err(RunError::Metric)?;
        for _ in 0..200 {
            let cand = match cluster {
                Some(c) => self.near(c),
                None => Self::fresh_base(&self.metric, &mut self.rng),
            };
            let dup = self
                .emitted
                .iter()
                .any(|p| distance(p, &cand, &cfg).map(|d| d == 0.0).unwrap_or(true));
            if !dup {
                self.emitted.push(cand.clone());
                return Ok(cand);
            }
        }
        Err(RunError::Config(
            "payload rejection sampling failed: metric space too small for n".into(),
        ))
    }
}

/// Generates a stream per spec; deterministic in `spec.seed`.
pub fn generate(spec: &StreamSpec) -> Result<StreamFile, RunError> {
    if spec.n == 0 || spec.m == 0 {
        return Err(RunError::Config("n and m must be positive".into()));
    }
    if spec.k > spec.n {
        return Err(RunError::Config(format!("k = {} exceeds n = {}", spec.k, spec.n)));
    }
    let k = spec.k.max(1);
    let mut pg = PayloadGen::new(spec.metric, k, spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x00C0FFEE);
    let mut ops: Vec<StreamOp> = Vec::with_capacity(spec.m);
    let mut next_id = 1u64;
    let mut live: Vec<PointId> = Vec::new();

    let push_insert =
        |ops: &mut Vec<StreamOp>, live: &mut Vec<PointId>, next_id: &mut u64, pg: &mut PayloadGen, cluster: Option<usize>|
         -> Result<(), RunError> {
            let id = PointId(*next_id);
            *next_id += 1;
            ops.push(StreamOp::Insert { id, payload: pg.draw(cluster)? });
            live.push(id);
            Ok(())
        };

    match spec.kind {
        GenKind::UniformChurn => {
            while ops.len() < spec.m {
                let insert = live.is_empty() || (live.len() < spec.n && rng.gen::<bool>());
                if insert {
                    push_insert(&mut ops, &mut live, &mut next_id, &mut pg, None)?;
                } else {
                    let i = rng.gen_range(0..live.len());
                    let id = live.swap_remove(i);
                    ops.push(StreamOp::Delete { id });
                }
            }
        }
        GenKind::SlidingWindow { window } => {
            if window == 0 {
                return Err(RunError::Config("window must be positive".into()));
            }
            while ops.len() < spec.m {
                push_insert(&mut ops, &mut live, &mut next_id, &mut pg, None)?;
                if live.len() > window && ops.len() < spec.m {
                    let id = live.remove(0);
                    ops.push(StreamOp::Delete { id });
                }
            }
        }
        GenKind::PlantedClusters => {
            let mut cluster_of: Vec<usize> = Vec::new();
            while ops.len() < spec.m && live.len() < spec.n {
                let c = live.len() % k;
                push_insert(&mut ops, &mut live, &mut next_id, &mut pg, Some(c))?;
                cluster_of.push(c);
            }
            while ops.len() < spec.m {
                if live.len() >= 2 && rng.gen::<bool>() {
                    let i = rng.gen_range(0..live.len());
                    let id = live.swap_remove(i);
                    cluster_of.swap_remove(i);
                    ops.push(StreamOp::Delete { id });
                } else {
                    let c = rng.gen_range(0..k);
                    push_insert(&mut ops, &mut live, &mut next_id, &mut pg, Some(c))?;
                    cluster_of.push(c);
                }
            }
        }
        GenKind::AdversarialClusterDeletion => {
            // k equal clusters inserted in order, then deletions sweep the
            // clusters in reverse insertion order, random order inside each
            let per = spec.n / k;
            if per == 0 {
                return Err(RunError::Config("n/k must be at least 1".into()));
            }
            let mut clusters: Vec<Vec<PointId>> = vec![Vec::new(); k];
            for c in 0..k {
                for _ in 0..per {
                    if ops.len() >= spec.m {
                        break;
                    }
                    push_insert(&mut ops, &mut live, &mut next_id, &mut pg, Some(c))?;
                    clusters[c].push(*live.last().unwrap());
                }
            }
            'del: for c in (0..k).rev() {
                clusters[c].shuffle(&mut rng);
                for id in clusters[c].drain(..) {
                    if ops.len() >= spec.m {
                        break 'del;
                    }
                    ops.push(StreamOp::Delete { id });
                }
            }
        }
    }

    // derive grid bounds from everything the stream activates
    let cfg_probe = MetricConfig::new(
        spec.metric.kind(),
        spec.metric.dim(),
        spec.metric.universe(),
        1.0,
        1.0,
    )?;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..pg.emitted.len() {
        for j in 0..i {
            let d = distance(&pg.emitted[i], &pg.emitted[j], &cfg_probe)?;
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    if !lo.is_finite() {
        lo = 1.0;
        hi = 1.0;
    }
    let cfg = MetricConfig::new(
        spec.metric.kind(),
        spec.metric.dim(),
        spec.metric.universe(),
        lo,
        hi.max(lo),
    )?;
    validate_ops(&ops)?;
    Ok(StreamFile { header: StreamHeader::Builtin(cfg), ops })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: GenKind, n: usize, m: usize, k: usize, seed: u64) -> StreamSpec {
        StreamSpec { kind, n, m, k, seed, metric: MetricSpec::L2 { dim: 2 } }
    }

    #[test]
    fn uniform_churn_well_formed() {
        let s = generate(&spec(GenKind::UniformChurn, 8, 20, 1, 1)).unwrap();
        assert_eq!(s.ops.len(), 20);
        validate_ops(&s.ops).unwrap();
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate(&spec(GenKind::UniformChurn, 8, 30, 1, 7)).unwrap();
        let b = generate(&spec(GenKind::UniformChurn, 8, 30, 1, 7)).unwrap();
        let c = generate(&spec(GenKind::UniformChurn, 8, 30, 1, 8)).unwrap();
        assert_eq!(a.ops, b.ops);
        assert_ne!(a.ops, c.ops);
    }

    #[test]
    fn sliding_window_deletes_in_insertion_order() {
        let s = generate(&spec(GenKind::SlidingWindow { window: 3 }, 8, 40, 1, 2)).unwrap();
        validate_ops(&s.ops).unwrap();
        let deletes: Vec<u64> = s
            .ops
            .iter()
            .filter_map(|op| match op {
                StreamOp::Delete { id } => Some(id.0),
                _ => None,
            })
            .collect();
        assert!(deletes.windows(2).all(|w| w[0] < w[1]));
        // window bound: never more than window+1 live points
        let mut live = 0i64;
        for op in &s.ops {
            match op {
                StreamOp::Insert { .. } => live += 1,
                StreamOp::Delete { .. } => live -= 1,
            }
            assert!(live <= 4);
        }
    }

    #[test]
    fn adversarial_inserts_then_reverse_cluster_deletes() {
        let s =
            generate(&spec(GenKind::AdversarialClusterDeletion, 40, 60, 4, 3)).unwrap();
        validate_ops(&s.ops).unwrap();
        assert!(s.ops[..40].iter().all(|op| matches!(op, StreamOp::Insert { .. })));
        assert!(s.ops[40..].iter().all(|op| matches!(op, StreamOp::Delete { .. })));
        // clusters are 10 ids each, deleted in reverse cluster blocks
        let deletes: Vec<u64> = s.ops[40..].iter().map(|op| op.id().0).collect();
        assert!(deletes[..10].iter().all(|&id| id > 30));
        assert!(deletes[10..20].iter().all(|&id| id > 20 && id <= 30));
    }

    #[test]
    fn planted_clusters_separated() {
        let s = generate(&spec(GenKind::PlantedClusters, 12, 12, 3, 5)).unwrap();
        validate_ops(&s.ops).unwrap();
        assert_eq!(s.ops.len(), 12);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(generate(&spec(GenKind::UniformChurn, 4, 10, 6, 1)).is_err());
        assert!(generate(&spec(GenKind::UniformChurn, 0, 10, 0, 1)).is_err());
    }

    #[test]
    fn jaccard_and_hamming_streams() {
        for metric in [MetricSpec::Jaccard { universe: 32 }, MetricSpec::Hamming { dim: 24 }] {
            let s = generate(&StreamSpec {
                kind: GenKind::UniformChurn,
                n: 10,
                m: 25,
                k: 2,
                seed: 4,
                metric,
            })
            .unwrap();
            validate_ops(&s.ops).unwrap();
            let StreamHeader::Builtin(cfg) = &s.header else { panic!("builtin header") };
            assert!(cfg.r_min > 0.0 && cfg.r_max >= cfg.r_min);
        }
    }
}
