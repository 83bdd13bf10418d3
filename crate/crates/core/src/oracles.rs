//! Brute-force references for the acceptance tests. Deliberately shares no
//! code with the engines: edge enumeration, distance arithmetic, and greedy
//! selection are all reimplemented from the definitions.

use std::collections::HashMap;
use std::sync::Arc;

use itertools::Itertools;

use crate::error::OracleError;
use crate::metric::{DistanceMatrix, MetricConfig, MetricKind, PointId, PointPayload};

/// Immutable copy of the active set at an update boundary.
#[derive(Debug, Clone)]
pub struct Snapshot {
    /// (id, rank value, payload); rank ties broken by id.
    pub points: Vec<(PointId, u64, PointPayload)>,
    pub r: f64,
    pub cfg: MetricConfig,
    pub matrix: Option<Arc<DistanceMatrix>>,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        oracle_distance(&self.points[i].2, &self.points[j].2, &self.cfg, self.matrix.as_deref())
    }
}

/// Straight-from-the-definition distances, independent of the metric module.
fn oracle_distance(
    a: &PointPayload,
    b: &PointPayload,
    cfg: &MetricConfig,
    matrix: Option<&DistanceMatrix>,
) -> f64 {
    match (a, b, cfg.kind) {
        (PointPayload::Vector(x), PointPayload::Vector(y), MetricKind::Lp { p }) => {
            let mut acc = 0.0f64;
            for idx in 0..x.len() {
                acc += (x[idx] - y[idx]).abs().powf(p);
            }
            acc.powf(1.0 / p)
        }
        (PointPayload::Bits(x), PointPayload::Bits(y), MetricKind::Hamming) => {
            let mut n = 0u64;
            for idx in 0..x.len() {
                if x[idx] != y[idx] {
                    n += 1;
                }
            }
            n as f64
        }
        (PointPayload::Set(x), PointPayload::Set(y), MetricKind::Jaccard) => {
            let mut inter = 0usize;
            for e in x {
                if y.contains(e) {
                    inter += 1;
                }
            }
            let union = x.len() + y.len() - inter;
            if union == 0 {
                0.0
            } else {
                1.0 - inter as f64 / union as f64
            }
        }
        (PointPayload::MatrixRow(i), PointPayload::MatrixRow(j), MetricKind::Matrix) => {
            matrix.expect("matrix snapshot").get(*i, *j).expect("valid row indices")
        }
        _ => panic!("payload/config mismatch in oracle"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteLfmis {
    /// Top-(k+1) prefix of the LFMIS in rank order.
    pub top: Vec<PointId>,
    /// The full LFMIS in rank order.
    pub full: Vec<PointId>,
    /// Eliminator of every vertex: lowest-rank member of (N(v) ∪ {v}) ∩ LFMIS.
    pub eliminators: HashMap<PointId, PointId>,
    /// Eliminators restricted to non-MIS vertices.
    pub leaders: HashMap<PointId, PointId>,
}

impl BruteLfmis {
    pub fn is_valid(&self, k: usize) -> bool {
        self.full.len() <= k
    }
}

/// Greedy LFMIS on the threshold graph at `snap.r`, taking alive vertices in
/// increasing rank order.
pub fn lfmis_bruteforce(snap: &Snapshot, k: usize) -> BruteLfmis {
    let n = snap.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..i {
            if snap.dist(i, j) <= snap.r {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    lfmis_on_graph(&snap.points.iter().map(|(id, rk, _)| (*id, *rk)).collect::<Vec<_>>(), &adj, k)
}

/// Greedy LFMIS given an explicit adjacency structure; used to check engines
/// against the realized (hash-dependent) graph.
pub fn lfmis_on_graph(points: &[(PointId, u64)], adj: &[Vec<usize>], k: usize) -> BruteLfmis {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (points[i].1, points[i].0));
    let mut alive = vec![true; n];
    let mut full = Vec::new();
    let mut eliminators: HashMap<PointId, PointId> = HashMap::new();
    for &i in &order {
        if !alive[i] {
            continue;
        }
        full.push(points[i].0);
        eliminators.insert(points[i].0, points[i].0);
        for &j in &adj[i] {
            if alive[j] {
                alive[j] = false;
                eliminators.insert(points[j].0, points[i].0);
            }
        }
        alive[i] = false;
    }
    let top: Vec<PointId> = full.iter().take(k + 1).copied().collect();
    let mis: std::collections::HashSet<PointId> = full.iter().copied().collect();
    let leaders = eliminators
        .iter()
        .filter(|(v, _)| !mis.contains(v))
        .map(|(v, e)| (*v, *e))
        .collect();
    BruteLfmis { top, full, eliminators, leaders }
}

/// Exact k-centers over all k-subsets of active points (in-set centers).
pub fn kcenters_bruteforce(
    snap: &Snapshot,
    k: usize,
) -> Result<(f64, Vec<PointId>), OracleError> {
    let n = snap.len();
    if n == 0 {
        return Err(OracleError::Empty);
    }
    if k >= n {
        return Ok((0.0, snap.points.iter().map(|p| p.0).collect()));
    }
    let combos = binomial(n, k);
    if n > 15 && combos > 1_000_000 {
        return Err(OracleError::SizeGuard(format!("n={n} k={k}: C(n,k)={combos}")));
    }
    let mut best = f64::INFINITY;
    let mut best_set = Vec::new();
    for subset in (0..n).combinations(k) {
        let mut cost = 0.0f64;
        for p in 0..n {
            let mut near = f64::INFINITY;
            for &c in &subset {
                near = near.min(snap.dist(p, c));
            }
            cost = cost.max(near);
            if cost >= best {
                break;
            }
        }
        if cost < best {
            best = cost;
            best_set = subset.iter().map(|&i| snap.points[i].0).collect();
        }
    }
    Ok((best, best_set))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if acc > u128::MAX / 2 {
            return u128::MAX;
        }
    }
    acc
}

/// Farthest-point traversal seeded at the lowest-id point.
pub fn gonzalez(snap: &Snapshot, k: usize) -> Result<(f64, Vec<PointId>), OracleError> {
    let n = snap.len();
    if n == 0 {
        return Err(OracleError::Empty);
    }
    let seed = (0..n).min_by_key(|&i| snap.points[i].0).unwrap();
    let mut centers = vec![seed];
    let mut near: Vec<f64> = (0..n).map(|i| snap.dist(i, seed)).collect();
    while centers.len() < k {
        let (far, &d) =
            near.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
        if d == 0.0 {
            break;
        }
        centers.push(far);
        for i in 0..n {
            near[i] = near[i].min(snap.dist(i, far));
        }
    }
    let cost = near.iter().copied().fold(0.0f64, f64::max);
    Ok((cost, centers.into_iter().map(|i| snap.points[i].0).collect()))
}

/// Count of vertices whose eliminator differs between two snapshots that
/// differ by exactly one vertex. A vertex present on only one side whose
/// eliminator entry appears/vanishes counts as changed.
pub fn eliminator_change_count(
    prev: &Snapshot,
    next: &Snapshot,
    k: usize,
) -> Result<usize, OracleError> {
    let prev_ids: std::collections::HashSet<PointId> =
        prev.points.iter().map(|p| p.0).collect();
    let next_ids: std::collections::HashSet<PointId> =
        next.points.iter().map(|p| p.0).collect();
    let diff = prev_ids.symmetric_difference(&next_ids).count();
    if diff != 1 {
        return Err(OracleError::SnapshotDiff);
    }
    let a = lfmis_bruteforce(prev, k);
    let b = lfmis_bruteforce(next, k);
    let mut changed = 0;
    for v in prev_ids.union(&next_ids) {
        if a.eliminators.get(v) != b.eliminators.get(v) {
            changed += 1;
        }
    }
    Ok(changed)
}
