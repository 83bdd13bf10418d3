//! Per-step verification helpers: oracle snapshots, engine-vs-oracle
//! equivalence (exact and realized-graph), cost-bound checks, and the
//! history-based persistence monitor for the deterministic tree.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::dettree::{DetTree, NodeKey};
use crate::lfmis::{LfmisEngine, NeighborIndex};
use crate::lsh::BucketIndex;
use crate::metric::{PointId, PointStore};
use crate::oracles::{lfmis_bruteforce, lfmis_on_graph, BruteLfmis, Snapshot};
use crate::seeds::rank_value;

/// Oracle snapshot of the store at scale `r` with ranks from `rank_seed`.
pub fn snapshot_at(store: &Arc<PointStore>, r: f64, rank_seed: u64) -> Snapshot {
    let points = store
        .active_ids()
        .into_iter()
        .map(|id| (id, rank_value(rank_seed, id.0), store.payload(id).expect("active")))
        .collect();
    Snapshot {
        points,
        r,
        cfg: store.cfg().clone(),
        matrix: store.matrix().map(|m| Arc::new(m.clone())),
    }
}

/// Equivalence of an engine with a from-scratch LFMIS: top set and validity
/// verdict match exactly; leader pointers are checked for validity (an ALG
/// member, adjacent under `edge`, lower rank) rather than equality with the
/// oracle's eliminators, which the engine deliberately leaves out of date.
pub fn check_engine_equivalence<I: NeighborIndex>(
    engine: &LfmisEngine<I>,
    oracle: &BruteLfmis,
    k: usize,
    store: &PointStore,
    edge: impl Fn(PointId, PointId) -> bool,
) -> Result<(), String> {
    // the engine tracks the top (capacity+1) prefix of the LFMIS; in all-k
    // mode the capacity exceeds n and the prefix is the whole LFMIS
    let top = engine.top_set();
    let expect: Vec<PointId> = oracle.full.iter().take(engine.k() + 1).copied().collect();
    if top != expect {
        return Err(format!("top set mismatch: engine {top:?} vs oracle {expect:?}"));
    }
    let valid = engine.is_valid_for(k);
    if valid != oracle.is_valid(k) {
        return Err(format!(
            "validity mismatch: engine {valid} vs oracle {} (|MIS| = {})",
            oracle.is_valid(k),
            oracle.full.len()
        ));
    }
    let alg: std::collections::HashSet<PointId> = top.iter().copied().collect();
    for id in store.active_ids() {
        let got = engine.leader_of(id).map_err(|e| e.to_string())?;
        if let Some(leader) = got {
            // in an oversized state a follower may still point at an evicted
            // leader waiting in the queue; once the solution is valid the
            // queue is empty and every leader must sit in ALG
            if valid && !alg.contains(&leader) {
                return Err(format!("leader of {id} is {leader}, not an ALG member"));
            }
            if store.payload(leader).is_none() {
                return Err(format!("leader of {id} is {leader}, which is not active"));
            }
            if !edge(id, leader) {
                return Err(format!("leader edge missing between {id} and {leader}"));
            }
            let (rv, rl) = (engine.rank_of(id), engine.rank_of(leader));
            if rl >= rv {
                return Err(format!("leader {leader} does not have lower rank than {id}"));
            }
        } else if valid && !alg.contains(&id) {
            return Err(format!("valid solution but non-ALG vertex {id} has no leader"));
        }
    }
    Ok(())
}

/// Oracle for the exact threshold graph at the engine's scale.
pub fn exact_oracle(store: &Arc<PointStore>, r: f64, rank_seed: u64, k: usize) -> BruteLfmis {
    lfmis_bruteforce(&snapshot_at(store, r, rank_seed), k)
}

/// The edge set an LSH index actually realizes over the active points: an
/// edge needs both a shared bucket under the drawn hash functions and a
/// distance within the c*r candidate filter. Hashes each point once.
pub struct RealizedGraph {
    pub ids: Vec<PointId>,
    /// Normalized (low id, high id) pairs.
    pub edges: HashSet<(PointId, PointId)>,
}

impl RealizedGraph {
    pub fn has_edge(&self, a: PointId, b: PointId) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }
}

pub fn realized_graph(index: &BucketIndex, store: &Arc<PointStore>) -> RealizedGraph {
    let ids = store.active_ids();
    let cutoff = index.family().c * index.family().r;
    let keys: Vec<Vec<u64>> = ids
        .iter()
        .map(|&id| index.hash_keys(&store.payload(id).expect("active")))
        .collect();
    let mut edges = HashSet::new();
    for i in 0..ids.len() {
        for j in 0..i {
            let collide = keys[i].iter().zip(&keys[j]).any(|(x, y)| x == y);
            if collide && store.distance_uncounted(ids[i], ids[j]) <= cutoff {
                edges.insert((ids[j], ids[i]));
            }
        }
    }
    RealizedGraph { ids, edges }
}

/// From-scratch LFMIS on the realized graph.
pub fn realized_oracle(
    graph: &RealizedGraph,
    rank_seed: u64,
    k: usize,
) -> BruteLfmis {
    let pos: HashMap<PointId, usize> =
        graph.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut adj = vec![Vec::new(); graph.ids.len()];
    for &(a, b) in &graph.edges {
        adj[pos[&a]].push(pos[&b]);
        adj[pos[&b]].push(pos[&a]);
    }
    let pts: Vec<(PointId, u64)> =
        graph.ids.iter().map(|&id| (id, rank_value(rank_seed, id.0))).collect();
    lfmis_on_graph(&pts, &adj, k)
}

/// Sandwich statistics of one build: (count of d <= r pairs, how many of
/// them share a bucket, count of d > c*r pairs sharing a bucket).
pub fn sandwich_stats(index: &BucketIndex, store: &Arc<PointStore>) -> (usize, usize, usize) {
    let ids = store.active_ids();
    let r = index.family().r;
    let cutoff = index.family().c * r;
    let keys: Vec<Vec<u64>> = ids
        .iter()
        .map(|&id| index.hash_keys(&store.payload(id).expect("active")))
        .collect();
    let mut near_pairs = 0;
    let mut near_realized = 0;
    let mut far_accepted = 0;
    for i in 0..ids.len() {
        for j in 0..i {
            let d = store.distance_uncounted(ids[i], ids[j]);
            let collide = keys[i].iter().zip(&keys[j]).any(|(x, y)| x == y);
            if d <= r {
                near_pairs += 1;
                if collide {
                    near_realized += 1;
                }
            } else if d > cutoff && collide {
                far_accepted += 1;
            }
        }
    }
    (near_pairs, near_realized, far_accepted)
}

/// Persistence monitor for the deterministic tree: between rebuilds, a point
/// may leave a node's S_v only through its own stream deletion.
#[derive(Debug, Default)]
pub struct PersistenceMonitor {
    last: HashMap<NodeKey, HashSet<PointId>>,
    rebuilds_seen: u64,
}

impl PersistenceMonitor {
    pub fn check(&mut self, tree: &DetTree, deleted: Option<PointId>) -> Result<(), String> {
        let now = tree.core().membership_snapshot();
        if tree.rebuilds() == self.rebuilds_seen {
            for (key, before) in &self.last {
                let after = now.get(key);
                for id in before {
                    let still = after.map(|s| s.contains(id)).unwrap_or(false);
                    if !still && Some(*id) != deleted {
                        return Err(format!("point {id} vanished from node {key:?} S_v"));
                    }
                }
            }
        } else {
            self.rebuilds_seen = tree.rebuilds();
        }
        self.last = now;
        Ok(())
    }
}

/// Approximation factor the deterministic tree is allowed at the current
/// depth: (2+eps) * ceil(log2(n(1+eps))), floored at (2+eps).
pub fn det_factor(n: usize, eps: f64) -> f64 {
    let depth = ((n.max(1) as f64) * (1.0 + eps)).log2().ceil().max(1.0);
    (2.0 + eps) * depth
}
