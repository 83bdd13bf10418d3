//! Dynamic top-(k+1) LFMIS with leaders over one threshold graph.
//!
//! The engine maintains ALG = LFMIS_{k+1}(G, pi) under vertex insertions and
//! deletions. A deleted or displaced leader's followers are pushed onto the
//! unclustered queue Q, and the queue is drained back into the insertion
//! routine while it can still affect the top k+1 ranks.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::Serialize;

use crate::error::EngineError;
use crate::metric::{PointId, PointStore};

/// Total order over vertices: uniform 64-bit value, PointId tiebreak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rank {
    pub value: u64,
    pub id: PointId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexStatus {
    ActiveLeader,
    InactiveLeader,
    Follower,
    Unclustered,
}

#[derive(Debug, Clone)]
pub struct VertexRecord {
    pub rank: Rank,
    pub status: VertexStatus,
    pub leader: Option<PointId>,
    pub followers: BTreeSet<PointId>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct EngineCounters {
    pub leader_changes: u64,
    pub queue_pushes: u64,
    pub adjacency_queries: u64,
    pub insert_calls: u64,
}

/// Neighbor access over the maintained set L (always = ALG here). The edge
/// relation is the threshold graph exactly (general backend) or a sandwiched
/// graph G_r ⊆ G ⊆ G_cr (LSH backend).
pub trait NeighborIndex {
    fn insert(&mut self, id: PointId, rank: Rank);
    fn remove(&mut self, id: PointId);
    /// Lowest-rank neighbor of `id` in L, or None.
    fn query_top(&mut self, id: PointId) -> Option<PointId>;
    /// All neighbors of `id` in L, rank-ordered.
    fn query_all(&mut self, id: PointId) -> Vec<PointId>;
    /// Monotone count of adjacency checks performed so far.
    fn work(&self) -> u64;
}

/// Exact backend: scans ALG in rank order computing distances lazily;
/// query_top stops at the first hit.
#[derive(Debug)]
pub struct GeneralIndex {
    store: Arc<PointStore>,
    r: f64,
    members: BTreeSet<Rank>,
    checks: u64,
}

impl GeneralIndex {
    pub fn new(store: Arc<PointStore>, r: f64) -> Self {
        GeneralIndex { store, r, members: BTreeSet::new(), checks: 0 }
    }

    pub fn scale(&self) -> f64 {
        self.r
    }
}

impl NeighborIndex for GeneralIndex {
    fn insert(&mut self, id: PointId, rank: Rank) {
        self.members.insert(Rank { value: rank.value, id });
    }

    fn remove(&mut self, id: PointId) {
        self.members.retain(|m| m.id != id);
    }

    fn query_top(&mut self, id: PointId) -> Option<PointId> {
        for m in &self.members {
            self.checks += 1;
            if self.store.distance_ids(id, m.id) <= self.r {
                return Some(m.id);
            }
        }
        None
    }

    fn query_all(&mut self, id: PointId) -> Vec<PointId> {
        let mut out = Vec::new();
        for m in &self.members {
            self.checks += 1;
            if self.store.distance_ids(id, m.id) <= self.r {
                out.push(m.id);
            }
        }
        out
    }

    fn work(&self) -> u64 {
        self.checks
    }
}

#[derive(Debug)]
pub struct LfmisEngine<I: NeighborIndex> {
    k: usize,
    index: I,
    records: HashMap<PointId, VertexRecord>,
    alg: BTreeSet<Rank>,
    queue: BTreeSet<Rank>,
    counters: EngineCounters,
    last_insert_rank: Option<Rank>,
}

impl<I: NeighborIndex> LfmisEngine<I> {
    pub fn new(k: usize, index: I) -> Result<Self, EngineError> {
        if k < 1 {
            return Err(EngineError::InvalidK);
        }
        Ok(LfmisEngine {
            k,
            index,
            records: HashMap::new(),
            alg: BTreeSet::new(),
            queue: BTreeSet::new(),
            counters: EngineCounters::default(),
            last_insert_rank: None,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn index(&self) -> &I {
        &self.index
    }

    pub fn index_mut(&mut self) -> &mut I {
        &mut self.index
    }

    pub fn counters(&self) -> EngineCounters {
        let mut c = self.counters;
        c.adjacency_queries = self.index.work();
        c
    }

    pub fn is_active(&self, id: PointId) -> bool {
        self.records.contains_key(&id)
    }

    pub fn active_len(&self) -> usize {
        self.records.len()
    }

    pub fn rank_of(&self, id: PointId) -> Option<Rank> {
        self.records.get(&id).map(|r| r.rank)
    }

    pub fn record(&self, id: PointId) -> Option<&VertexRecord> {
        self.records.get(&id)
    }

    /// ALG in rank order.
    pub fn top_set(&self) -> Vec<PointId> {
        self.alg.iter().map(|r| r.id).collect()
    }

    pub fn alg_len(&self) -> usize {
        self.alg.len()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Valid iff the LFMIS has size <= k; |ALG| = k+1 is exactly the
    /// oversized-certificate case and reports false even with an empty queue.
    pub fn is_valid_solution(&self) -> bool {
        self.is_valid_for(self.k)
    }

    /// Validity for a smaller k than the engine capacity; meaningful when the
    /// engine maintains the full LFMIS (all-k mode).
    pub fn is_valid_for(&self, k: usize) -> bool {
        self.alg.len() <= k
    }

    pub fn leader_of(&self, id: PointId) -> Result<Option<PointId>, EngineError> {
        let rec = self.records.get(&id).ok_or(EngineError::UnknownId(id))?;
        Ok(rec.leader)
    }

    /// Center serving `id` in a valid solution: itself if it is in ALG,
    /// otherwise its leader.
    pub fn center_of(&self, id: PointId) -> Result<PointId, EngineError> {
        let rec = self.records.get(&id).ok_or(EngineError::UnknownId(id))?;
        match rec.status {
            VertexStatus::ActiveLeader => Ok(id),
            _ => rec.leader.ok_or(EngineError::UnknownId(id)),
        }
    }

    pub fn followers_of(&self, id: PointId) -> Result<Vec<PointId>, EngineError> {
        let rec = self.records.get(&id).ok_or(EngineError::UnknownId(id))?;
        Ok(rec.followers.iter().copied().collect())
    }

    pub fn process_insert(&mut self, id: PointId, rank_value: u64) -> Result<(), EngineError> {
        if self.records.contains_key(&id) {
            return Err(EngineError::DuplicateInsert(id));
        }
        let rank = Rank { value: rank_value, id };
        self.records.insert(
            id,
            VertexRecord {
                rank,
                status: VertexStatus::Unclustered,
                leader: None,
                followers: BTreeSet::new(),
            },
        );
        self.last_insert_rank = None;
        self.insert_vertex(rank);
        self.drain();
        self.post_update_checks();
        Ok(())
    }

    pub fn process_delete(&mut self, id: PointId) -> Result<(), EngineError> {
        if !self.records.contains_key(&id) {
            return Err(EngineError::UnknownId(id));
        }
        self.last_insert_rank = None;
        self.delete_vertex(id);
        self.drain();
        self.post_update_checks();
        Ok(())
    }

    fn max_alg_rank(&self) -> Option<Rank> {
        self.alg.iter().next_back().copied()
    }

    fn push_queue(&mut self, rank: Rank) {
        self.queue.insert(rank);
        self.counters.queue_pushes += 1;
    }

    fn set_leader(&mut self, v: PointId, leader: Option<PointId>) {
        let rec = self.records.get_mut(&v).expect("active vertex");
        if rec.leader.is_some() && rec.leader != leader {
            self.counters.leader_changes += 1;
        }
        rec.leader = leader;
    }

    /// Detach all followers of `v` and push them onto the queue with their
    /// leader cleared.
    fn orphan_followers(&mut self, v: PointId) {
        let followers =
            std::mem::take(&mut self.records.get_mut(&v).expect("active vertex").followers);
        for w in followers {
            debug_assert!(
                self.records[&w].followers.is_empty(),
                "a follower cannot itself have followers"
            );
            self.set_leader(w, None);
            let rec = self.records.get_mut(&w).expect("active vertex");
            rec.status = VertexStatus::Unclustered;
            let rank = rec.rank;
            self.push_queue(rank);
        }
    }

    fn insert_vertex(&mut self, rank: Rank) {
        self.counters.insert_calls += 1;
        if let Some(prev) = self.last_insert_rank {
            debug_assert!(prev < rank, "insert_vertex ranks must strictly increase");
        }
        self.last_insert_rank = Some(rank);
        let v = rank.id;
        let cap = self.k.saturating_add(1);

        // Case (i): ALG full and v ranks below everything relevant.
        if self.alg.len() == cap && rank > self.max_alg_rank().unwrap() {
            debug_assert!(self.records[&v].followers.is_empty(), "fresh inserts only");
            self.push_queue(rank);
            return;
        }

        match self.index.query_top(v) {
            // Case (ii): no neighbor in ALG; v joins, evicting max rank at k+2.
            None => {
                self.alg.insert(rank);
                self.index.insert(v, rank);
                self.records.get_mut(&v).unwrap().status = VertexStatus::ActiveLeader;
                debug_assert!(self.records[&v].leader.is_none());
                if self.alg.len() == cap + 1 {
                    let evict = self.max_alg_rank().unwrap();
                    self.alg.remove(&evict);
                    self.index.remove(evict.id);
                    // followers keep pointing at the evicted leader while it
                    // waits in the queue
                    self.records.get_mut(&evict.id).unwrap().status = VertexStatus::InactiveLeader;
                    self.push_queue(evict);
                }
            }
            Some(top) => {
                let top_rank = self.records[&top].rank;
                if top_rank < rank {
                    // Case (iii)a: v loses to the minimum neighbor; if v was
                    // an inactive leader, its followers are orphaned first.
                    self.orphan_followers(v);
                    self.set_leader(v, Some(top));
                    self.records.get_mut(&v).unwrap().status = VertexStatus::Follower;
                    self.records.get_mut(&top).unwrap().followers.insert(v);
                } else {
                    // Case (iii)b: v beats every ALG neighbor; they all become
                    // followers of v and their followers are orphaned.
                    let s = self.index.query_all(v);
                    debug_assert!(!s.is_empty());
                    for u in s {
                        debug_assert!(self.records[&u].rank > rank);
                        self.orphan_followers(u);
                        let u_rank = self.records[&u].rank;
                        self.alg.remove(&u_rank);
                        self.index.remove(u);
                        self.set_leader(u, Some(v));
                        self.records.get_mut(&u).unwrap().status = VertexStatus::Follower;
                        self.records.get_mut(&v).unwrap().followers.insert(u);
                    }
                    self.alg.insert(rank);
                    self.index.insert(v, rank);
                    self.records.get_mut(&v).unwrap().status = VertexStatus::ActiveLeader;
                    debug_assert!(self.alg.len() <= cap);
                }
            }
        }
    }

    fn delete_vertex(&mut self, id: PointId) {
        let rec = self.records.get(&id).expect("checked by caller").clone();
        match rec.status {
            VertexStatus::Follower => {
                let leader = rec.leader.expect("followers have leaders");
                self.records.get_mut(&leader).unwrap().followers.remove(&id);
            }
            VertexStatus::Unclustered => {
                debug_assert!(rec.followers.is_empty(), "queued non-leaders have no followers");
                self.queue.remove(&rec.rank);
            }
            VertexStatus::InactiveLeader => {
                self.orphan_followers(id);
                self.queue.remove(&rec.rank);
            }
            VertexStatus::ActiveLeader => {
                self.orphan_followers(id);
                self.alg.remove(&rec.rank);
                self.index.remove(id);
            }
        }
        self.records.remove(&id);
    }

    /// Re-insert queued vertices while they can still enter the top k+1:
    /// while Q is nonempty and (|ALG| <= k or min-rank(Q) < max-rank(ALG)).
    fn drain(&mut self) {
        let cap = self.k.saturating_add(1);
        loop {
            let Some(&min_q) = self.queue.iter().next() else { break };
            let proceed = self.alg.len() < cap
                || self.max_alg_rank().map(|m| min_q < m).unwrap_or(true);
            if !proceed {
                break;
            }
            self.queue.remove(&min_q);
            self.insert_vertex(min_q);
        }
    }

    fn post_update_checks(&self) {
        debug_assert!(self.alg.len() <= self.k.saturating_add(1));
        if let (Some(&min_q), Some(max_a)) = (self.queue.iter().next(), self.max_alg_rank()) {
            debug_assert!(
                self.alg.len() == self.k.saturating_add(1) && min_q > max_a,
                "queue nonempty implies ALG full and min(Q) > max(ALG)"
            );
        }
        debug_assert!(self.queue.is_empty() || self.alg.len() == self.k.saturating_add(1));
    }
}
