//! Deterministic per-scale engine: a binary tree grown rightward over
//! insertion order inside an implicit infinite tree. Each node v holds a
//! point set S_v with identifiers from [2k+2], the uncovered subset U_v, a
//! FIFO queue Q_v, and per-point neighbor lists split by covered/uncovered
//! status. Points propagate upward while uncovered; a node is halted when it
//! or a child accumulates k+1 uncovered points, which certifies OPT >= r/2
//! at this scale. Periodic rebuilds keep the depth at O(log n(1+eps)).

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::Serialize;

use crate::error::EngineError;
use crate::metric::{PointId, PointStore};

/// (level, index); level 1 is the leaf level, index is 1-based within level.
pub type NodeKey = (u32, u64);

fn parent(key: NodeKey) -> NodeKey {
    (key.0 + 1, (key.1 - 1) / 2 + 1)
}

fn children(key: NodeKey) -> Option<(NodeKey, NodeKey)> {
    (key.0 > 1).then(|| ((key.0 - 1, key.1 * 2 - 1), (key.0 - 1, key.1 * 2)))
}

/// Ancestor of leaf j at a given level.
fn ancestor(leaf: u64, level: u32) -> NodeKey {
    (level, ((leaf - 1) >> (level - 1)) + 1)
}

#[derive(Debug, Clone)]
struct NodePoint {
    ident: u32,
    uncovered: bool,
    /// Identifiers of r-neighbors in U_v.
    unc_nbrs: BTreeSet<u32>,
    /// Identifiers of r-neighbors in S_v \ U_v.
    cov_nbrs: BTreeSet<u32>,
}

#[derive(Debug)]
struct Node {
    points: HashMap<PointId, NodePoint>,
    by_ident: Vec<Option<PointId>>,
    free: VecDeque<u32>,
    u_count: usize,
    queue: VecDeque<PointId>,
}

impl Node {
    fn new(k: usize) -> Self {
        let pool = 2 * k + 2;
        Node {
            points: HashMap::new(),
            by_ident: vec![None; pool],
            free: (0..pool as u32).collect(),
            u_count: 0,
            queue: VecDeque::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct DetCounters {
    pub propagate_calls: u64,
    pub node_visits: u64,
}

/// Per-node row of the debug dump.
#[derive(Debug, Clone, Serialize)]
pub struct DumpRow {
    pub level: u32,
    pub index: u64,
    pub s_len: usize,
    pub u_len: usize,
    pub q_len: usize,
    pub halted: bool,
}

/// The tree structure itself, without the rebuild policy.
#[derive(Debug)]
pub struct DetTreeCore {
    k: usize,
    r: f64,
    store: Arc<PointStore>,
    nodes: HashMap<NodeKey, Node>,
    leaf_of: HashMap<PointId, u64>,
    queued_at: HashMap<PointId, NodeKey>,
    root_level: u32,
    insertions: u64,
    /// Nodes with |U_v| >= k+1; empty iff no node is halted.
    big_u: BTreeSet<NodeKey>,
    counters: DetCounters,
}

impl DetTreeCore {
    pub fn new(k: usize, r: f64, store: Arc<PointStore>) -> Result<Self, EngineError> {
        if k < 1 {
            return Err(EngineError::InvalidK);
        }
        Ok(DetTreeCore {
            k,
            r,
            store,
            nodes: HashMap::new(),
            leaf_of: HashMap::new(),
            queued_at: HashMap::new(),
            root_level: 0,
            insertions: 0,
            big_u: BTreeSet::new(),
            counters: DetCounters::default(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn scale(&self) -> f64 {
        self.r
    }

    pub fn counters(&self) -> DetCounters {
        self.counters
    }

    pub fn root_level(&self) -> u32 {
        self.root_level
    }

    pub fn active_len(&self) -> usize {
        self.leaf_of.len()
    }

    pub fn is_active(&self, id: PointId) -> bool {
        self.leaf_of.contains_key(&id)
    }

    fn root_key(&self) -> NodeKey {
        (self.root_level, 1)
    }

    fn u_members_in_ident_order(&self, key: NodeKey) -> Vec<PointId> {
        let Some(node) = self.nodes.get(&key) else { return Vec::new() };
        node.by_ident
            .iter()
            .flatten()
            .filter(|id| node.points[*id].uncovered)
            .copied()
            .collect()
    }

    fn u_count(&self, key: NodeKey) -> usize {
        self.nodes.get(&key).map(|n| n.u_count).unwrap_or(0)
    }

    fn adjust_big_u(&mut self, key: NodeKey) {
        if self.u_count(key) >= self.k + 1 {
            self.big_u.insert(key);
        } else {
            self.big_u.remove(&key);
        }
    }

    /// Halted: this node or one of its children has >= k+1 uncovered points.
    pub fn halted(&self, key: NodeKey) -> bool {
        if self.u_count(key) >= self.k + 1 {
            return true;
        }
        children(key)
            .map(|(l, r)| self.u_count(l) >= self.k + 1 || self.u_count(r) >= self.k + 1)
            .unwrap_or(false)
    }

    /// Valid iff no node anywhere is halted (equivalently: no U exceeds k).
    pub fn is_valid_solution(&self) -> bool {
        self.big_u.is_empty()
    }

    /// U_root in identifier order.
    pub fn centers(&self) -> Vec<PointId> {
        if self.root_level == 0 {
            return Vec::new();
        }
        self.u_members_in_ident_order(self.root_key())
    }

    pub fn insert_point(&mut self, p: PointId) -> Result<(), EngineError> {
        if self.leaf_of.contains_key(&p) {
            return Err(EngineError::DuplicateInsert(p));
        }
        self.insertions += 1;
        let leaf = self.insertions;
        // lift the root so it covers the new leaf; uncovered points of the old
        // root continue their propagation into the new root
        let mut target = 1u32;
        while (1u64 << (target - 1)) < leaf {
            target += 1;
        }
        while self.root_level < target {
            let old_root = self.root_key();
            self.root_level += 1;
            if old_root.0 >= 1 {
                for x in self.u_members_in_ident_order(old_root) {
                    self.propagate(x, self.root_key());
                }
            }
        }
        self.leaf_of.insert(p, leaf);
        self.propagate(p, (1, leaf));
        Ok(())
    }

    /// Algorithm core: walk upward from `start`, joining S_v (and U_v when no
    /// uncovered neighbor is within r) until covered, enqueued, or past the
    /// root.
    fn propagate(&mut self, p: PointId, start: NodeKey) {
        self.counters.propagate_calls += 1;
        let mut key = start;
        loop {
            self.counters.node_visits += 1;
            let node = self.nodes.entry(key).or_insert_with(|| Node::new(self.k));
            if node.u_count >= self.k + 1 {
                node.queue.push_back(p);
                self.queued_at.insert(p, key);
                return;
            }
            // distances against current members (counted queries)
            let members: Vec<PointId> = {
                let node = &self.nodes[&key];
                node.points.keys().copied().collect()
            };
            let mut nbr_unc = BTreeSet::new();
            let mut nbr_cov = BTreeSet::new();
            for q in members {
                if self.store.distance_ids(p, q) <= self.r {
                    let qp = &self.nodes[&key].points[&q];
                    if qp.uncovered {
                        nbr_unc.insert(qp.ident);
                    } else {
                        nbr_cov.insert(qp.ident);
                    }
                }
            }
            let joins_u = nbr_unc.is_empty();
            let node = self.nodes.get_mut(&key).unwrap();
            let ident = node
                .free
                .pop_front()
                .expect("identifier pool exhausted: |S_v| <= 2k+2 invariant broken");
            node.by_ident[ident as usize] = Some(p);
            // register p in its neighbors' lists (uncovered side iff p in U)
            for &nid in nbr_unc.iter().chain(nbr_cov.iter()) {
                let q = node.by_ident[nid as usize].expect("live identifier");
                let qp = node.points.get_mut(&q).unwrap();
                if joins_u {
                    qp.unc_nbrs.insert(ident);
                } else {
                    qp.cov_nbrs.insert(ident);
                }
            }
            node.points.insert(
                p,
                NodePoint { ident, uncovered: joins_u, unc_nbrs: nbr_unc, cov_nbrs: nbr_cov },
            );
            if joins_u {
                node.u_count += 1;
                self.adjust_big_u(key);
                if key == self.root_key() {
                    return;
                }
                key = parent(key);
            } else {
                return;
            }
        }
    }

    pub fn delete_point(&mut self, q: PointId) -> Result<(), EngineError> {
        let Some(leaf) = self.leaf_of.remove(&q) else {
            return Err(EngineError::UnknownId(q));
        };
        // remove from any queue first
        if let Some(key) = self.queued_at.remove(&q) {
            if let Some(node) = self.nodes.get_mut(&key) {
                node.queue.retain(|&x| x != q);
            }
        }
        // path nodes holding q, highest level first
        let path: Vec<NodeKey> = (1..=self.root_level).map(|l| ancestor(leaf, l)).collect();
        for &key in path.iter().rev() {
            self.counters.node_visits += 1;
            let Some(node) = self.nodes.get(&key) else { continue };
            if !node.points.contains_key(&q) {
                continue;
            }
            self.remove_from_node(q, key);
        }
        // final sweep, leaf to root, over the path plus both children of each
        // path node: the only nodes whose halted status can have changed
        for &key in &path {
            if let Some((l, r)) = children(key) {
                self.drain_queue(l);
                self.drain_queue(r);
            }
            self.drain_queue(key);
        }
        Ok(())
    }

    fn remove_from_node(&mut self, q: PointId, key: NodeKey) {
        let is_root = key == self.root_key();
        let node = self.nodes.get_mut(&key).unwrap();
        let qp = node.points.remove(&q).expect("checked by caller");
        node.by_ident[qp.ident as usize] = None;
        node.free.push_back(qp.ident);
        // strip q from its neighbors' lists
        for &nid in qp.unc_nbrs.iter().chain(qp.cov_nbrs.iter()) {
            let nbr = node.by_ident[nid as usize].expect("live identifier");
            let np = node.points.get_mut(&nbr).unwrap();
            if qp.uncovered {
                np.unc_nbrs.remove(&qp.ident);
            } else {
                np.cov_nbrs.remove(&qp.ident);
            }
        }
        if !qp.uncovered {
            return;
        }
        node.u_count -= 1;
        self.adjust_big_u(key);
        // covered neighbors of q may have lost their last uncovered neighbor;
        // process them in identifier order
        for nid in qp.cov_nbrs.iter().copied().collect::<Vec<u32>>() {
            let node = self.nodes.get_mut(&key).unwrap();
            let Some(p) = node.by_ident[nid as usize] else { continue };
            let pp = node.points.get_mut(&p).unwrap();
            if pp.uncovered || !pp.unc_nbrs.is_empty() {
                continue;
            }
            // p becomes uncovered: migrate its identifier in every neighbor's
            // lists from the covered side to the uncovered side
            pp.uncovered = true;
            let p_ident = pp.ident;
            let nbrs: Vec<u32> = pp.unc_nbrs.iter().chain(pp.cov_nbrs.iter()).copied().collect();
            for zid in nbrs {
                let z = node.by_ident[zid as usize].expect("live identifier");
                let zp = node.points.get_mut(&z).unwrap();
                if zp.cov_nbrs.remove(&p_ident) {
                    zp.unc_nbrs.insert(p_ident);
                }
            }
            let node = self.nodes.get_mut(&key).unwrap();
            node.u_count += 1;
            let u_now = node.u_count;
            self.adjust_big_u(key);
            if is_root {
                continue;
            }
            let up = parent(key);
            if u_now <= self.k + 1 {
                self.propagate(p, up);
            } else {
                let pnode = self.nodes.entry(up).or_insert_with(|| Node::new(self.k));
                pnode.queue.push_back(p);
                self.queued_at.insert(p, up);
            }
        }
    }

    fn drain_queue(&mut self, key: NodeKey) {
        loop {
            if self.halted(key) {
                return;
            }
            let Some(node) = self.nodes.get_mut(&key) else { return };
            let Some(z) = node.queue.pop_front() else { return };
            self.queued_at.remove(&z);
            self.propagate(z, key);
        }
    }

    /// Follow the pointer chain from p's leaf up to U_root: stay on the same
    /// point while it is uncovered at each ancestor, otherwise hop to its
    /// lowest-identifier uncovered neighbor (each hop <= r).
    pub fn leader_of(&self, p: PointId) -> Result<PointId, EngineError> {
        let leaf = *self.leaf_of.get(&p).ok_or(EngineError::UnknownId(p))?;
        let mut cur = p;
        for level in 1..=self.root_level {
            let key = ancestor(leaf, level);
            let node = self.nodes.get(&key).expect("path node exists");
            let Some(cp) = node.points.get(&cur) else {
                // can only happen in invalid (halted) states
                break;
            };
            if cp.uncovered {
                continue;
            }
            let nid = *cp
                .unc_nbrs
                .iter()
                .next()
                .expect("covered point has an uncovered neighbor (invariant 4)");
            cur = node.by_ident[nid as usize].expect("live identifier");
        }
        Ok(cur)
    }

    pub fn dump(&self) -> Vec<DumpRow> {
        let mut keys: Vec<NodeKey> = self.nodes.keys().copied().collect();
        keys.sort();
        keys.iter()
            .map(|&key| {
                let node = &self.nodes[&key];
                DumpRow {
                    level: key.0,
                    index: key.1,
                    s_len: node.points.len(),
                    u_len: node.u_count,
                    q_len: node.queue.len(),
                    halted: self.halted(key),
                }
            })
            .collect()
    }

    /// Figure-2 style structural checks (invariants 2-5 plus list
    /// consistency); invariant 1 needs history and is checked by the
    /// monitor in the harness.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (&key, node) in &self.nodes {
            if node.points.len() > 2 * self.k + 2 {
                return Err(format!("node {key:?}: |S| = {} > 2k+2", node.points.len()));
            }
            let u_actual = node.points.values().filter(|p| p.uncovered).count();
            if u_actual != node.u_count {
                return Err(format!("node {key:?}: u_count drift"));
            }
            if node.u_count > node.points.len() {
                return Err(format!("node {key:?}: |U| > |S|"));
            }
            let members: Vec<(PointId, &NodePoint)> =
                node.points.iter().map(|(id, p)| (*id, p)).collect();
            for (a, ap) in &members {
                // identifier table consistency
                if node.by_ident[ap.ident as usize] != Some(*a) {
                    return Err(format!("node {key:?}: ident table drift at {a}"));
                }
                for (b, bp) in &members {
                    if a >= b {
                        continue;
                    }
                    let d = self.store.distance_uncounted(*a, *b);
                    let listed = ap.unc_nbrs.contains(&bp.ident)
                        || ap.cov_nbrs.contains(&bp.ident);
                    if (d <= self.r) != listed {
                        return Err(format!(
                            "node {key:?}: neighbor list wrong for ({a},{b}), d={d}"
                        ));
                    }
                    if listed {
                        let side_ok = if bp.uncovered {
                            ap.unc_nbrs.contains(&bp.ident)
                        } else {
                            ap.cov_nbrs.contains(&bp.ident)
                        };
                        let back_ok = if ap.uncovered {
                            bp.unc_nbrs.contains(&ap.ident)
                        } else {
                            bp.cov_nbrs.contains(&ap.ident)
                        };
                        if !side_ok || !back_ok {
                            return Err(format!(
                                "node {key:?}: list sides inconsistent for ({a},{b})"
                            ));
                        }
                    }
                    // invariant 3: uncovered points pairwise far
                    if ap.uncovered && bp.uncovered && d <= self.r {
                        return Err(format!(
                            "node {key:?}: uncovered pair ({a},{b}) within r"
                        ));
                    }
                }
                // invariant 4: covered points have an uncovered neighbor
                if !ap.uncovered && ap.unc_nbrs.is_empty() {
                    return Err(format!("node {key:?}: covered {a} with no uncovered nbr"));
                }
            }
            // invariant 5: nonempty queue requires a halted witness
            if !node.queue.is_empty() && !self.halted(key) {
                return Err(format!("node {key:?}: queued points at un-halted node"));
            }
        }
        Ok(())
    }

    /// Map of node -> S_v membership, for the history-based invariant-1 check.
    pub fn membership_snapshot(&self) -> HashMap<NodeKey, HashSet<PointId>> {
        self.nodes
            .iter()
            .map(|(&key, node)| (key, node.points.keys().copied().collect()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RebuildMode {
    /// Feed ceil(2/eps) active points per update into a buffered new tree and
    /// swap it in at each checkpoint.
    Background,
    /// Rebuild from scratch at each checkpoint; for debugging, identical
    /// amortized accounting.
    StopTheWorld,
}

#[derive(Debug)]
struct PendingRebuild {
    core: DetTreeCore,
    fed: HashSet<PointId>,
}

/// Deterministic engine with the epsilon-fraction rebuild policy on top of
/// the tree core.
#[derive(Debug)]
pub struct DetTree {
    core: DetTreeCore,
    store: Arc<PointStore>,
    eps: f64,
    mode: RebuildMode,
    updates_since: u64,
    n_at_rebuild: usize,
    pending: Option<PendingRebuild>,
    rebuilds: u64,
}

impl DetTree {
    pub fn new(
        k: usize,
        r: f64,
        store: Arc<PointStore>,
        eps: f64,
        mode: RebuildMode,
    ) -> Result<Self, EngineError> {
        let core = DetTreeCore::new(k, r, store.clone())?;
        let pending = match mode {
            RebuildMode::Background => Some(PendingRebuild {
                core: DetTreeCore::new(k, r, store.clone())?,
                fed: HashSet::new(),
            }),
            RebuildMode::StopTheWorld => None,
        };
        Ok(DetTree {
            core,
            store,
            eps,
            mode,
            updates_since: 0,
            n_at_rebuild: 0,
            pending,
            rebuilds: 0,
        })
    }

    pub fn core(&self) -> &DetTreeCore {
        &self.core
    }

    pub fn rebuilds(&self) -> u64 {
        self.rebuilds
    }

    pub fn process_insert(&mut self, id: PointId) -> Result<(), EngineError> {
        self.core.insert_point(id)?;
        if let Some(pending) = &mut self.pending {
            pending.core.insert_point(id)?;
            pending.fed.insert(id);
        }
        self.rebuild_tick();
        Ok(())
    }

    pub fn process_delete(&mut self, id: PointId) -> Result<(), EngineError> {
        self.core.delete_point(id)?;
        if let Some(pending) = &mut self.pending {
            if pending.fed.remove(&id) {
                pending.core.delete_point(id)?;
            }
        }
        self.rebuild_tick();
        Ok(())
    }

    /// Called after each update: feed the background tree and swap it in once
    /// updates since the last rebuild exceed an eps fraction of the active
    /// count at that rebuild.
    fn rebuild_tick(&mut self) {
        self.updates_since += 1;
        if let Some(pending) = &mut self.pending {
            let batch = (2.0 / self.eps).ceil() as usize;
            let mut fed = 0;
            // active points are engine-relevant only if live in the main tree
            for id in self.store.active_ids() {
                if fed >= batch {
                    break;
                }
                if self.core.is_active(id) && !pending.fed.contains(&id) {
                    pending.core.insert_point(id).expect("fresh in pending tree");
                    pending.fed.insert(id);
                    fed += 1;
                }
            }
        }
        let threshold = ((self.eps * self.n_at_rebuild as f64).ceil() as u64).max(1);
        if self.updates_since <= threshold {
            return;
        }
        self.rebuilds += 1;
        self.updates_since = 0;
        match self.mode {
            RebuildMode::Background => {
                let mut done = self.pending.take().expect("background mode keeps a pending tree");
                // top up any stragglers the feed schedule missed
                for id in self.store.active_ids() {
                    if self.core.is_active(id) && !done.fed.contains(&id) {
                        done.core.insert_point(id).expect("fresh in pending tree");
                        done.fed.insert(id);
                    }
                }
                // drop entries for points no longer active in the main tree
                for id in done.fed.iter().copied().collect::<Vec<_>>() {
                    if !self.core.is_active(id) {
                        done.core.delete_point(id).expect("was fed");
                        done.fed.remove(&id);
                    }
                }
                self.n_at_rebuild = done.core.active_len();
                // keep accumulated work visible across the swap
                done.core.counters.propagate_calls += self.core.counters.propagate_calls;
                done.core.counters.node_visits += self.core.counters.node_visits;
                self.core = done.core;
                self.pending = Some(PendingRebuild {
                    core: DetTreeCore::new(self.core.k, self.core.r, self.store.clone())
                        .expect("k validated"),
                    fed: HashSet::new(),
                });
            }
            RebuildMode::StopTheWorld => {
                let mut fresh = DetTreeCore::new(self.core.k, self.core.r, self.store.clone())
                    .expect("k validated");
                for id in self.store.active_ids() {
                    if self.core.is_active(id) {
                        fresh.insert_point(id).expect("fresh tree");
                    }
                }
                fresh.counters.propagate_calls += self.core.counters.propagate_calls;
                fresh.counters.node_visits += self.core.counters.node_visits;
                self.n_at_rebuild = fresh.active_len();
                self.core = fresh;
            }
        }
    }
}
