//! Threshold ladder: one per-scale engine for every grid scale, answer-scale
//! selection, membership/enumeration queries, and the restart and
//! active-set-doubling wrappers.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::dettree::{DetTree, RebuildMode};
use crate::error::{EngineError, LshError, MetricError, RunError, StreamError};
use crate::lfmis::{GeneralIndex, LfmisEngine};
use crate::lsh::{BucketIndex, BuildReport, LshFamily};
use crate::metric::{DistanceMatrix, MetricConfig, MetricKind, PointId, PointStore};
use crate::seeds::{rank_value, split_seed};
use crate::stream::StreamOp;

/// Capacity used in all-k mode: large enough that the queue always drains and
/// the engine maintains the full LFMIS.
const ALL_K_CAPACITY: usize = (u32::MAX as usize) >> 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BackendKind {
    General,
    Lsh { c: f64, delta: f64, n_bound: usize },
    Det { mode: RebuildMode },
}

#[derive(Debug)]
pub enum ScaleEngine {
    General(LfmisEngine<GeneralIndex>),
    Lsh(LfmisEngine<BucketIndex>),
    Det(DetTree),
}

#[derive(Debug)]
pub struct ScaleInstance {
    pub r: f64,
    pub rank_seed: u64,
    pub engine: ScaleEngine,
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub scale: f64,
    pub scale_idx: Option<usize>,
    pub centers: Vec<PointId>,
    pub cost_upper: f64,
    /// 0 when the bottom scale is valid (no certificate below the grid).
    pub opt_lower: f64,
    /// cost_upper / opt_lower; None when no certificate exists.
    pub approx_factor_bound: Option<f64>,
    /// True when no scale was valid (LSH failure path) and the documented
    /// 1-clustering fallback was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct LadderCounters {
    pub leader_changes: u64,
    pub queue_pushes: u64,
    pub adjacency_queries: u64,
    pub insert_calls: u64,
    pub wasted_collisions: u64,
    pub det_propagate_calls: u64,
    pub det_node_visits: u64,
}

#[derive(Debug)]
struct Resolved {
    scale_idx: Option<usize>,
    fallback_center: Option<PointId>,
    det_clusters: Option<HashMap<PointId, PointId>>,
    singletons: bool,
}

#[derive(Debug)]
pub struct Ladder {
    store: Arc<PointStore>,
    k: usize,
    engine_k: usize,
    eps: f64,
    backend: BackendKind,
    master_seed: u64,
    scales: Vec<ScaleInstance>,
    grid: Vec<f64>,
    build_reports: Vec<BuildReport>,
    lsh_generation: u64,
    resolved: Option<Resolved>,
}

fn family_for(cfg: &MetricConfig, r: f64, c: f64) -> Result<LshFamily, LshError> {
    match cfg.kind {
        MetricKind::Jaccard => LshFamily::minhash(r, c),
        MetricKind::Lp { p } => LshFamily::p_stable(p, r, c, 4.0 * r),
        MetricKind::Hamming => LshFamily::bit_sampling(cfg.dim, r, c),
        MetricKind::Matrix => {
            Err(LshError::BadFamily("no LSH family for the explicit-matrix backend".into()))
        }
    }
}

impl Ladder {
    pub fn new(
        store: Arc<PointStore>,
        k: usize,
        eps: f64,
        backend: BackendKind,
        master_seed: u64,
        all_k: bool,
    ) -> Result<Self, RunError> {
        if k < 1 {
            return Err(EngineError::InvalidK.into());
        }
        if !(eps > 0.0) {
            return Err(RunError::Config(format!("eps must be positive, got {eps}")));
        }
        let cfg = store.cfg();
        let mut r_max = cfg.r_max;
        if let BackendKind::Lsh { c, .. } = backend {
            // MinHash needs cr < 1: cap the Jaccard grid at 1/(2c) and rely on
            // the fallback 1-clustering above it
            if cfg.kind == MetricKind::Jaccard {
                r_max = r_max.min(1.0 / (2.0 * c));
            }
        }
        let r_min = cfg.r_min.min(r_max);
        let grid = crate::metric::scale_grid(r_min, r_max, eps);
        let engine_k = if all_k { ALL_K_CAPACITY } else { k };
        let mut ladder = Ladder {
            store,
            k,
            engine_k,
            eps,
            backend,
            master_seed,
            scales: Vec::new(),
            grid,
            build_reports: Vec::new(),
            lsh_generation: 0,
            resolved: None,
        };
        ladder.build_scales()?;
        Ok(ladder)
    }

    fn build_scales(&mut self) -> Result<(), RunError> {
        self.scales.clear();
        for (i, &r) in self.grid.clone().iter().enumerate() {
            let rank_seed = split_seed(self.master_seed, i as u64);
            let engine = match self.backend {
                BackendKind::General => ScaleEngine::General(LfmisEngine::new(
                    self.engine_k,
                    GeneralIndex::new(self.store.clone(), r),
                )?),
                BackendKind::Lsh { c, delta, n_bound } => {
                    let family = family_for(self.store.cfg(), r, c)?;
                    let build_seed = split_seed(
                        self.master_seed,
                        1_000_000 + self.lsh_generation * 10_000 + i as u64,
                    );
                    let index =
                        BucketIndex::build(self.store.clone(), n_bound, delta, family, build_seed)?;
                    self.build_reports.push(index.report().clone());
                    ScaleEngine::Lsh(LfmisEngine::new(self.engine_k, index)?)
                }
                BackendKind::Det { mode } => ScaleEngine::Det(DetTree::new(
                    self.k,
                    r,
                    self.store.clone(),
                    self.eps,
                    mode,
                )?),
            };
            self.scales.push(ScaleInstance { r, rank_seed, engine });
        }
        Ok(())
    }

    pub fn store(&self) -> &Arc<PointStore> {
        &self.store
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn backend(&self) -> BackendKind {
        self.backend
    }

    pub fn scales(&self) -> &[ScaleInstance] {
        &self.scales
    }

    pub fn build_reports(&self) -> &[BuildReport] {
        &self.build_reports
    }

    fn insert_into_engines(&mut self, id: PointId) -> Result<(), EngineError> {
        for scale in &mut self.scales {
            let rank = rank_value(scale.rank_seed, id.0);
            match &mut scale.engine {
                ScaleEngine::General(e) => e.process_insert(id, rank)?,
                ScaleEngine::Lsh(e) => e.process_insert(id, rank)?,
                ScaleEngine::Det(e) => e.process_insert(id)?,
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, op: &StreamOp) -> Result<(), RunError> {
        self.resolved = None;
        match op {
            StreamOp::Insert { id, payload } => {
                self.store.insert(*id, payload.clone())?;
                self.insert_into_engines(*id)?;
            }
            StreamOp::Delete { id } => {
                if !self.store.contains(*id) {
                    return Err(StreamError::DanglingDelete(*id).into());
                }
                for scale in &mut self.scales {
                    match &mut scale.engine {
                        ScaleEngine::General(e) => e.process_delete(*id)?,
                        ScaleEngine::Lsh(e) => e.process_delete(*id)?,
                        ScaleEngine::Det(e) => e.process_delete(*id)?,
                    }
                }
                self.store.remove(*id)?;
            }
        }
        Ok(())
    }

    fn scale_valid(&self, idx: usize, k: usize) -> bool {
        match &self.scales[idx].engine {
            ScaleEngine::General(e) => e.is_valid_for(k),
            ScaleEngine::Lsh(e) => e.is_valid_for(k),
            ScaleEngine::Det(e) => e.core().is_valid_solution(),
        }
    }

    fn scale_centers(&self, idx: usize, k: usize) -> Vec<PointId> {
        match &self.scales[idx].engine {
            ScaleEngine::General(e) => e.top_set().into_iter().take(k).collect(),
            ScaleEngine::Lsh(e) => e.top_set().into_iter().take(k).collect(),
            ScaleEngine::Det(e) => e.core().centers(),
        }
    }

    /// Cost multiplier of the chosen backend at the current state: 1 for the
    /// exact backend, c for LSH, tree-depth hops for the deterministic tree.
    pub fn backend_factor(&self, idx: usize) -> f64 {
        match (&self.backend, &self.scales[idx].engine) {
            (BackendKind::Lsh { c, .. }, _) => *c,
            (BackendKind::Det { .. }, ScaleEngine::Det(e)) => {
                e.core().root_level().saturating_sub(1).max(1) as f64
            }
            _ => 1.0,
        }
    }

    /// Scans scales ascending and returns the first valid one; None when no
    /// point is active. For exact backends the top scale is always valid; the
    /// LSH backend can miss edges, in which case the fallback 1-clustering
    /// (arbitrary active point) is returned.
    pub fn current_solution(&mut self, k: usize) -> Option<Solution> {
        let active = self.store.active_ids();
        if active.is_empty() {
            self.resolved = None;
            return None;
        }
        // with at most k points every point is its own center and the cost is
        // exactly zero, matching OPT = 0
        if active.len() <= k {
            self.resolved = Some(Resolved {
                scale_idx: None,
                fallback_center: None,
                det_clusters: None,
                singletons: true,
            });
            return Some(Solution {
                scale: self.grid[0],
                scale_idx: None,
                centers: active,
                cost_upper: 0.0,
                opt_lower: 0.0,
                approx_factor_bound: None,
                fallback: false,
            });
        }
        for idx in 0..self.scales.len() {
            if !self.scale_valid(idx, k) {
                continue;
            }
            let r = self.scales[idx].r;
            let factor = self.backend_factor(idx);
            let centers = self.scale_centers(idx, k);
            let opt_lower = if idx == 0 { 0.0 } else { r / (2.0 + self.eps) };
            let cost_upper = factor * r;
            self.resolved = Some(Resolved {
                scale_idx: Some(idx),
                fallback_center: None,
                det_clusters: None,
                singletons: false,
            });
            return Some(Solution {
                scale: r,
                scale_idx: Some(idx),
                centers,
                cost_upper,
                opt_lower,
                approx_factor_bound: (opt_lower > 0.0).then(|| cost_upper / opt_lower),
                fallback: false,
            });
        }
        // no valid scale: 1-clustering around an arbitrary active point,
        // cost bounded by the metric diameter bound
        let center = active[0];
        let diameter = match self.store.cfg().kind {
            MetricKind::Jaccard => 1.0,
            _ => self.store.cfg().r_max,
        };
        let top = *self.grid.last().expect("nonempty grid");
        let opt_lower = top / (2.0 + self.eps);
        self.resolved = Some(Resolved {
            scale_idx: None,
            fallback_center: Some(center),
            det_clusters: None,
            singletons: false,
        });
        Some(Solution {
            scale: top,
            scale_idx: None,
            centers: vec![center],
            cost_upper: diameter,
            opt_lower,
            approx_factor_bound: (opt_lower > 0.0).then(|| diameter / opt_lower),
            fallback: true,
        })
    }

    /// Center serving p under the last resolved solution.
    pub fn membership(&mut self, p: PointId) -> Result<PointId, RunError> {
        if !self.store.contains(p) {
            return Err(MetricError::UnknownPoint(p).into());
        }
        let resolved = self
            .resolved
            .as_ref()
            .ok_or_else(|| RunError::Config("no solution resolved for this step".into()))?;
        if resolved.singletons {
            return Ok(p);
        }
        if let Some(center) = resolved.fallback_center {
            return Ok(center);
        }
        let idx = resolved.scale_idx.expect("either fallback or a scale");
        match &self.scales[idx].engine {
            ScaleEngine::General(e) => Ok(e.center_of(p)?),
            ScaleEngine::Lsh(e) => Ok(e.center_of(p)?),
            ScaleEngine::Det(e) => {
                // memoize the leader chains per resolved step
                if self.resolved.as_ref().unwrap().det_clusters.is_none() {
                    let mut map = HashMap::new();
                    for id in self.store.active_ids() {
                        map.insert(id, e.core().leader_of(id)?);
                    }
                    self.resolved.as_mut().unwrap().det_clusters = Some(map);
                }
                Ok(self.resolved.as_ref().unwrap().det_clusters.as_ref().unwrap()[&p])
            }
        }
    }

    /// All members of p's cluster: the center plus its followers.
    pub fn enumerate_cluster(&mut self, p: PointId) -> Result<Vec<PointId>, RunError> {
        let center = self.membership(p)?;
        let resolved = self.resolved.as_ref().expect("membership resolved");
        if resolved.singletons {
            return Ok(vec![center]);
        }
        if resolved.fallback_center.is_some() {
            return Ok(self.store.active_ids());
        }
        let idx = resolved.scale_idx.expect("scale chosen");
        match &self.scales[idx].engine {
            ScaleEngine::General(e) => {
                let mut out = vec![center];
                out.extend(e.followers_of(center)?);
                Ok(out)
            }
            ScaleEngine::Lsh(e) => {
                let mut out = vec![center];
                out.extend(e.followers_of(center)?);
                Ok(out)
            }
            ScaleEngine::Det(_) => {
                let map = resolved.det_clusters.as_ref().expect("built by membership");
                let mut out: Vec<PointId> =
                    map.iter().filter(|(_, c)| **c == center).map(|(p, _)| *p).collect();
                out.sort();
                Ok(out)
            }
        }
    }

    pub fn counters(&self) -> LadderCounters {
        let mut out = LadderCounters::default();
        for scale in &self.scales {
            match &scale.engine {
                ScaleEngine::General(e) => {
                    let c = e.counters();
                    out.leader_changes += c.leader_changes;
                    out.queue_pushes += c.queue_pushes;
                    out.adjacency_queries += c.adjacency_queries;
                    out.insert_calls += c.insert_calls;
                }
                ScaleEngine::Lsh(e) => {
                    let c = e.counters();
                    out.leader_changes += c.leader_changes;
                    out.queue_pushes += c.queue_pushes;
                    out.adjacency_queries += c.adjacency_queries;
                    out.insert_calls += c.insert_calls;
                    out.wasted_collisions += e.index().wasted_collisions();
                }
                ScaleEngine::Det(e) => {
                    let c = e.core().counters();
                    out.det_propagate_calls += c.propagate_calls;
                    out.det_node_visits += c.node_visits;
                }
            }
        }
        out
    }

    /// Reproducible work measure for the restart budget.
    pub fn work_units(&self) -> u64 {
        let c = self.counters();
        c.adjacency_queries + c.queue_pushes + c.det_propagate_calls + c.det_node_visits
    }

    /// Rebuild LSH scale engines with fresh hash draws and new size bound,
    /// re-inserting only currently active points. Rank seeds are unchanged so
    /// the per-scale rankings persist across rebuilds.
    pub fn rebuild_lsh(&mut self, n_bound: usize) -> Result<(), RunError> {
        let BackendKind::Lsh { c, delta, .. } = self.backend else {
            return Err(RunError::Config("rebuild_lsh on a non-LSH ladder".into()));
        };
        self.backend = BackendKind::Lsh { c, delta, n_bound };
        self.lsh_generation += 1;
        self.resolved = None;
        self.build_scales()?;
        for id in self.store.active_ids() {
            self.insert_into_engines(id)?;
        }
        Ok(())
    }
}

/// Restart wrapper: re-instantiates the ladder with fresh randomness and
/// replays the retained prefix whenever cumulative work exceeds
/// budget_factor * t * baseline after t stream updates.
pub struct RestartLadder {
    cfg: MetricConfig,
    matrix: Option<DistanceMatrix>,
    k: usize,
    eps: f64,
    backend: BackendKind,
    master_seed: u64,
    all_k: bool,
    budget_factor: f64,
    baseline: f64,
    ladder: Ladder,
    prefix: Vec<StreamOp>,
    restarts: u64,
    completed_work: u64,
}

impl RestartLadder {
    pub fn new(
        cfg: MetricConfig,
        matrix: Option<DistanceMatrix>,
        k: usize,
        eps: f64,
        backend: BackendKind,
        master_seed: u64,
        all_k: bool,
        budget_factor: f64,
        baseline: f64,
    ) -> Result<Self, RunError> {
        if !(budget_factor >= 1.0) {
            return Err(RunError::Config(format!(
                "budget_factor must be >= 1, got {budget_factor}"
            )));
        }
        let store = Arc::new(match &matrix {
            Some(m) => PointStore::with_matrix(cfg.clone(), m.clone()),
            None => PointStore::new(cfg.clone()),
        });
        let ladder = Ladder::new(store, k, eps, backend, master_seed, all_k)?;
        Ok(RestartLadder {
            cfg,
            matrix,
            k,
            eps,
            backend,
            master_seed,
            all_k,
            budget_factor,
            baseline,
            ladder,
            prefix: Vec::new(),
            restarts: 0,
            completed_work: 0,
        })
    }

    pub fn ladder(&self) -> &Ladder {
        &self.ladder
    }

    pub fn ladder_mut(&mut self) -> &mut Ladder {
        &mut self.ladder
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    pub fn total_work(&self) -> u64 {
        self.completed_work + self.ladder.work_units()
    }

    pub fn apply(&mut self, op: &StreamOp) -> Result<(), RunError> {
        self.ladder.apply(op)?;
        self.prefix.push(op.clone());
        let t = self.prefix.len() as f64;
        if (self.total_work() as f64) > self.budget_factor * t * self.baseline {
            self.restart()?;
        }
        Ok(())
    }

    fn restart(&mut self) -> Result<(), RunError> {
        self.restarts += 1;
        self.completed_work = self.total_work();
        let seed = split_seed(self.master_seed, 0x5EED + self.restarts);
        let store = Arc::new(match &self.matrix {
            Some(m) => PointStore::with_matrix(self.cfg.clone(), m.clone()),
            None => PointStore::new(self.cfg.clone()),
        });
        self.ladder = Ladder::new(store, self.k, self.eps, self.backend, seed, self.all_k)?;
        // replay without re-checking the budget: replay work still counts
        // toward the cumulative total at the next new update
        for op in &self.prefix.clone() {
            self.ladder.apply(op)?;
        }
        Ok(())
    }
}

/// Active-set doubling wrapper (LSH backend): rebuilds LSH parameters when
/// the active size crosses the next power of two or the greedy checkpoint
/// (half the active size at the last checkpoint) fires.
pub struct DoublingLadder {
    ladder: Ladder,
    next_pow: usize,
    checkpoint_size: usize,
    steps_since_checkpoint: usize,
    size_rebuilds: u64,
    checkpoint_rebuilds: u64,
}

impl DoublingLadder {
    pub fn new(ladder: Ladder) -> Result<Self, RunError> {
        if !matches!(ladder.backend(), BackendKind::Lsh { .. }) {
            return Err(RunError::Config("doubling wrapper requires the LSH backend".into()));
        }
        let n = ladder.store().len().max(1);
        Ok(DoublingLadder {
            ladder,
            next_pow: n.next_power_of_two().max(2),
            checkpoint_size: n,
            steps_since_checkpoint: 0,
            size_rebuilds: 0,
            checkpoint_rebuilds: 0,
        })
    }

    pub fn ladder(&self) -> &Ladder {
        &self.ladder
    }

    pub fn ladder_mut(&mut self) -> &mut Ladder {
        &mut self.ladder
    }

    pub fn size_rebuilds(&self) -> u64 {
        self.size_rebuilds
    }

    pub fn checkpoint_rebuilds(&self) -> u64 {
        self.checkpoint_rebuilds
    }

    pub fn apply(&mut self, op: &StreamOp) -> Result<(), RunError> {
        self.ladder.apply(op)?;
        self.steps_since_checkpoint += 1;
        let n = self.ladder.store().len();
        if n > self.next_pow {
            self.next_pow *= 2;
            self.size_rebuilds += 1;
            self.rebuild(n)?;
        } else if self.steps_since_checkpoint >= (self.checkpoint_size / 2).max(1) {
            self.checkpoint_rebuilds += 1;
            self.rebuild(n)?;
        }
        Ok(())
    }

    fn rebuild(&mut self, n_active: usize) -> Result<(), RunError> {
        let n_bound = (2 * n_active.next_power_of_two()).max(4);
        self.ladder.rebuild_lsh(n_bound)?;
        self.checkpoint_size = n_active.max(1);
        self.steps_since_checkpoint = 0;
        Ok(())
    }
}
