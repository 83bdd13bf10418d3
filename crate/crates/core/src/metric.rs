//! Metric-space abstraction: point payloads, built-in metrics, an explicit
//! distance-matrix backend, the geometric scale grid, and distance-query
//! accounting shared by every per-scale engine.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::MetricError;

/// Identifier of a stream point. Ids are never reused within one stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PointId(pub u64);

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Point data; all payloads in one stream share one variant and shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PointPayload {
    /// Dense real vector, for lp metrics.
    Vector(Vec<f64>),
    /// Bit vector, for the Hamming metric.
    Bits(Vec<bool>),
    /// Finite set of element ids, for the Jaccard metric.
    Set(BTreeSet<u64>),
    /// Row index into an explicit distance matrix.
    MatrixRow(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MetricKind {
    Lp { p: f64 },
    Hamming,
    Jaccard,
    Matrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricConfig {
    pub kind: MetricKind,
    /// Dimension for vector / bit-vector payloads; 0 when unused.
    pub dim: usize,
    /// Universe size for Jaccard payloads; 0 when unused.
    pub universe: u64,
    pub r_min: f64,
    pub r_max: f64,
}

impl MetricConfig {
    pub fn new(
        kind: MetricKind,
        dim: usize,
        universe: u64,
        r_min: f64,
        r_max: f64,
    ) -> Result<Self, MetricError> {
        if !(r_min > 0.0) || !(r_max >= r_min) {
            return Err(MetricError::BadConfig(format!(
                "need 0 < r_min <= r_max, got r_min={r_min} r_max={r_max}"
            )));
        }
        if let MetricKind::Lp { p } = kind {
            if !(p >= 1.0) {
                return Err(MetricError::BadConfig(format!("lp metric needs p >= 1, got {p}")));
            }
        }
        Ok(MetricConfig { kind, dim, universe, r_min, r_max })
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.r_max / self.r_min
    }

    pub fn validate_payload(&self, payload: &PointPayload) -> Result<(), MetricError> {
        match (self.kind, payload) {
            (MetricKind::Lp { .. }, PointPayload::Vector(v)) => {
                if v.len() != self.dim {
                    return Err(MetricError::DimensionMismatch { expected: self.dim, got: v.len() });
                }
                Ok(())
            }
            (MetricKind::Hamming, PointPayload::Bits(b)) => {
                if b.len() != self.dim {
                    return Err(MetricError::DimensionMismatch { expected: self.dim, got: b.len() });
                }
                Ok(())
            }
            (MetricKind::Jaccard, PointPayload::Set(s)) => {
                if self.universe > 0 {
                    if let Some(&m) = s.iter().next_back() {
                        if m >= self.universe {
                            return Err(MetricError::BadConfig(format!(
                                "set element {m} outside universe {}",
                                self.universe
                            )));
                        }
                    }
                }
                Ok(())
            }
            (MetricKind::Matrix, PointPayload::MatrixRow(_)) => Ok(()),
            _ => Err(MetricError::PayloadVariant),
        }
    }
}

/// Minkowski distance over dense vectors, generic over the scalar type.
pub fn lp_distance<F: Float>(a: &[F], b: &[F], p: F) -> F {
    debug_assert_eq!(a.len(), b.len());
    let two = F::one() + F::one();
    if p == two {
        let mut acc = F::zero();
        for (&x, &y) in a.iter().zip(b) {
            let d = x - y;
            acc = acc + d * d;
        }
        acc.sqrt()
    } else if p == F::one() {
        let mut acc = F::zero();
        for (&x, &y) in a.iter().zip(b) {
            acc = acc + (x - y).abs();
        }
        acc
    } else {
        let mut acc = F::zero();
        for (&x, &y) in a.iter().zip(b) {
            acc = acc + (x - y).abs().powf(p);
        }
        acc.powf(F::one() / p)
    }
}

pub fn hamming_distance(a: &[bool], b: &[bool]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64
}

pub fn jaccard_distance(a: &BTreeSet<u64>, b: &BTreeSet<u64>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    (union - inter) / union
}

/// Distance between two payloads under `cfg`. The matrix backend needs the
/// matrix itself, so use [`PointStore`] for matrix streams; this free function
/// serves the built-in metrics.
pub fn distance(a: &PointPayload, b: &PointPayload, cfg: &MetricConfig) -> Result<f64, MetricError> {
    cfg.validate_payload(a)?;
    cfg.validate_payload(b)?;
    dist_payloads(a, b, cfg, None)
}

pub(crate) fn dist_payloads(
    a: &PointPayload,
    b: &PointPayload,
    cfg: &MetricConfig,
    matrix: Option<&DistanceMatrix>,
) -> Result<f64, MetricError> {
    match (a, b, cfg.kind) {
        (PointPayload::Vector(x), PointPayload::Vector(y), MetricKind::Lp { p }) => {
            Ok(lp_distance(x, y, p))
        }
        (PointPayload::Bits(x), PointPayload::Bits(y), MetricKind::Hamming) => {
            Ok(hamming_distance(x, y))
        }
        (PointPayload::Set(x), PointPayload::Set(y), MetricKind::Jaccard) => {
            Ok(jaccard_distance(x, y))
        }
        (PointPayload::MatrixRow(i), PointPayload::MatrixRow(j), MetricKind::Matrix) => {
            let m = matrix.ok_or_else(|| MetricError::Matrix("no matrix loaded".into()))?;
            m.get(*i, *j)
        }
        _ => Err(MetricError::PayloadVariant),
    }
}

/// Geometric scale grid with ratio (1 + eps/2): first value r_min, last value
/// the first grid point >= r_max.
pub fn scale_grid<F: Float>(r_min: F, r_max: F, eps: F) -> Vec<F> {
    let two = F::one() + F::one();
    let ratio = F::one() + eps / two;
    let mut grid = vec![r_min];
    let mut cur = r_min;
    while cur < r_max {
        cur = cur * ratio;
        grid.push(cur);
    }
    grid
}

/// Monotone counter of distance evaluations with per-update snapshots.
#[derive(Debug, Default)]
pub struct QueryCounter {
    total: AtomicU64,
    snapshots: Mutex<Vec<u64>>,
}

impl QueryCounter {
    pub fn bump(&self) {
        self.total.fetch_add(1, Ordering::Relaxed);
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::Relaxed)
    }

    /// Record the running total at an update boundary.
    pub fn snapshot(&self) {
        self.snapshots.lock().unwrap().push(self.total());
    }

    pub fn snapshots(&self) -> Vec<u64> {
        self.snapshots.lock().unwrap().clone()
    }
}

/// Symmetric distance matrix with zero diagonal.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates symmetry and zero diagonal; the triangle inequality is only
    /// checked when `strict` is set (O(n^3)).
    pub fn new(n: usize, entries: Vec<f64>, strict: bool) -> Result<Self, MetricError> {
        if entries.len() != n * n {
            return Err(MetricError::Matrix(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                entries.len()
            )));
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(MetricError::Matrix(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(MetricError::Matrix(format!("asymmetry at ({i},{j})")));
                }
            }
        }
        if strict {
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        if entries[i * n + j] > entries[i * n + l] + entries[l * n + j] + 1e-9 {
                            return Err(MetricError::Matrix(format!(
                                "triangle inequality violated at ({i},{j},{l})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(DistanceMatrix { n, entries })
    }

    pub fn parse(text: &str, strict: bool) -> Result<Self, MetricError> {
        let vals: Result<Vec<f64>, _> = text.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| MetricError::Matrix(format!("bad entry: {e}")))?;
        let n = (vals.len() as f64).sqrt().round() as usize;
        DistanceMatrix::new(n, vals, strict)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Result<f64, MetricError> {
        if i >= self.n || j >= self.n {
            return Err(MetricError::Matrix(format!("row index out of range: ({i},{j})")));
        }
        Ok(self.entries[i * self.n + j])
    }

    /// Smallest and largest off-diagonal entries, used to derive r_min/r_max.
    pub fn off_diagonal_range(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            for j in 0..i {
                let d = self.entries[i * self.n + j];
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        (self.n >= 2).then_some((lo, hi))
    }
}

/// Active point set plus metric: the shared distance oracle for all scales.
///
/// The metric itself (config, matrix) is read-only after construction; the
/// active set mutates as the stream advances. All counted distance
/// evaluations go through [`PointStore::distance_ids`].
#[derive(Debug)]
pub struct PointStore {
    cfg: MetricConfig,
    matrix: Option<DistanceMatrix>,
    points: RwLock<HashMap<PointId, PointPayload>>,
    counter: QueryCounter,
    verify_range: bool,
    range_violations: AtomicU64,
}

impl PointStore {
    pub fn new(cfg: MetricConfig) -> Self {
        PointStore {
            cfg,
            matrix: None,
            points: RwLock::new(HashMap::new()),
            counter: QueryCounter::default(),
            verify_range: false,
            range_violations: AtomicU64::new(0),
        }
    }

    pub fn with_matrix(cfg: MetricConfig, matrix: DistanceMatrix) -> Self {
        let mut s = PointStore::new(cfg);
        s.matrix = Some(matrix);
        s
    }

    pub fn set_verify_range(&mut self, on: bool) {
        self.verify_range = on;
    }

    pub fn cfg(&self) -> &MetricConfig {
        &self.cfg
    }

    pub fn matrix(&self) -> Option<&DistanceMatrix> {
        self.matrix.as_ref()
    }

    pub fn counter(&self) -> &QueryCounter {
        &self.counter
    }

    pub fn range_violations(&self) -> u64 {
        self.range_violations.load(Ordering::Relaxed)
    }

    pub fn insert(&self, id: PointId, payload: PointPayload) -> Result<(), MetricError> {
        self.cfg.validate_payload(&payload)?;
        if let PointPayload::MatrixRow(i) = payload {
            let n = self.matrix.as_ref().map(|m| m.n()).unwrap_or(0);
            if i >= n {
                return Err(MetricError::Matrix(format!("row {i} out of range for {n}x{n}")));
            }
        }
        let mut pts = self.points.write().unwrap();
        if pts.contains_key(&id) {
            return Err(MetricError::DuplicatePoint(id));
        }
        pts.insert(id, payload);
        Ok(())
    }

    pub fn remove(&self, id: PointId) -> Result<PointPayload, MetricError> {
        self.points.write().unwrap().remove(&id).ok_or(MetricError::UnknownPoint(id))
    }

    pub fn contains(&self, id: PointId) -> bool {
        self.points.read().unwrap().contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.points.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn payload(&self, id: PointId) -> Option<PointPayload> {
        self.points.read().unwrap().get(&id).cloned()
    }

    /// Active ids in ascending order.
    pub fn active_ids(&self) -> Vec<PointId> {
        let mut ids: Vec<PointId> = self.points.read().unwrap().keys().copied().collect();
        ids.sort();
        ids
    }

    /// Counted distance between two active points. Panics on unknown ids:
    /// engines only ever query active points.
    pub fn distance_ids(&self, a: PointId, b: PointId) -> f64 {
        self.counter.bump();
        let d = self.distance_uncounted(a, b);
        if self.verify_range && a != b && (d < self.cfg.r_min || d > self.cfg.r_max) {
            self.range_violations.fetch_add(1, Ordering::Relaxed);
        }
        d
    }

    /// Distance without touching the query counter; for verification only.
    pub fn distance_uncounted(&self, a: PointId, b: PointId) -> f64 {
        let pts = self.points.read().unwrap();
        let pa = pts.get(&a).unwrap_or_else(|| panic!("unknown point {a}"));
        let pb = pts.get(&b).unwrap_or_else(|| panic!("unknown point {b}"));
        dist_payloads(pa, pb, &self.cfg, self.matrix.as_ref()).expect("validated at insert")
    }

    /// Counted distance between an external payload and an active point.
    pub fn distance_payload(&self, a: &PointPayload, b: PointId) -> f64 {
        self.counter.bump();
        let pts = self.points.read().unwrap();
        let pb = pts.get(&b).unwrap_or_else(|| panic!("unknown point {b}"));
        dist_payloads(a, pb, &self.cfg, self.matrix.as_ref()).expect("validated at insert")
    }
}
