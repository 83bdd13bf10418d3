//! LSH-backed neighbor index: s concatenated hash tables with rank-ordered
//! buckets, serving query-top / query-all over the sandwiched graph
//! G_r ⊆ G ⊆ G_cr (bucket collisions intersected with the cr-threshold).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::LshError;
use crate::lfmis::{NeighborIndex, Rank};
use crate::metric::{PointId, PointPayload, PointStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LshFamilyKind {
    /// Seeded 64-bit hash of element ids with min-selection; a random
    /// permutation surrogate. Collision probability is the Jaccard similarity.
    MinHash,
    /// floor((<a,x> + b)/w) with Cauchy (p=1) or Gaussian (p=2) coefficients.
    PStable { p: f64, width: f64 },
    /// Random coordinate sampling for the Hamming metric.
    BitSampling { dim: usize },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LshFamily {
    pub kind: LshFamilyKind,
    pub r: f64,
    pub c: f64,
    pub p1: f64,
    pub p2: f64,
}

impl LshFamily {
    fn check(self) -> Result<Self, LshError> {
        if !(self.p2 < 1.0) {
            return Err(LshError::BadFamily(format!("p2 = {} must be < 1", self.p2)));
        }
        if !(self.p1 > self.p2) {
            return Err(LshError::BadFamily(format!(
                "need p1 > p2, got p1 = {} p2 = {}",
                self.p1, self.p2
            )));
        }
        Ok(self)
    }

    /// MinHash at threshold r with approximation factor c: p1 = 1 - r,
    /// p2 = 1 - cr. Requires cr < 1, which the ladder guarantees by capping
    /// the Jaccard grid at 1/(2c).
    pub fn minhash(r: f64, c: f64) -> Result<Self, LshError> {
        LshFamily { kind: LshFamilyKind::MinHash, r, c, p1: 1.0 - r, p2: 1.0 - c * r }.check()
    }

    pub fn p_stable(p: f64, r: f64, c: f64, width: f64) -> Result<Self, LshError> {
        if p != 1.0 && p != 2.0 {
            return Err(LshError::BadFamily(format!(
                "p-stable supports p = 1 (Cauchy) or p = 2 (Gaussian), got {p}"
            )));
        }
        let p1 = p_stable_collision_prob(r, width, p);
        let p2 = p_stable_collision_prob(c * r, width, p);
        LshFamily { kind: LshFamilyKind::PStable { p, width }, r, c, p1, p2 }.check()
    }

    pub fn bit_sampling(dim: usize, r: f64, c: f64) -> Result<Self, LshError> {
        let d = dim as f64;
        let p1 = 1.0 - r / d;
        let p2 = 1.0 - (c * r).min(d) / d;
        LshFamily { kind: LshFamilyKind::BitSampling { dim }, r, c, p1, p2 }.check()
    }

    pub fn rho(&self) -> f64 {
        self.p1.ln() / self.p2.ln()
    }
}

/// Abramowitz & Stegun 7.1.26 rational approximation (|err| < 1.5e-7); enough
/// precision for hash-parameter planning.
fn erf<F: Float>(x: F) -> F {
    let one = F::one();
    let sign = if x < F::zero() { -one } else { one };
    let x = x.abs();
    let t = one / (one + F::from(0.3275911).unwrap() * x);
    let poly = t
        * (F::from(0.254829592).unwrap()
            + t * (F::from(-0.284496736).unwrap()
                + t * (F::from(1.421413741).unwrap()
                    + t * (F::from(-1.453152027).unwrap()
                        + t * F::from(1.061405429).unwrap()))));
    sign * (one - poly * (-x * x).exp())
}

fn norm_cdf<F: Float>(x: F) -> F {
    let half = F::from(0.5).unwrap();
    let sqrt2 = F::from(std::f64::consts::SQRT_2).unwrap();
    half * (F::one() + erf(x / sqrt2))
}

/// Collision probability of one floor((<a,x>+b)/w) component for two points
/// at distance `dist`, with Cauchy (p=1) or Gaussian (p=2) projections.
pub fn p_stable_collision_prob<F: Float>(dist: F, width: F, p: F) -> F {
    if dist <= F::zero() {
        return F::one();
    }
    let one = F::one();
    let two = one + one;
    let t = width / dist;
    if p == one {
        // Cauchy: 2 atan(t)/pi - ln(1 + t^2)/(pi t)
        let pi = F::from(std::f64::consts::PI).unwrap();
        two * t.atan() / pi - (one + t * t).ln() / (pi * t)
    } else {
        // Gaussian: 1 - 2 Phi(-t) - 2/(sqrt(2 pi) t) (1 - exp(-t^2/2))
        let two_pi = F::from(std::f64::consts::TAU).unwrap();
        one - two * norm_cdf(-t) - two / (two_pi.sqrt() * t) * (one - (-t * t / two).exp())
    }
}

/// Exact MinHash collision probability |A ∩ B| / |A ∪ B| as a rational pair.
pub fn minhash_collision_prob(
    a: &BTreeSet<u64>,
    b: &BTreeSet<u64>,
) -> Result<(u64, u64), LshError> {
    if a.is_empty() || b.is_empty() {
        return Err(LshError::BadFamily("minhash needs nonempty sets".into()));
    }
    let inter = a.intersection(b).count() as u64;
    let union = a.union(b).count() as u64;
    Ok((inter, union))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BucketParams {
    pub s: usize,
    pub t: usize,
}

/// s and t per the planning formulas: t = ceil(2 log_{1/p2} n),
/// s = ceil(ln(n^2/delta) n^{2 rho} / p1).
pub fn plan(n_bound: usize, delta: f64, family: &LshFamily) -> Result<BucketParams, LshError> {
    if n_bound < 2 {
        return Err(LshError::BadBuild(format!("n_bound must be >= 2, got {n_bound}")));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(LshError::BadBuild(format!("delta must be in (0, 1/2), got {delta}")));
    }
    family.check()?;
    let n = n_bound as f64;
    let t = (2.0 * n.ln() / (1.0 / family.p2).ln()).ceil() as usize;
    let rho = family.rho();
    let s = ((n * n / delta).ln() * n.powf(2.0 * rho) / family.p1).ceil() as usize;
    Ok(BucketParams { s: s.max(1), t: t.max(1) })
}

/// Everything the run report records about one (re)build.
#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    pub family: LshFamily,
    pub rho: f64,
    pub s: usize,
    pub t: usize,
    pub n_bound: usize,
    pub delta: f64,
    pub seed: u64,
    /// Empirical collision rates on calibration pairs at distance r and cr
    /// (p-stable families only).
    pub measured_p1: Option<f64>,
    pub measured_p2: Option<f64>,
}

#[derive(Debug, Clone)]
enum HashComponent {
    MinHash { seed: u64 },
    PStable { a: Vec<f64>, b: f64, w: f64 },
    BitSample { coord: usize },
}

fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 33)).wrapping_mul(0xFF51AFD7ED558CCD);
    x = (x ^ (x >> 33)).wrapping_mul(0xC4CEB9FE1A85EC53);
    x ^ (x >> 33)
}

impl HashComponent {
    fn eval(&self, payload: &PointPayload) -> u64 {
        match (self, payload) {
            (HashComponent::MinHash { seed }, PointPayload::Set(s)) => {
                // argmin over the seeded permutation surrogate
                s.iter()
                    .map(|&e| (mix64(seed ^ mix64(e.wrapping_add(1))), e))
                    .min()
                    .map(|(_, e)| e)
                    .unwrap_or(u64::MAX)
            }
            (HashComponent::PStable { a, b, w }, PointPayload::Vector(x)) => {
                let dot: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
                (((dot + b) / w).floor() as i64) as u64
            }
            (HashComponent::BitSample { coord }, PointPayload::Bits(bits)) => {
                bits[*coord] as u64
            }
            _ => panic!("payload variant does not match LSH family"),
        }
    }
}

/// Gaussian sample via Box-Muller; avoids an extra distribution dependency.
fn sample_gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn sample_cauchy(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    (std::f64::consts::PI * (u - 0.5)).tan()
}

#[derive(Debug)]
pub struct BucketIndex {
    store: Arc<PointStore>,
    family: LshFamily,
    params: BucketParams,
    /// components[i][j] is component j of table i's concatenated hash.
    components: Vec<Vec<HashComponent>>,
    tables: Vec<HashMap<u64, BTreeSet<Rank>>>,
    cached: HashMap<PointId, (Vec<u64>, Rank)>,
    report: BuildReport,
    candidate_checks: u64,
    wasted_collisions: u64,
}

impl BucketIndex {
    pub fn build(
        store: Arc<PointStore>,
        n_bound: usize,
        delta: f64,
        family: LshFamily,
        seed: u64,
    ) -> Result<Self, LshError> {
        let params = plan(n_bound, delta, &family)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = store.cfg().dim;
        let mut components = Vec::with_capacity(params.s);
        for _ in 0..params.s {
            let mut row = Vec::with_capacity(params.t);
            for _ in 0..params.t {
                row.push(match family.kind {
                    LshFamilyKind::MinHash => HashComponent::MinHash { seed: rng.gen() },
                    LshFamilyKind::PStable { p, width } => {
                        let a: Vec<f64> = (0..dim)
                            .map(|_| {
                                if p == 1.0 {
                                    sample_cauchy(&mut rng)
                                } else {
                                    sample_gaussian(&mut rng)
                                }
                            })
                            .collect();
                        HashComponent::PStable { a, b: rng.gen_range(0.0..width), w: width }
                    }
                    LshFamilyKind::BitSampling { dim } => {
                        HashComponent::BitSample { coord: rng.gen_range(0..dim) }
                    }
                });
            }
            components.push(row);
        }
        let mut index = BucketIndex {
            store,
            family,
            params,
            components,
            tables: vec![HashMap::new(); params.s],
            cached: HashMap::new(),
            report: BuildReport {
                family,
                rho: family.rho(),
                s: params.s,
                t: params.t,
                n_bound,
                delta,
                seed,
                measured_p1: None,
                measured_p2: None,
            },
            candidate_checks: 0,
            wasted_collisions: 0,
        };
        if let LshFamilyKind::PStable { .. } = family.kind {
            let (m1, m2) = index.measure_calibration(&mut rng, dim);
            index.report.measured_p1 = Some(m1);
            index.report.measured_p2 = Some(m2);
        }
        Ok(index)
    }

    /// Mean per-component collision rate on synthetic vector pairs at
    /// distances exactly r and cr.
    fn measure_calibration(&self, rng: &mut ChaCha8Rng, dim: usize) -> (f64, f64) {
        let mut rates = [0.0f64; 2];
        for (slot, dist) in [self.family.r, self.family.c * self.family.r].iter().enumerate() {
            let mut hits = 0u64;
            let mut total = 0u64;
            for _ in 0..16 {
                let base: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
                let mut dir: Vec<f64> = (0..dim).map(|_| sample_gaussian(rng)).collect();
                let norm: f64 = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                dir.iter_mut().for_each(|x| *x *= dist / norm);
                let other: Vec<f64> = base.iter().zip(&dir).map(|(b, d)| b + d).collect();
                let pa = PointPayload::Vector(base);
                let pb = PointPayload::Vector(other);
                for row in &self.components {
                    for comp in row {
                        total += 1;
                        if comp.eval(&pa) == comp.eval(&pb) {
                            hits += 1;
                        }
                    }
                }
            }
            rates[slot] = hits as f64 / total.max(1) as f64;
        }
        (rates[0], rates[1])
    }

    pub fn report(&self) -> &BuildReport {
        &self.report
    }

    pub fn params(&self) -> BucketParams {
        self.params
    }

    pub fn family(&self) -> LshFamily {
        self.family
    }

    pub fn wasted_collisions(&self) -> u64 {
        self.wasted_collisions
    }

    /// One 64-bit bucket key per table for a payload (FNV-1a over the t
    /// component values).
    pub fn hash_keys(&self, payload: &PointPayload) -> Vec<u64> {
        self.components
            .iter()
            .map(|row| {
                let mut acc: u64 = 0xCBF29CE484222325;
                for comp in row {
                    let v = comp.eval(payload);
                    for byte in v.to_le_bytes() {
                        acc ^= byte as u64;
                        acc = acc.wrapping_mul(0x100000001B3);
                    }
                }
                acc
            })
            .collect()
    }

    /// Whether two payloads share at least one bucket under the drawn
    /// functions; materializes the realized graph on small instances.
    pub fn collides(&self, a: &PointPayload, b: &PointPayload) -> bool {
        self.hash_keys(a).iter().zip(self.hash_keys(b)).any(|(x, y)| *x == y)
    }

    fn cutoff(&self) -> f64 {
        self.family.c * self.family.r
    }
}

impl NeighborIndex for BucketIndex {
    fn insert(&mut self, id: PointId, rank: Rank) {
        let payload = self.store.payload(id).expect("active point");
        let keys = self.hash_keys(&payload);
        for (table, &key) in self.tables.iter_mut().zip(&keys) {
            table.entry(key).or_default().insert(rank);
        }
        self.cached.insert(id, (keys, rank));
    }

    fn remove(&mut self, id: PointId) {
        let Some((keys, rank)) = self.cached.remove(&id) else { return };
        for (table, &key) in self.tables.iter_mut().zip(&keys) {
            if let Some(bucket) = table.get_mut(&key) {
                bucket.remove(&rank);
                if bucket.is_empty() {
                    table.remove(&key);
                }
            }
        }
    }

    fn query_top(&mut self, id: PointId) -> Option<PointId> {
        let payload = self.store.payload(id).expect("active point");
        let keys = self.hash_keys(&payload);
        let cutoff = self.cutoff();
        // s-way in-order merge over the rank-ordered buckets
        let mut iters: Vec<_> = self
            .tables
            .iter()
            .zip(&keys)
            .filter_map(|(table, key)| table.get(key))
            .map(|bucket| bucket.iter().peekable())
            .collect();
        let mut seen: HashSet<PointId> = HashSet::new();
        loop {
            let mut best: Option<(Rank, usize)> = None;
            for (i, it) in iters.iter_mut().enumerate() {
                if let Some(&&rank) = it.peek() {
                    if best.map(|(b, _)| rank < b).unwrap_or(true) {
                        best = Some((rank, i));
                    }
                }
            }
            let Some((rank, i)) = best else { return None };
            iters[i].next();
            if rank.id == id || !seen.insert(rank.id) {
                continue;
            }
            self.candidate_checks += 1;
            if self.store.distance_ids(id, rank.id) <= cutoff {
                return Some(rank.id);
            }
            self.wasted_collisions += 1;
        }
    }

    fn query_all(&mut self, id: PointId) -> Vec<PointId> {
        let payload = self.store.payload(id).expect("active point");
        let keys = self.hash_keys(&payload);
        let mut candidates: BTreeSet<Rank> = BTreeSet::new();
        for (table, key) in self.tables.iter().zip(&keys) {
            if let Some(bucket) = table.get(key) {
                candidates.extend(bucket.iter().copied());
            }
        }
        let mut out = Vec::new();
        for rank in candidates {
            if rank.id == id {
                continue;
            }
            self.candidate_checks += 1;
            if self.store.distance_ids(id, rank.id) <= self.cutoff() {
                out.push(rank.id);
            } else {
                self.wasted_collisions += 1;
            }
        }
        out
    }

    fn work(&self) -> u64 {
        self.candidate_checks
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{MetricConfig, MetricKind};

    fn jaccard_store(universe: u64) -> Arc<PointStore> {
        let cfg = MetricConfig::new(MetricKind::Jaccard, 0, universe, 0.01, 1.0).unwrap();
        Arc::new(PointStore::new(cfg))
    }

    fn set(elems: &[u64]) -> PointPayload {
        PointPayload::Set(elems.iter().copied().collect())
    }

    #[test]
    fn plan_matches_worked_example() {
        // n=100, delta=0.1, p1=0.9, p2=0.5
        let family = LshFamily {
            kind: LshFamilyKind::MinHash,
            r: 0.1,
            c: 5.0,
            p1: 0.9,
            p2: 0.5,
        };
        assert!((family.rho() - 0.1520).abs() < 5e-4);
        let params = plan(100, 0.1, &family).unwrap();
        assert_eq!(params.t, 14);
        assert_eq!(params.s, 52);
    }

    #[test]
    fn plan_rejects_degenerate_families() {
        let eq = LshFamily { kind: LshFamilyKind::MinHash, r: 0.2, c: 1.0, p1: 0.8, p2: 0.8 };
        assert!(plan(100, 0.1, &eq).is_err());
        let family = LshFamily::minhash(0.2, 2.0).unwrap();
        assert!(plan(1, 0.1, &family).is_err());
        assert!(plan(100, 0.7, &family).is_err());
        // minimal build: n = 2 gives t >= 2
        let params = plan(2, 0.1, &family).unwrap();
        assert!(params.t >= 2);
    }

    #[test]
    fn minhash_collision_prob_exact() {
        let a: BTreeSet<u64> = [1, 2].into_iter().collect();
        let b: BTreeSet<u64> = [2, 3].into_iter().collect();
        assert_eq!(minhash_collision_prob(&a, &b).unwrap(), (1, 3));
        assert_eq!(minhash_collision_prob(&a, &a).unwrap(), (2, 2));
        let c: BTreeSet<u64> = [7, 8].into_iter().collect();
        assert_eq!(minhash_collision_prob(&a, &c).unwrap(), (0, 4));
        assert!(minhash_collision_prob(&a, &BTreeSet::new()).is_err());
    }

    #[test]
    fn minhash_empirical_matches_jaccard() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let a: BTreeSet<u64> = (0..24u64).filter(|_| rng.gen_bool(0.5)).collect();
            let b: BTreeSet<u64> = (0..24u64).filter(|_| rng.gen_bool(0.5)).collect();
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let (num, den) = minhash_collision_prob(&a, &b).unwrap();
            let expect = num as f64 / den as f64;
            let mut hits = 0u64;
            let draws = 10_000u64;
            for i in 0..draws {
                let comp = HashComponent::MinHash { seed: rng.gen::<u64>() ^ i };
                if comp.eval(&PointPayload::Set(a.clone()))
                    == comp.eval(&PointPayload::Set(b.clone()))
                {
                    hits += 1;
                }
            }
            let freq = hits as f64 / draws as f64;
            assert!(
                (freq - expect).abs() <= 0.03,
                "empirical {freq} vs exact {expect} for |A∩B|/|A∪B| = {num}/{den}"
            );
        }
    }

    #[test]
    fn insert_delete_restores_buckets() {
        let store = jaccard_store(32);
        store.insert(PointId(1), set(&[1, 2, 3])).unwrap();
        let family = LshFamily::minhash(0.2, 2.0).unwrap();
        let mut idx = BucketIndex::build(store, 16, 0.1, family, 7).unwrap();
        idx.insert(PointId(1), Rank { value: 5, id: PointId(1) });
        idx.remove(PointId(1));
        assert!(idx.tables.iter().all(|t| t.is_empty()));
    }

    #[test]
    fn identical_payloads_always_collide_and_disjoint_minhash_never() {
        let store = jaccard_store(32);
        let family = LshFamily::minhash(0.2, 2.0).unwrap();
        let idx = BucketIndex::build(store, 16, 0.1, family, 3).unwrap();
        assert!(idx.collides(&set(&[1, 5, 9]), &set(&[1, 5, 9])));
        // disjoint sets: every MinHash component picks different minima
        for row in &idx.components {
            for comp in row {
                assert_ne!(comp.eval(&set(&[1, 2])), comp.eval(&set(&[30, 31])));
            }
        }
    }

    #[test]
    fn query_top_filters_and_counts_waste() {
        let store = jaccard_store(64);
        // near: Jaccard distance 1/3 <= c*r = 0.4; far: distance ~1 > 0.4
        store.insert(PointId(1), set(&[1, 2, 3, 4])).unwrap();
        store.insert(PointId(2), set(&[1, 2, 3, 4, 5, 6])).unwrap();
        store.insert(PointId(3), set(&[40, 41])).unwrap();
        let family = LshFamily::minhash(0.2, 2.0).unwrap();
        let mut idx = BucketIndex::build(store.clone(), 16, 0.1, family, 11).unwrap();
        assert_eq!(idx.query_top(PointId(1)), None, "empty index");

        idx.insert(PointId(2), Rank { value: 10, id: PointId(2) });
        let hit = idx.query_top(PointId(1));
        if idx.collides(&store.payload(PointId(1)).unwrap(), &store.payload(PointId(2)).unwrap())
        {
            assert_eq!(hit, Some(PointId(2)));
        } else {
            assert_eq!(hit, None);
        }

        // a far point that happens to share a bucket must be skipped
        idx.remove(PointId(2));
        idx.insert(PointId(3), Rank { value: 20, id: PointId(3) });
        let before = idx.wasted_collisions();
        let res = idx.query_top(PointId(1));
        assert_eq!(res, None);
        if idx.collides(&store.payload(PointId(1)).unwrap(), &store.payload(PointId(3)).unwrap())
        {
            assert_eq!(idx.wasted_collisions(), before + 1);
        }
    }

    #[test]
    fn query_all_rank_ordered_and_sandwiched() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let store = jaccard_store(40);
        let mut ranks = Vec::new();
        for i in 0..12u64 {
            let s: BTreeSet<u64> = (0..40u64).filter(|_| rng.gen_bool(0.3)).collect();
            let s = if s.is_empty() { [i].into_iter().collect() } else { s };
            store.insert(PointId(i), PointPayload::Set(s)).unwrap();
            ranks.push(Rank { value: rng.gen(), id: PointId(i) });
        }
        let family = LshFamily::minhash(0.2, 2.0).unwrap();
        let mut idx = BucketIndex::build(store.clone(), 16, 0.1, family, 23).unwrap();
        for &rank in &ranks[1..] {
            idx.insert(rank.id, rank);
        }
        let out = idx.query_all(PointId(0));
        // rank-ordered output
        let out_ranks: Vec<Rank> =
            out.iter().map(|id| ranks.iter().find(|r| r.id == *id).unwrap()).copied().collect();
        assert!(out_ranks.windows(2).all(|w| w[0] < w[1]));
        // subset of the cr ball; superset of colliding r-ball members
        let p0 = store.payload(PointId(0)).unwrap();
        for id in &out {
            assert!(store.distance_uncounted(PointId(0), *id) <= 0.4 + 1e-12);
        }
        for &rank in &ranks[1..] {
            let d = store.distance_uncounted(PointId(0), rank.id);
            let pb = store.payload(rank.id).unwrap();
            if d <= 0.2 && idx.collides(&p0, &pb) {
                assert!(out.contains(&rank.id));
            }
        }
    }

    #[test]
    fn p_stable_families_have_sane_probabilities() {
        for p in [1.0, 2.0] {
            let fam = LshFamily::p_stable(p, 1.0, 2.0, 4.0).unwrap();
            assert!(fam.p1 > fam.p2 && fam.p2 > 0.0 && fam.p1 < 1.0);
            assert!(fam.rho() > 0.0 && fam.rho() < 1.0);
        }
        assert!(LshFamily::p_stable(1.5, 1.0, 2.0, 4.0).is_err());
        // Gaussian with w = 4r keeps rho at or below 1/c
        let fam = LshFamily::p_stable(2.0, 1.0, 2.0, 4.0).unwrap();
        assert!(fam.rho() <= 0.5 + 0.02, "rho = {}", fam.rho());
    }

    #[test]
    fn p_stable_build_records_measurements() {
        let cfg = MetricConfig::new(MetricKind::Lp { p: 2.0 }, 3, 0, 0.01, 10.0).unwrap();
        let store = Arc::new(PointStore::new(cfg));
        let fam = LshFamily::p_stable(2.0, 1.0, 2.0, 4.0).unwrap();
        let idx = BucketIndex::build(store, 8, 0.1, fam, 99).unwrap();
        let rep = idx.report();
        let m1 = rep.measured_p1.unwrap();
        let m2 = rep.measured_p2.unwrap();
        assert!((m1 - fam.p1).abs() < 0.1, "measured {m1} vs planned {}", fam.p1);
        assert!((m2 - fam.p2).abs() < 0.1, "measured {m2} vs planned {}", fam.p2);
    }

    #[test]
    fn bit_sampling_family() {
        let fam = LshFamily::bit_sampling(16, 2.0, 2.0).unwrap();
        assert_eq!(fam.p1, 1.0 - 2.0 / 16.0);
        assert_eq!(fam.p2, 1.0 - 4.0 / 16.0);
        let cfg = MetricConfig::new(MetricKind::Hamming, 16, 0, 1.0, 16.0).unwrap();
        let store = Arc::new(PointStore::new(cfg));
        store.insert(PointId(1), PointPayload::Bits(vec![true; 16])).unwrap();
        store.insert(PointId(2), PointPayload::Bits(vec![true; 16])).unwrap();
        let mut idx = BucketIndex::build(store, 8, 0.1, fam, 1).unwrap();
        idx.insert(PointId(2), Rank { value: 1, id: PointId(2) });
        assert_eq!(idx.query_top(PointId(1)), Some(PointId(2)));
    }
}
