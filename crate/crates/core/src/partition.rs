//! Feature-space partitions from k-means++ on point embeddings.
//!
//! Each method embeds a feature vector so that squared Euclidean distance in
//! the embedding is the method's distance:
//!
//! - `md`: coverage profile over the alpha grid, scaled by `1/sqrt(p)`.
//! - `cd`: the HPD curve over the response grid with trapezoid weights.
//! - `euclidean`: standardized features.
//! - `global`: a single group.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::cde::Grid;
use crate::diagnostics::CoverageEstimator;
use crate::error::{Error, Result};
use crate::hpd::HpdCurve;
use crate::math::{self, Standardizer};
use crate::seed;

/// Lloyd iteration cap per restart.
pub const MAX_LLOYD_ITERATIONS: usize = 100;

/// Default number of k-means++ restarts.
pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartitionMethod {
    Md,
    Cd,
    Euclidean,
    Global,
}

impl PartitionMethod {
    pub const ALL: [PartitionMethod; 4] = [
        PartitionMethod::Md,
        PartitionMethod::Cd,
        PartitionMethod::Euclidean,
        PartitionMethod::Global,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PartitionMethod::Md => "md",
            PartitionMethod::Cd => "cd",
            PartitionMethod::Euclidean => "euclidean",
            PartitionMethod::Global => "global",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        PartitionMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown partition method `{s}` (expected md, cd, euclidean or global)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    Global,
    Euclidean(Standardizer),
    ModelDiagnostic(CoverageEstimator),
    /// HPD curve sampled on this response grid.
    Profile(Grid),
}

impl Embedding {
    pub fn method(&self) -> PartitionMethod {
        match self {
            Embedding::Global => PartitionMethod::Global,
            Embedding::Euclidean(_) => PartitionMethod::Euclidean,
            Embedding::ModelDiagnostic(_) => PartitionMethod::Md,
            Embedding::Profile(_) => PartitionMethod::Cd,
        }
    }

    /// Embeds `x`. The `cd` embedding needs the HPD curve at `x`; the others
    /// ignore it.
    pub fn embed(&self, x: &[f64], curve: Option<&HpdCurve>) -> Result<Vec<f64>> {
        match self {
            Embedding::Global => Ok(Vec::new()),
            Embedding::Euclidean(s) => {
                if x.len() != s.dim() {
                    return Err(Error::Dimension { expected: s.dim(), found: x.len() });
                }
                Ok(s.apply(x))
            }
            Embedding::ModelDiagnostic(est) => Ok(embed_md(est, x)?.0),
            Embedding::Profile(grid) => match curve {
                Some(c) => Ok(embed_cd(c, grid)),
                None => Err(Error::config("profile embedding needs the HPD curve at x")),
            },
        }
    }
}

/// Coverage profile of `x` scaled by `1/sqrt(p)`, and the estimator's
/// fallback flag.
pub fn embed_md(estimator: &CoverageEstimator, x: &[f64]) -> Result<(Vec<f64>, bool)> {
    let eval = estimator.profile(x)?;
    let scale = 1.0 / math::sqrt(eval.profile.values.len() as f64);
    let v = eval.profile.values.iter().map(|r| r * scale).collect();
    Ok((v, eval.fallback))
}

/// `HPD(y; x)` at the grid nodes, weighted so that squared distance is the
/// trapezoid rule for `∫ (H_a(y) - H_b(y))^2 dy`.
pub fn embed_cd(curve: &HpdCurve, grid: &Grid) -> Vec<f64> {
    let inner = math::sqrt(grid.step());
    let edge = math::sqrt(0.5 * grid.step());
    let last = grid.len() - 1;
    grid.nodes()
        .enumerate()
        .map(|(i, y)| curve.hpd(y) * if i == 0 || i == last { edge } else { inner })
        .collect()
}

/// Model-diagnostic squared distance between two coverage profiles.
pub fn md_distance_sq(a: &[f64], b: &[f64]) -> f64 {
    math::squared_distance(a, b) / a.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionModel {
    pub embedding: Embedding,
    pub centroids: Vec<Vec<f64>>,
}

impl PartitionModel {
    pub fn global() -> Self {
        PartitionModel { embedding: Embedding::Global, centroids: vec![Vec::new()] }
    }

    pub fn new(embedding: Embedding, centroids: Vec<Vec<f64>>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::config("a partition needs at least one group"));
        }
        let dim = centroids[0].len();
        if centroids.iter().any(|c| c.len() != dim) {
            return Err(Error::config("centroids have different dimensions"));
        }
        if matches!(embedding, Embedding::Global) && (centroids.len() != 1 || dim != 0) {
            return Err(Error::config("the global partition has exactly one group"));
        }
        Ok(PartitionModel { embedding, centroids })
    }

    pub fn method(&self) -> PartitionMethod {
        self.embedding.method()
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Nearest centroid to an embedded point; ties go to the smaller index.
    pub fn assign_embedded(&self, v: &[f64]) -> usize {
        nearest(&self.centroids, v).0
    }

    pub fn assign(&self, x: &[f64], curve: Option<&HpdCurve>) -> Result<usize> {
        if self.k() == 1 {
            return Ok(0);
        }
        Ok(self.assign_embedded(&self.embedding.embed(x, curve)?))
    }
}

fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = math::squared_distance(c, v);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

/// k-means++ seeding followed by Lloyd iterations, best of `restarts` runs
/// by within-cluster sum of squares. Restart `r` draws from the stream
/// seeded by `derive_indexed(seed, r)`; earlier restarts win ties.
pub fn kmeanspp(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::config("k-means needs at least one cluster"));
    }
    if points.is_empty() {
        return Err(Error::config("k-means needs points"));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(format!("invalid embedded point {p:?}")));
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(Error::config(format!("{distinct} distinct points cannot form {k} clusters")));
    }
    let mut best: Option<KMeans> = None;
    for r in 0..restarts.max(1) {
        let mut rng = seed::rng(seed::derive_indexed(seed, r as u64));
        let run = lloyd(points, seed_centroids(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

fn count_distinct(points: &[Vec<f64>]) -> usize {
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    let cmp = |a: &&Vec<f64>, b: &&Vec<f64>| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    };
    sorted.sort_by(cmp);
    sorted.dedup_by(|a, b| cmp(a, b).is_eq());
    sorted.len()
}

fn seed_centroids<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| math::squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut pick = n - 1;
        if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            // Guard against rounding past the end.
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).unwrap();
            }
        }
        let c = points[pick].clone();
        for (di, p) in d2.iter_mut().zip(points) {
            *di = di.min(math::squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeans {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignments = vec![usize::MAX; points.len()];
    let mut dist = vec![0.0; points.len()];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (a, d) = nearest(&centroids, p);
            changed |= assignments[i] != a;
            assignments[i] = a;
            dist[i] = d;
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Reseed an empty cluster with the worst-fitted point.
                let far = (0..points.len()).fold(0, |b, i| if dist[i] > dist[b] { i } else { b });
                centroids[j] = points[far].clone();
                dist[far] = 0.0;
            } else {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| math::squared_distance(p, &centroids[a]))
        .sum();
    KMeans { centroids, assignments, inertia }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn md_distance_examples() {
        assert_eq!(md_distance_sq(&[0.0, 0.3, 1.0], &[0.0, 0.3, 1.0]), 0.0);
        let a = [0.1, 0.2, 0.3, 0.4];
        let b: Vec<f64> = a.iter().map(|v| v + 0.25).collect();
        assert!((md_distance_sq(&a, &b) - 0.0625).abs() < 1e-15);
        assert!((md_distance_sq(&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0]) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cd_distance_matches_quadrature() {
        let grid = Grid::new(-10.0, 10.0, 2001).unwrap();
        let a = HpdCurve::Analytic { mean: 0.0, sd: 1.0 };
        let b = HpdCurve::Analytic { mean: 0.0, sd: 2.0 };
        let d = math::squared_distance(&embed_cd(&a, &grid), &embed_cd(&b, &grid));
        // Composite Simpson on a much finer grid.
        let n = 200_000;
        let h = 20.0 / n as f64;
        let g = |y: f64| (a.hpd(y) - b.hpd(y)).powi(2);
        let mut s = g(-10.0) + g(10.0);
        for i in 1..n {
            s += g(-10.0 + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        assert!((d - s * h / 3.0).abs() < 1e-3);
        let same = HpdCurve::Analytic { mean: 0.0, sd: 1.0 };
        assert!(math::squared_distance(&embed_cd(&a, &grid), &embed_cd(&same, &grid)) < 1e-10);
    }

    #[test]
    fn k_equals_n_is_exact() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let km = kmeanspp(&pts, 6, 3, 4).unwrap();
        assert_eq!(km.inertia, 0.0);
        let mut a = km.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn separated_blobs() {
        let mut rng = seed::rng(1);
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let c = if i % 2 == 0 { 10.0 } else { -10.0 };
                let z: f64 = StandardNormal.sample(&mut rng);
                vec![c + 0.05 * z]
            })
            .collect();
        let km = kmeanspp(&pts, 2, 9, 10).unwrap();
        let mut c: Vec<f64> = km.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert!((c[0] + 10.0).abs() < 0.2 && (c[1] - 10.0).abs() < 0.2);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]];
        let km = kmeanspp(&pts, 1, 0, 3).unwrap();
        assert!((km.centroids[0][0] - 3.0).abs() < 1e-15 && (km.centroids[0][1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn too_few_distinct_points() {
        let pts = vec![vec![1.0]; 10];
        assert!(kmeanspp(&pts, 2, 0, 1).unwrap_err().is_config());
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = seed::rng(2);
        let pts: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        assert_eq!(kmeanspp(&pts, 4, 77, 5).unwrap(), kmeanspp(&pts, 4, 77, 5).unwrap());
    }

    #[test]
    fn assignment_rules() {
        let g = PartitionModel::global();
        assert_eq!(g.assign(&[123.0], None).unwrap(), 0);
        let m = PartitionModel::new(
            Embedding::Euclidean(Standardizer { mean: vec![0.0], scale: vec![1.0] }),
            vec![vec![-1.0], vec![1.0], vec![5.0]],
        )
        .unwrap();
        assert_eq!(m.assign(&[5.0], None).unwrap(), 2);
        assert_eq!(m.assign(&[0.0], None).unwrap(), 0);
        assert_eq!(m.assign_embedded(&[0.9]), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn profile(p: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(0.0f64..1.0, p).prop_map(|v| {
                crate::diagnostics::monotone_profile(&v).values
            })
        }

        proptest! {
            #[test]
            fn md_distance_is_a_metric(a in profile(11), b in profile(11), c in profile(11)) {
                let d = |x: &[f64], y: &[f64]| md_distance_sq(x, y).sqrt();
                prop_assert!(d(&a, &b) >= 0.0);
                prop_assert_eq!(d(&a, &a), 0.0);
                prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-15);
                prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
            }
        }
    }
}
