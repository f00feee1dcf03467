//! Empirical coverage of prediction regions on a test set, stratified by
//! feature bins, true subpopulations or assigned clusters.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::conformal::{LocalConformalPredictor, PredictionRegion};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math;

/// Anything that maps a feature vector to one region per nominal level.
pub trait RegionPredictor {
    fn regions(&self, x: &[f64], levels: &[f64]) -> Result<Vec<PredictionRegion>>;
}

impl RegionPredictor for LocalConformalPredictor {
    fn regions(&self, x: &[f64], levels: &[f64]) -> Result<Vec<PredictionRegion>> {
        let p = self.prepare(x)?;
        Ok(levels.iter().map(|l| self.region_prepared(&p, 1.0 - l)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stratum {
    Marginal,
    /// `[lo, hi)` on the single feature; the last bin also holds `hi`.
    Bin { lo: f64, hi: f64 },
    TrueGroup(u32),
    Cluster(usize),
}

impl Stratum {
    pub fn label(&self) -> String {
        match self {
            Stratum::Marginal => "marginal".into(),
            Stratum::Bin { lo, hi } => format!("bin[{lo},{hi})"),
            Stratum::TrueGroup(g) => format!("group{g}"),
            Stratum::Cluster(k) => format!("cluster{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumCoverage {
    pub stratum: Stratum,
    pub count: usize,
    /// Covered test points per level.
    pub covered: Vec<usize>,
}

impl StratumCoverage {
    /// Achieved coverage at level index `j`; `None` for an empty stratum.
    pub fn achieved(&self, j: usize) -> Option<f64> {
        (self.count > 0).then(|| self.covered[j] as f64 / self.count as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub levels: Vec<f64>,
    pub strata: Vec<StratumCoverage>,
}

impl CoverageReport {
    pub fn total_count(&self) -> usize {
        self.strata.iter().map(|s| s.count).sum()
    }

    /// `|achieved - nominal|` per stratum at level index `j`, skipping
    /// empty strata.
    pub fn deviations(&self, j: usize) -> Vec<f64> {
        self.strata
            .iter()
            .filter_map(|s| s.achieved(j).map(|a| (a - self.levels[j]).abs()))
            .collect()
    }

    pub fn mean_deviation(&self, j: usize) -> f64 {
        math::mean(&self.deviations(j))
    }

    pub fn max_deviation(&self, j: usize) -> f64 {
        self.deviations(j).into_iter().fold(0.0, f64::max)
    }

    pub fn level_index(&self, level: f64) -> Option<usize> {
        self.levels.iter().position(|l| (l - level).abs() < 1e-12)
    }
}

/// Three binomial standard deviations of achieved coverage for a stratum of
/// `count` points at nominal `level`.
pub fn binomial_band(level: f64, count: usize) -> f64 {
    if count == 0 {
        return f64::INFINITY;
    }
    3.0 * math::sqrt(level * (1.0 - level) / count as f64)
}

/// Coverage indicators and assigned groups of every test point.
#[derive(Debug, Clone, PartialEq)]
pub struct TestEvaluation {
    pub levels: Vec<f64>,
    /// `covered[i][j]`: test point `i` lies in its level-`j` region.
    pub covered: Vec<Vec<bool>>,
    pub clusters: Vec<usize>,
    pub touched_boundary: usize,
}

fn check_levels(levels: &[f64]) -> Result<()> {
    match levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        Some(l) => Err(Error::config(format!("nominal level {l} outside (0, 1)"))),
        None => Ok(()),
    }
}

pub fn evaluate(predictor: &dyn RegionPredictor, test: &Dataset, levels: &[f64]) -> Result<TestEvaluation> {
    check_levels(levels)?;
    let mut covered = Vec::with_capacity(test.len());
    let mut clusters = Vec::with_capacity(test.len());
    let mut touched_boundary = 0;
    for i in 0..test.len() {
        let regions = predictor.regions(test.row(i), levels).map_err(|e| Error::at_index(i, e))?;
        let y = test.response(i);
        covered.push(regions.iter().map(|r| r.contains(y)).collect());
        clusters.push(regions.first().map_or(0, |r| r.group));
        touched_boundary += regions.iter().any(|r| r.touches_boundary) as usize;
    }
    Ok(TestEvaluation { levels: levels.to_vec(), covered, clusters, touched_boundary })
}

impl TestEvaluation {
    fn tally(&self, strata: Vec<Stratum>, key: impl Fn(usize) -> usize) -> CoverageReport {
        let p = self.levels.len();
        let mut rows: Vec<StratumCoverage> = strata
            .into_iter()
            .map(|stratum| StratumCoverage { stratum, count: 0, covered: vec![0; p] })
            .collect();
        for (i, cov) in self.covered.iter().enumerate() {
            let row = &mut rows[key(i)];
            row.count += 1;
            for (c, &hit) in row.covered.iter_mut().zip(cov) {
                *c += hit as usize;
            }
        }
        CoverageReport { levels: self.levels.clone(), strata: rows }
    }

    pub fn marginal(&self) -> CoverageReport {
        self.tally(vec![Stratum::Marginal], |_| 0)
    }

    /// `bins` equal-width bins over the observed range of the single
    /// feature.
    pub fn by_bins(&self, test: &Dataset, bins: usize) -> Result<CoverageReport> {
        if test.n_features() != 1 {
            return Err(Error::config("binning needs a one-dimensional feature space"));
        }
        if bins < 2 {
            return Err(Error::config("binning needs at least two bins"));
        }
        let xs = test.features();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / bins as f64;
        let edge = |b: usize| if b == bins { hi } else { lo + b as f64 * width };
        let strata = (0..bins).map(|b| Stratum::Bin { lo: edge(b), hi: edge(b + 1) }).collect();
        let index = |x: f64| {
            if width > 0.0 {
                (math::floor((x - lo) / width).max(0.0) as usize).min(bins - 1)
            } else {
                0
            }
        };
        Ok(self.tally(strata, |i| index(xs[i])))
    }

    pub fn by_true_groups(&self, test: &Dataset) -> Result<CoverageReport> {
        let labels = test
            .group_labels()
            .ok_or_else(|| Error::config("test set has no group labels"))?;
        let g = test.group_count().unwrap_or(0);
        let strata = (0..g as u32).map(Stratum::TrueGroup).collect();
        Ok(self.tally(strata, |i| labels[i] as usize))
    }

    pub fn by_clusters(&self, k: usize) -> CoverageReport {
        let k = k.max(self.clusters.iter().map(|c| c + 1).max().unwrap_or(1));
        self.tally((0..k).map(Stratum::Cluster).collect(), |i| self.clusters[i])
    }
}

pub fn coverage_by_bins(predictor: &dyn RegionPredictor, test: &Dataset, bins: usize, levels: &[f64]) -> Result<CoverageReport> {
    evaluate(predictor, test, levels)?.by_bins(test, bins)
}

pub fn coverage_by_groups(predictor: &dyn RegionPredictor, test: &Dataset, levels: &[f64]) -> Result<CoverageReport> {
    if test.group_labels().is_none() {
        return Err(Error::config("test set has no group labels"));
    }
    evaluate(predictor, test, levels)?.by_true_groups(test)
}

/// Deviation summary of one method at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub level: f64,
    pub mean_deviation: f64,
    pub max_deviation: f64,
}

/// Mean and max over strata of `|achieved - nominal|`, per method and level.
pub fn compare(reports: &[(String, CoverageReport)]) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for (name, report) in reports {
        for (j, &level) in report.levels.iter().enumerate() {
            rows.push(ComparisonRow {
                method: name.clone(),
                level,
                mean_deviation: report.mean_deviation(j),
                max_deviation: report.max_deviation(j),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(bool);

    impl RegionPredictor for Fixed {
        fn regions(&self, _x: &[f64], levels: &[f64]) -> Result<Vec<PredictionRegion>> {
            let intervals = if self.0 { vec![(f64::NEG_INFINITY, f64::INFINITY)] } else { vec![] };
            Ok(levels
                .iter()
                .map(|&level| PredictionRegion { intervals: intervals.clone(), level, group: 0, touches_boundary: false })
                .collect())
        }
    }

    fn line(n: usize) -> Dataset {
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let groups: Vec<u32> = (0..n as u32).map(|i| i % 3).collect();
        Dataset::new(xs.clone(), 1, xs, Some(groups)).unwrap()
    }

    #[test]
    fn oracle_and_empty_regions() {
        let test = line(40);
        let levels = [0.5, 0.8, 0.9];
        let full = coverage_by_bins(&Fixed(true), &test, 4, &levels).unwrap();
        let none = coverage_by_bins(&Fixed(false), &test, 4, &levels).unwrap();
        for s in &full.strata {
            assert_eq!(s.count, 10);
            assert!((0..3).all(|j| s.achieved(j) == Some(1.0)));
        }
        for s in &none.strata {
            assert!((0..3).all(|j| s.achieved(j) == Some(0.0)));
        }
        let rows = compare(&[("oracle".into(), full), ("empty".into(), none)]);
        for r in &rows {
            let expected = if r.method == "oracle" { 1.0 - r.level } else { r.level };
            assert!((r.mean_deviation - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_bins_have_no_achieved_value() {
        let xs = vec![0.0, 0.1, 10.0];
        let test = Dataset::new(xs.clone(), 1, xs, None).unwrap();
        let r = coverage_by_bins(&Fixed(true), &test, 5, &[0.9]).unwrap();
        assert_eq!(r.strata[2].count, 0);
        assert_eq!(r.strata[2].achieved(0), None);
        assert_eq!(r.total_count(), 3);
        assert_eq!(r.strata[4].count, 1);
    }

    #[test]
    fn group_reports_need_labels() {
        let xs = vec![0.0, 1.0];
        let test = Dataset::new(xs.clone(), 1, xs, None).unwrap();
        assert!(coverage_by_groups(&Fixed(true), &test, &[0.5]).unwrap_err().is_config());
        let r = coverage_by_groups(&Fixed(true), &line(30), &[0.5]).unwrap();
        assert_eq!(r.strata.len(), 3);
        assert!(r.strata.iter().all(|s| s.count == 10));
    }

    #[test]
    fn rejects_bad_levels() {
        assert!(evaluate(&Fixed(true), &line(10), &[1.0]).unwrap_err().is_config());
    }
}
