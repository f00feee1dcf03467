//! Local split-conformal prediction.
//!
//! Every score is turned into a nonconformity value where larger means more
//! extreme. A candidate `y` at `x` has p-value
//! `(#{calibration scores in x's group at least as extreme} + 1) / (m + 1)`
//! and belongs to the level `1 - eps` region when that p-value exceeds `eps`.
//! Equivalently, `y` is included when its nonconformity is at most the
//! `c`-th largest calibration value, with `c` the smallest count whose
//! p-value exceeds `eps`.

use alloc::format;
use alloc::vec::Vec;

use crate::cde::{CdeModel, Grid};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hpd::{HpdCurve, HpdEvaluator};
use crate::math;
use crate::partition::{PartitionMethod, PartitionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFunction {
    /// HPD value; larger is more extreme.
    Hpd,
    /// Estimated density at `y`; smaller is more extreme.
    CdeValue,
    /// `|y - mean(x)|`; larger is more extreme.
    AbsResidual,
}

impl ScoreFunction {
    pub const ALL: [ScoreFunction; 3] = [ScoreFunction::Hpd, ScoreFunction::CdeValue, ScoreFunction::AbsResidual];

    pub fn name(self) -> &'static str {
        match self {
            ScoreFunction::Hpd => "hpd",
            ScoreFunction::CdeValue => "cde_value",
            ScoreFunction::AbsResidual => "abs_residual",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ScoreFunction::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::config(format!("unknown score `{s}` (expected hpd, cde_value or abs_residual)")))
    }

    pub fn larger_is_extreme(self) -> bool {
        !matches!(self, ScoreFunction::CdeValue)
    }

    /// The raw score of `y` given the conditional at `x`.
    pub fn score(self, curve: &HpdCurve, y: f64) -> f64 {
        match self {
            ScoreFunction::Hpd => curve.hpd(y),
            ScoreFunction::CdeValue => curve.density(y),
            ScoreFunction::AbsResidual => (y - curve.center()).abs(),
        }
    }

    /// The score oriented so that larger is more extreme.
    pub fn nonconformity(self, curve: &HpdCurve, y: f64) -> f64 {
        let s = self.score(curve, y);
        if self.larger_is_extreme() {
            s
        } else {
            -s
        }
    }
}

/// Which nonconformity values a region keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    All,
    None,
    AtMost(f64),
}

impl Threshold {
    pub fn admits(self, nonconformity: f64) -> bool {
        match self {
            Threshold::All => true,
            Threshold::None => false,
            Threshold::AtMost(t) => nonconformity <= t,
        }
    }
}

/// One group's calibration nonconformity values, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedScores {
    sorted: Vec<f64>,
}

impl CalibratedScores {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Data("NaN calibration score".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(CalibratedScores { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Number of calibration values at least `s`.
    pub fn count_at_least(&self, s: f64) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&v| v < s)
    }

    pub fn p_value(&self, nonconformity: f64) -> f64 {
        (self.count_at_least(nonconformity) + 1) as f64 / (self.sorted.len() + 1) as f64
    }

    pub fn threshold(&self, epsilon: f64) -> Threshold {
        let m = self.sorted.len();
        let denom = (m + 1) as f64;
        let passes = |c: usize| (c + 1) as f64 / denom > epsilon;
        // Start from the algebraic answer and settle rounding by direct checks.
        let mut c = (math::floor(epsilon * denom).max(0.0) as usize).min(m + 1);
        while c > 0 && passes(c - 1) {
            c -= 1;
        }
        while c <= m && !passes(c) {
            c += 1;
        }
        if c > m {
            Threshold::None
        } else if c == 0 {
            Threshold::All
        } else {
            Threshold::AtMost(self.sorted[m - c])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    /// Smallest miscoverage level the predictor must support.
    pub min_epsilon: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions { min_epsilon: 0.05 }
    }
}

impl CalibrationOptions {
    /// Smallest group size for which `min_epsilon` gives a finite region.
    pub fn required_group_size(&self) -> usize {
        (math::ceil(1.0 / self.min_epsilon - 1e-9) as usize).saturating_sub(1)
    }
}

/// The conditional at `x` with its group, ready for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub curve: HpdCurve,
    pub group: usize,
}

/// Union of disjoint closed intervals, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRegion {
    pub intervals: Vec<(f64, f64)>,
    /// Nominal coverage `1 - eps`.
    pub level: f64,
    pub group: usize,
    /// The region reaches the end of the response grid, so it may be
    /// truncated.
    pub touches_boundary: bool,
}

impl PredictionRegion {
    pub fn contains(&self, y: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= y && y <= hi)
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }
}

/// `{y in [grid.min, grid.max] : keep(y)}` as intervals. Runs of kept grid
/// nodes are merged, and each run boundary is refined by bisection between
/// the kept and the dropped neighbour, ending at the last kept point.
pub fn grid_region(grid: &Grid, keep: impl Fn(f64) -> bool) -> (Vec<(f64, f64)>, bool) {
    let n = grid.len();
    let inside: Vec<bool> = grid.nodes().map(&keep).collect();
    let edge = |kept: f64, dropped: f64| {
        let (mut a, mut b) = (kept, dropped);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if mid == a || mid == b {
                break;
            }
            if keep(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        a
    };
    let mut intervals = Vec::new();
    let mut i = 0;
    while i < n {
        if !inside[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && inside[i + 1] {
            i += 1;
        }
        let lo = if start == 0 { grid.node(0) } else { edge(grid.node(start), grid.node(start - 1)) };
        let hi = if i == n - 1 { grid.node(n - 1) } else { edge(grid.node(i), grid.node(i + 1)) };
        intervals.push((lo, hi));
        i += 1;
    }
    let touches = inside[0] || inside[n - 1];
    (intervals, touches)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalConformalPredictor {
    pub cde: CdeModel,
    pub hpd: HpdEvaluator,
    pub partition: PartitionModel,
    pub score: ScoreFunction,
    pub groups: Vec<CalibratedScores>,
    pub grid: Grid,
}

impl LocalConformalPredictor {
    /// Conditional density, HPD curve and group of `x`.
    pub fn prepare(&self, x: &[f64]) -> Result<Prepared> {
        prepare(&self.cde, &self.hpd, &self.partition, x)
    }

    pub fn assign(&self, x: &[f64]) -> Result<usize> {
        Ok(self.prepare(x)?.group)
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn p_value(&self, x: &[f64], y: f64) -> Result<f64> {
        let p = self.prepare(x)?;
        Ok(self.p_value_prepared(&p, y))
    }

    pub fn p_value_prepared(&self, p: &Prepared, y: f64) -> f64 {
        self.groups[p.group].p_value(self.score.nonconformity(&p.curve, y))
    }

    pub fn region(&self, x: &[f64], epsilon: f64) -> Result<PredictionRegion> {
        check_epsilon(epsilon)?;
        let p = self.prepare(x)?;
        Ok(self.region_prepared(&p, epsilon))
    }

    pub fn region_prepared(&self, p: &Prepared, epsilon: f64) -> PredictionRegion {
        let threshold = self.groups[p.group].threshold(epsilon);
        let (intervals, touches_boundary) = match threshold {
            Threshold::None => (Vec::new(), false),
            Threshold::All => (alloc::vec![(self.grid.min(), self.grid.max())], true),
            Threshold::AtMost(_) => {
                grid_region(&self.grid, |y| threshold.admits(self.score.nonconformity(&p.curve, y)))
            }
        };
        PredictionRegion { intervals, level: 1.0 - epsilon, group: p.group, touches_boundary }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("miscoverage level {epsilon} outside (0, 1)")))
    }
}

/// Shared by calibration and prediction so that both see the same curve.
pub fn prepare(cde: &CdeModel, hpd: &HpdEvaluator, partition: &PartitionModel, x: &[f64]) -> Result<Prepared> {
    let curve = hpd.curve_at(cde, x)?;
    let group = partition.assign(x, Some(&curve))?;
    Ok(Prepared { curve, group })
}

/// Scores the calibration points, routes them to groups, and sorts each
/// group. Every group needs at least
/// [`CalibrationOptions::required_group_size`] points.
pub fn calibrate(
    cde: CdeModel,
    hpd: HpdEvaluator,
    partition: PartitionModel,
    score: ScoreFunction,
    calibration: &Dataset,
    indices: &[usize],
    options: CalibrationOptions,
) -> Result<LocalConformalPredictor> {
    if !(options.min_epsilon > 0.0 && options.min_epsilon < 1.0) {
        return Err(Error::config(format!("min_epsilon {} outside (0, 1)", options.min_epsilon)));
    }
    let mut buckets: Vec<Vec<f64>> = alloc::vec![Vec::new(); partition.k()];
    for &i in indices {
        let p = prepare(&cde, &hpd, &partition, calibration.row(i)).map_err(|e| Error::at_index(i, e))?;
        buckets[p.group].push(score.nonconformity(&p.curve, calibration.response(i)));
    }
    let required = options.required_group_size().max(1);
    if let Some((group, b)) = buckets.iter().enumerate().find(|(_, b)| b.len() < required) {
        return Err(Error::Calibration { group, size: b.len(), required });
    }
    let groups = buckets.into_iter().map(CalibratedScores::new).collect::<Result<Vec<_>>>()?;
    let grid = *cde.grid();
    if partition.method() == PartitionMethod::Global && groups.len() != 1 {
        return Err(Error::config("global partition must have one group"));
    }
    Ok(LocalConformalPredictor { cde, hpd, partition, score, groups, grid })
}
