//! Highest-predictive-density values.
//!
//! `HPD(y; x)` is the probability mass, under the estimated conditional
//! density, of the set where that density is at least `f(y | x)`. It is 0 at
//! the mode and approaches 1 in the tails, so larger values are more extreme.

use alloc::vec::Vec;

use crate::cde::{CdeModel, Grid, Mixture};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math;

/// Integration sub-steps per component standard deviation.
pub const DEFAULT_RESOLUTION: usize = 20;

/// Cap on the number of sub-steps a single grid interval is split into.
const MAX_SPLIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpdMethod {
    /// Closed form for single-Gaussian conditionals.
    AnalyticGaussian,
    /// Integration over the response grid.
    Grid,
}

impl HpdMethod {
    pub fn name(self) -> &'static str {
        match self {
            HpdMethod::AnalyticGaussian => "analytic_gaussian",
            HpdMethod::Grid => "grid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpdEvaluator {
    pub method: HpdMethod,
    pub grid: Grid,
    /// Sub-steps per component sd near each mixture component.
    pub resolution: usize,
}

impl HpdEvaluator {
    /// Analytic for the Gaussian linear model, grid integration on the
    /// model's grid otherwise.
    pub fn for_model(model: &CdeModel) -> Self {
        let method = match model.tag() {
            "gaussian_linear" => HpdMethod::AnalyticGaussian,
            _ => HpdMethod::Grid,
        };
        HpdEvaluator {
            method,
            grid: *model.grid(),
            resolution: DEFAULT_RESOLUTION,
        }
    }

    pub fn grid(grid: Grid) -> Self {
        HpdEvaluator {
            method: HpdMethod::Grid,
            grid,
            resolution: DEFAULT_RESOLUTION,
        }
    }

    /// The HPD curve `y -> HPD(y; x)` for the conditional `mixture` at `x`.
    /// `x` is only used to label errors.
    pub fn curve(&self, x: &[f64], mixture: Mixture) -> Result<HpdCurve> {
        match self.method {
            HpdMethod::AnalyticGaussian => {
                if !mixture.is_gaussian() {
                    return Err(Error::config("analytic HPD needs a single-Gaussian conditional"));
                }
                let c = mixture.components()[0];
                Ok(HpdCurve::Analytic { mean: c.mean, sd: c.sd })
            }
            HpdMethod::Grid => {
                let table = LevelTable::new(mixture, &self.grid, self.resolution);
                let mass = table.total_mass();
                if !(0.98..=1.02).contains(&mass) {
                    return Err(Error::Integration { x: x.to_vec(), mass });
                }
                Ok(HpdCurve::Grid(table))
            }
        }
    }

    pub fn curve_at(&self, model: &CdeModel, x: &[f64]) -> Result<HpdCurve> {
        self.curve(x, model.conditional(x)?)
    }

    pub fn hpd(&self, model: &CdeModel, x: &[f64], y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::Data(alloc::format!("non-finite response {y}")));
        }
        Ok(self.curve_at(model, x)?.hpd(y))
    }

    /// HPD values of `(x_i, y_i)` for each index, in the given order.
    pub fn hpd_batch(&self, model: &CdeModel, data: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
        indices
            .iter()
            .map(|&i| {
                self.hpd(model, data.row(i), data.response(i))
                    .map_err(|e| Error::at_index(i, e))
            })
            .collect()
    }
}

/// HPD as a function of `y` for one fixed `x`.
#[derive(Debug, Clone, PartialEq)]
pub enum HpdCurve {
    Analytic { mean: f64, sd: f64 },
    Grid(LevelTable),
}

impl HpdCurve {
    pub fn hpd(&self, y: f64) -> f64 {
        match self {
            HpdCurve::Analytic { mean, sd } => {
                let z = (y - mean).abs() / sd;
                (1.0 - 2.0 * math::normal_cdf(-z)).clamp(0.0, 1.0)
            }
            HpdCurve::Grid(t) => t.mass_above(t.mixture.density(y)).clamp(0.0, 1.0),
        }
    }

    pub fn density(&self, y: f64) -> f64 {
        match self {
            HpdCurve::Analytic { mean, sd } => math::gaussian_density(y, *mean, *sd),
            HpdCurve::Grid(t) => t.mixture.density(y),
        }
    }

    /// Mean of the conditional.
    pub fn center(&self) -> f64 {
        match self {
            HpdCurve::Analytic { mean, .. } => *mean,
            HpdCurve::Grid(t) => t.mixture.mean(),
        }
    }
}

/// Superlevel-set masses `mass_above(c) = ∫ f 1{f >= c}` of a conditional
/// density by trapezoid integration over a grid.
///
/// The grid is split into runs on which the node values are monotone. For a
/// level `c`, each run contributes the nodes on the high side of its
/// crossing plus a partial trapezoid from the crossing point, which is
/// located on the exact density. Grid intervals within 8 sd of a component
/// are subdivided so that their steps are at most `sd / resolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTable {
    mixture: Mixture,
    ys: Vec<f64>,
    fs: Vec<f64>,
    /// `cum[i]`: trapezoid mass from the first node to node `i`.
    cum: Vec<f64>,
    runs: Vec<Run>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Run {
    start: usize,
    end: usize,
    rising: bool,
}

impl LevelTable {
    pub fn new(mixture: Mixture, grid: &Grid, resolution: usize) -> Self {
        let split = |y0: f64, y1: f64| -> usize {
            let mut k = 1;
            if resolution > 0 {
                for c in mixture.components() {
                    let reach = 8.0 * c.sd;
                    if y1 >= c.mean - reach && y0 <= c.mean + reach {
                        let need = math::ceil((y1 - y0) * resolution as f64 / c.sd);
                        k = k.max(need.min(MAX_SPLIT as f64) as usize);
                    }
                }
            }
            k
        };

        let mut ys = Vec::with_capacity(grid.len());
        ys.push(grid.node(0));
        for i in 1..grid.len() {
            let (y0, y1) = (grid.node(i - 1), grid.node(i));
            let k = split(y0, y1);
            let step = (y1 - y0) / k as f64;
            ys.extend((1..k).map(|j| y0 + j as f64 * step));
            ys.push(y1);
        }
        let mut fs: Vec<f64> = ys.iter().map(|&y| mixture.density(y)).collect();

        // Local extrema between nodes would otherwise be cut off.
        let mut extra = Vec::new();
        for i in 1..ys.len() - 1 {
            let max = fs[i] >= fs[i - 1] && fs[i] >= fs[i + 1];
            let min = fs[i] <= fs[i - 1] && fs[i] <= fs[i + 1];
            if (max || min) && !(fs[i] == fs[i - 1] && fs[i] == fs[i + 1]) {
                let sign = if max { 1.0 } else { -1.0 };
                let y = golden_max(|y| sign * mixture.density(y), ys[i - 1], ys[i + 1]);
                if y != ys[i] {
                    extra.push(y);
                }
            }
        }
        if !extra.is_empty() {
            ys.extend(extra);
            ys.sort_by(f64::total_cmp);
            ys.dedup();
            fs = ys.iter().map(|&y| mixture.density(y)).collect();
        }

        let mut cum = Vec::with_capacity(ys.len());
        cum.push(0.0);
        for i in 1..ys.len() {
            cum.push(cum[i - 1] + 0.5 * (ys[i] - ys[i - 1]) * (fs[i] + fs[i - 1]));
        }

        let mut runs = Vec::new();
        let mut start = 0;
        let mut dir = 0i8;
        for i in 1..fs.len() {
            let step = match fs[i].partial_cmp(&fs[i - 1]) {
                Some(core::cmp::Ordering::Greater) => 1,
                Some(core::cmp::Ordering::Less) => -1,
                _ => 0,
            };
            if step != 0 && dir != 0 && step != dir {
                runs.push(Run { start, end: i - 1, rising: dir > 0 });
                start = i - 1;
            }
            if step != 0 {
                dir = step;
            }
        }
        runs.push(Run { start, end: fs.len() - 1, rising: dir >= 0 });

        LevelTable { mixture, ys, fs, cum, runs }
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    /// Trapezoid mass of the density over the whole grid.
    pub fn total_mass(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn mass_above(&self, c: f64) -> f64 {
        let mut mass = 0.0;
        for run in &self.runs {
            let (s, e) = (run.start, run.end);
            let seg = &self.fs[s..=e];
            if run.rising {
                let k = s + seg.partition_point(|&v| v < c);
                if k > e {
                    continue;
                }
                mass += self.cum[e] - self.cum[k];
                if k > s {
                    let y = self.crossing(k - 1, k, c);
                    mass += 0.5 * (self.ys[k] - y) * (c + self.fs[k]);
                }
            } else {
                let count = seg.partition_point(|&v| v >= c);
                if count == 0 {
                    continue;
                }
                let k = s + count - 1;
                mass += self.cum[k] - self.cum[s];
                if k < e {
                    let y = self.crossing(k + 1, k, c);
                    mass += 0.5 * (y - self.ys[k]) * (self.fs[k] + c);
                }
            }
        }
        mass
    }

    /// Point between nodes `low` (density below `c`) and `high` (at least
    /// `c`) where the density equals `c`, by the Illinois method.
    fn crossing(&self, low: usize, high: usize, c: f64) -> f64 {
        let (mut a, mut fa) = (self.ys[low], self.fs[low] - c);
        let (mut b, mut fb) = (self.ys[high], self.fs[high] - c);
        if fb == 0.0 {
            return b;
        }
        let tol = 1e-12 * (b - a).abs().max(1e-300);
        let mut side = 0i8;
        for _ in 0..50 {
            let mut y = (a * fb - b * fa) / (fb - fa);
            // Subnormal densities can push the secant step off the bracket.
            if !(y > a.min(b) && y < a.max(b)) {
                y = 0.5 * (a + b);
            }
            let fy = self.mixture.density(y) - c;
            if fy == 0.0 {
                return y;
            }
            if (fy < 0.0) == (fa < 0.0) {
                a = y;
                fa = fy;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = y;
                fb = fy;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
            if (b - a).abs() <= tol {
                break;
            }
        }
        b
    }
}

/// Maximizer of a unimodal `f` on `[a, b]` by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const R: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - R * (b - a);
    let mut x2 = a + R * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + R * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - R * (b - a);
            f1 = f(x1);
        }
        if b - a <= 1e-13 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cde::Component;
    use alloc::vec;

    fn bimodal() -> Mixture {
        Mixture::new(vec![
            Component { weight: 0.5, mean: -2.0, sd: 1.0 },
            Component { weight: 0.5, mean: 2.0, sd: 1.0 },
        ])
        .unwrap()
    }

    fn wide_grid() -> Grid {
        Grid::new(-12.0, 12.0, 1001).unwrap()
    }

    /// Brute-force superlevel mass on a very fine midpoint rule.
    fn oracle(m: &Mixture, y: f64) -> f64 {
        let c = m.density(y);
        let (a, b, n) = (-14.0, 14.0, 400_000);
        let h = (b - a) / n as f64;
        (0..n)
            .map(|i| m.density(a + (i as f64 + 0.5) * h))
            .filter(|&f| f >= c)
            .sum::<f64>()
            * h
    }

    #[test]
    fn analytic_values() {
        let curve = HpdEvaluator { method: HpdMethod::AnalyticGaussian, grid: wide_grid(), resolution: DEFAULT_RESOLUTION }
            .curve(&[0.0], Mixture::gaussian(1.0, 2.0).unwrap())
            .unwrap();
        assert_eq!(curve.hpd(1.0), 0.0);
        assert!((curve.hpd(1.0 + 1.96 * 2.0) - 0.9500).abs() < 5e-4);
        assert!((curve.hpd(1.0 - 1.96 * 2.0) - 0.9500).abs() < 5e-4);
    }

    #[test]
    fn grid_matches_fine_oracle_on_bimodal() {
        let m = bimodal();
        let curve = HpdEvaluator::grid(wide_grid()).curve(&[0.0], m.clone()).unwrap();
        for y in [-4.0, -2.0, -1.3, 0.0, 0.7, 2.0, 3.5] {
            assert!((curve.hpd(y) - oracle(&m, y)).abs() < 1e-3, "y = {y} {} {}", curve.hpd(y), oracle(&m, y));
        }
        assert!(curve.hpd(0.0) < curve.hpd(10.0));
        assert!(curve.hpd(10.0) >= 0.999);
    }

    #[test]
    fn grid_matches_analytic_on_gaussians() {
        let grid = wide_grid();
        for (mu, sd) in [(0.0, 1.0), (1.3, 0.4), (-3.0, 2.5), (0.01, 0.2)] {
            let m = Mixture::gaussian(mu, sd).unwrap();
            let g = HpdEvaluator::grid(grid).curve(&[0.0], m).unwrap();
            let a = HpdCurve::Analytic { mean: mu, sd };
            for k in -40..=40 {
                let y = mu + 0.1 * k as f64 * sd;
                assert!((g.hpd(y) - a.hpd(y)).abs() < 1e-3, "mu {mu} sd {sd} y {y}");
            }
        }
    }

    #[test]
    fn mass_outside_grid_is_an_error() {
        let grid = Grid::new(-1.0, 1.0, 101).unwrap();
        let err = HpdEvaluator::grid(grid).curve(&[0.5], Mixture::gaussian(0.0, 1.0).unwrap());
        assert!(matches!(err, Err(Error::Integration { ref x, .. }) if x == &vec![0.5]));
    }

    #[test]
    fn analytic_rejects_mixtures() {
        let ev = HpdEvaluator { method: HpdMethod::AnalyticGaussian, grid: wide_grid(), resolution: DEFAULT_RESOLUTION };
        assert!(ev.curve(&[0.0], bimodal()).is_err());
    }

    #[test]
    fn narrow_spike_between_nodes_is_integrated() {
        let grid = Grid::new(-5.0, 5.0, 101).unwrap();
        let m = Mixture::gaussian(0.033, 0.08).unwrap();
        let curve = HpdEvaluator::grid(grid).curve(&[0.0], m).unwrap();
        let exact = HpdCurve::Analytic { mean: 0.033, sd: 0.08 };
        for y in [0.0, 0.05, 0.1, 0.2, 0.3] {
            assert!((curve.hpd(y) - exact.hpd(y)).abs() < 1e-3, "y = {y}");
        }
    }

    #[test]
    fn subnormal_tail_stays_finite() {
        let grid = Grid::new(-20.73, 20.0, 876).unwrap();
        let m = Mixture::new(vec![
            Component { weight: 0.474, mean: -0.968, sd: 0.503 },
            Component { weight: 0.526, mean: 0.991, sd: 0.481 },
        ])
        .unwrap();
        let curve = HpdEvaluator::grid(grid).curve(&[0.0], m).unwrap();
        for y in grid.nodes() {
            let v = curve.hpd(y);
            assert!((0.0..=1.0).contains(&v), "y = {y}: {v}");
        }
        assert!(curve.hpd(-20.312) > 0.999);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mixture() -> impl Strategy<Value = Mixture> {
            proptest::collection::vec((0.1f64..1.0, -4.0f64..4.0, 0.15f64..2.0), 1..4).prop_map(|cs| {
                let total: f64 = cs.iter().map(|c| c.0).sum();
                Mixture::new(
                    cs.into_iter()
                        .map(|(w, mean, sd)| Component { weight: w / total, mean, sd })
                        .collect(),
                )
                .unwrap()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn range_and_density_monotonicity(m in mixture(), y1 in -8.0f64..8.0, y2 in -8.0f64..8.0) {
                let curve = HpdEvaluator::grid(Grid::new(-15.0, 15.0, 801).unwrap()).curve(&[0.0], m).unwrap();
                let (h1, h2) = (curve.hpd(y1), curve.hpd(y2));
                prop_assert!((0.0..=1.0).contains(&h1) && (0.0..=1.0).contains(&h2));
                if curve.density(y1) >= curve.density(y2) {
                    prop_assert!(h1 <= h2 + 1e-12);
                }
            }

            #[test]
            fn grid_agrees_with_closed_form(mu in -3.0f64..3.0, sd in 0.05f64..3.0, z in -4.0f64..4.0) {
                let grid = Grid::new(-15.0, 15.0, 1001).unwrap();
                let m = Mixture::gaussian(mu, sd).unwrap();
                let g = HpdEvaluator::grid(grid).curve(&[0.0], m).unwrap();
                let y = mu + z * sd;
                let a = HpdCurve::Analytic { mean: mu, sd }.hpd(y);
                prop_assert!((g.hpd(y) - a).abs() < 1e-3, "{} vs {}", g.hpd(y), a);
            }
        }
    }
}
