//! Conditional density estimators behind one evaluation contract: for a
//! feature vector `x`, [`CdeModel::conditional`] returns the predicted
//! response density as a Gaussian mixture.

mod em;
mod gaussian;
mod knn;

use alloc::format;
use alloc::vec::Vec;

pub use em::{fit_gaussian_mixture, EmSettings};
pub use gaussian::{fit_gaussian_linear, GaussianLinearParams};
pub use knn::{fit_knn_mixture, fit_knn_mixture_with, KnnMixtureParams};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math;

/// Default number of nodes on the response evaluation grid.
pub const DEFAULT_GRID_POINTS: usize = 1001;

/// Uniform grid on the response axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    min: f64,
    max: f64,
    points: usize,
}

impl Grid {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) || points < 2 {
            return Err(Error::config(format!(
                "invalid grid [{min}, {max}] with {points} points"
            )));
        }
        Ok(Grid { min, max, points })
    }

    /// `[min - 3 sd, max + 3 sd]` of the given responses.
    pub fn covering(responses: &[f64], points: usize) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::config("cannot build a grid from no responses"));
        }
        let lo = responses.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = responses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut pad = 3.0 * math::sqrt(math::variance(responses));
        if !(pad > 0.0) {
            pad = 1.0;
        }
        Grid::new(lo - pad, hi + pad, points)
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |i| self.node(i))
    }

    /// Same range with `(points - 1) * factor + 1` nodes.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid {
            points: (self.points - 1) * factor.max(1) + 1,
            ..*self
        }
    }

    /// Trapezoid rule over the grid for values given at every node.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.points);
        let inner: f64 = values[1..values.len() - 1].iter().sum();
        self.step() * (inner + 0.5 * (values[0] + values[values.len() - 1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// A univariate Gaussian mixture; the predicted density of `Y | X = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    components: Vec<Component>,
}

impl Mixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Fit("mixture needs at least one component".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        let valid = components.iter().all(|c| {
            c.weight >= 0.0 && c.weight.is_finite() && c.mean.is_finite() && c.sd > 0.0 && c.sd.is_finite()
        });
        if !valid || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Fit(format!("invalid mixture components {components:?}")));
        }
        Ok(Mixture { components })
    }

    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        Mixture::new(alloc::vec![Component { weight: 1.0, mean, sd }])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn is_gaussian(&self) -> bool {
        self.components.len() == 1
    }

    pub fn density(&self, y: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * math::gaussian_density(y, c.mean, c.sd))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.sd * c.sd + (c.mean - m) * (c.mean - m)))
            .sum()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * math::normal_cdf((y - c.mean) / c.sd))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CdeVariant {
    GaussianLinear(GaussianLinearParams),
    KnnMixture(KnnMixtureParams),
}

/// A fitted conditional density estimator plus its response evaluation
/// grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CdeModel {
    variant: CdeVariant,
    grid: Grid,
}

impl CdeModel {
    pub fn new(variant: CdeVariant, grid: Grid) -> Result<Self> {
        match &variant {
            CdeVariant::GaussianLinear(p) => p.validate()?,
            CdeVariant::KnnMixture(p) => p.validate()?,
        }
        Ok(CdeModel { variant, grid })
    }

    pub fn variant(&self) -> &CdeVariant {
        &self.variant
    }

    pub fn tag(&self) -> &'static str {
        match self.variant {
            CdeVariant::GaussianLinear(_) => "gaussian_linear",
            CdeVariant::KnnMixture(_) => "knn_mixture",
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn with_grid(mut self, grid: Grid) -> Self {
        self.grid = grid;
        self
    }

    pub fn n_features(&self) -> usize {
        match &self.variant {
            CdeVariant::GaussianLinear(p) => p.coefficients.len(),
            CdeVariant::KnnMixture(p) => p.standardizer.dim(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Predicted density of `Y | X = x`.
    pub fn conditional(&self, x: &[f64]) -> Result<Mixture> {
        self.check_dim(x)?;
        match &self.variant {
            CdeVariant::GaussianLinear(p) => p.conditional(x),
            CdeVariant::KnnMixture(p) => p.conditional(x),
        }
    }

    /// `f(y | x)`.
    pub fn density(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.conditional(x)?.density(y))
    }

    /// Mean log-density over the rows of `data`.
    pub fn mean_log_density(&self, data: &Dataset) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..data.len() {
            total += math::ln(self.density(data.row(i), data.response(i))?);
        }
        Ok(total / data.len() as f64)
    }
}

/// Picks the candidate with the largest score; earlier candidates win ties.
/// NaN scores count as negative infinity.
pub(crate) fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
        if s == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}
