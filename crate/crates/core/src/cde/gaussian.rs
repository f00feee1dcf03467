use alloc::format;
use alloc::vec::Vec;

use super::{argmax_first, CdeModel, CdeVariant, Grid, Mixture, DEFAULT_GRID_POINTS};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{self, Standardizer};

/// Linear conditional mean with a Nadaraya-Watson (Gaussian kernel)
/// smoother of squared residuals for the conditional variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLinearParams {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Kernel bandwidth in standardized feature units.
    pub bandwidth: f64,
    pub standardizer: Standardizer,
    /// Standardized training features, row-major.
    pub smoother_points: Vec<f64>,
    pub squared_residuals: Vec<f64>,
    pub variance_floor: f64,
}

impl GaussianLinearParams {
    pub(crate) fn validate(&self) -> Result<()> {
        let d = self.coefficients.len();
        if d == 0 || self.standardizer.dim() != d {
            return Err(Error::config("gaussian_linear: inconsistent feature dimension"));
        }
        if self.smoother_points.len() != self.squared_residuals.len() * d
            || self.squared_residuals.is_empty()
        {
            return Err(Error::config("gaussian_linear: smoother pairs are inconsistent"));
        }
        if !(self.bandwidth > 0.0) || !(self.variance_floor > 0.0) {
            return Err(Error::config("gaussian_linear: bandwidth and variance floor must be positive"));
        }
        Ok(())
    }

    pub fn mean_at(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    fn smoothed_variance(&self, d2: &[f64], bandwidth: f64, weights: &mut Vec<f64>) -> Option<f64> {
        let total = math::gaussian_weights(d2, bandwidth, weights);
        if !(total.is_finite() && total > 0.0) {
            return None;
        }
        let num: f64 = weights
            .iter()
            .zip(&self.squared_residuals)
            .map(|(w, r)| w * r)
            .sum();
        Some((num / total).max(self.variance_floor))
    }

    pub fn variance_at(&self, x: &[f64]) -> Result<f64> {
        let z = self.standardizer.apply(x);
        let mut d2 = Vec::new();
        math::squared_distances(&z, &self.smoother_points, &mut d2);
        self.smoothed_variance(&d2, self.bandwidth, &mut Vec::new())
            .ok_or_else(|| Error::Data(format!("cannot evaluate variance at {x:?}")))
    }

    pub(crate) fn conditional(&self, x: &[f64]) -> Result<Mixture> {
        Mixture::gaussian(self.mean_at(x), math::sqrt(self.variance_at(x)?))
    }
}

/// Fits the linear-Gaussian estimator on `train`, selecting the variance
/// smoother's bandwidth by mean log-density on `validation` (ties go to the
/// smaller bandwidth).
pub fn fit_gaussian_linear(train: &Dataset, validation: &Dataset, bandwidths: &[f64]) -> Result<CdeModel> {
    let d = train.n_features();
    if train.len() < d + 2 {
        return Err(Error::config(format!(
            "gaussian_linear needs at least {} training rows, got {}",
            d + 2,
            train.len()
        )));
    }
    if bandwidths.is_empty() || bandwidths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::config("bandwidth grid must be nonempty and positive"));
    }
    if validation.is_empty() {
        return Err(Error::config("gaussian_linear needs a nonempty validation set"));
    }
    if validation.n_features() != d {
        return Err(Error::Dimension {
            expected: d,
            found: validation.n_features(),
        });
    }

    let mut design = Vec::with_capacity(train.len() * (d + 1));
    for i in 0..train.len() {
        design.push(1.0);
        design.extend_from_slice(train.row(i));
    }
    let beta = math::least_squares(&design, d + 1, train.responses())?;
    let standardizer = Standardizer::fit(train.features(), d);
    let mut params = GaussianLinearParams {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        bandwidth: 1.0,
        smoother_points: standardizer.apply_rows(train.features()),
        squared_residuals: Vec::new(),
        variance_floor: (1e-6 * math::variance(train.responses())).max(1e-300),
        standardizer,
    };
    params.squared_residuals = (0..train.len())
        .map(|i| {
            let r = train.response(i) - params.mean_at(train.row(i));
            r * r
        })
        .collect();

    let mut sorted: Vec<f64> = bandwidths.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut scores = alloc::vec![0.0; sorted.len()];
    let (mut d2, mut weights) = (Vec::new(), Vec::new());
    for i in 0..validation.len() {
        let x = validation.row(i);
        let y = validation.response(i);
        let mean = params.mean_at(x);
        math::squared_distances(&params.standardizer.apply(x), &params.smoother_points, &mut d2);
        for (score, &h) in scores.iter_mut().zip(&sorted) {
            *score += match params.smoothed_variance(&d2, h, &mut weights) {
                Some(v) => math::ln(math::gaussian_density(y, mean, math::sqrt(v))),
                None => f64::NEG_INFINITY,
            };
        }
    }
    let best = argmax_first(&scores)
        .ok_or_else(|| Error::Fit("every bandwidth gives -inf validation log-density".into()))?;
    params.bandwidth = sorted[best];
    let grid = Grid::covering(train.responses(), DEFAULT_GRID_POINTS)?;
    CdeModel::new(CdeVariant::GaussianLinear(params), grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, GeneratorConfig};
    use crate::seed;
    use alloc::vec;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    const BANDWIDTHS: [f64; 5] = [0.05, 0.1, 0.2, 0.5, 1.0];

    fn params(model: &CdeModel) -> &GaussianLinearParams {
        match model.variant() {
            CdeVariant::GaussianLinear(p) => p,
            _ => unreachable!(),
        }
    }

    #[test]
    fn noiseless_line() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        let train = Dataset::new(xs.clone(), 1, xs.iter().map(|x| 2.0 * x).collect(), None).unwrap();
        let model = fit_gaussian_linear(&train, &train, &BANDWIDTHS).unwrap();
        let p = params(&model);
        assert!((p.coefficients[0] - 2.0).abs() < 1e-8);
        assert!(p.intercept.abs() < 1e-8);
    }

    #[test]
    fn homoskedastic_variance_is_recovered() {
        let mut rng = seed::rng(3);
        let make = |n, rng: &mut seed::StageRng| {
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let ys: Vec<f64> = xs
                .iter()
                .map(|x| {
                    let z: f64 = StandardNormal.sample(rng);
                    x + z
                })
                .collect();
            Dataset::new(xs, 1, ys, None).unwrap()
        };
        let train = make(2000, &mut rng);
        let val = make(1000, &mut rng);
        let model = fit_gaussian_linear(&train, &val, &BANDWIDTHS).unwrap();
        let p = params(&model);
        for i in 0..=40 {
            let x = -2.4 + 4.8 * i as f64 / 40.0;
            let v = p.variance_at(&[x]).unwrap();
            assert!((0.8..=1.2).contains(&v), "variance {v} at {x}");
        }
    }

    #[test]
    fn example1_slope_is_near_one() {
        let data = generate(&GeneratorConfig::example1(2000, 17)).unwrap();
        let idx: Vec<usize> = (0..data.len()).collect();
        let (a, b) = idx.split_at(1000);
        let model = fit_gaussian_linear(&data.subset(a), &data.subset(b), &BANDWIDTHS).unwrap();
        let slope = params(&model).coefficients[0];
        assert!((0.9..=1.1).contains(&slope), "slope {slope}");
    }

    #[test]
    fn variance_respects_floor_and_fit_is_deterministic() {
        let data = generate(&GeneratorConfig::example1(600, 5)).unwrap();
        let idx: Vec<usize> = (0..600).collect();
        let (a, b) = idx.split_at(300);
        let m1 = fit_gaussian_linear(&data.subset(a), &data.subset(b), &BANDWIDTHS).unwrap();
        let m2 = fit_gaussian_linear(&data.subset(a), &data.subset(b), &BANDWIDTHS).unwrap();
        assert_eq!(m1, m2);
        let p = params(&m1);
        for x in [-10.0, -4.0, 0.0, 3.3, 50.0] {
            assert!(p.variance_at(&[x]).unwrap() >= p.variance_floor);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let train = Dataset::new(vec![1.0, 2.0], 1, vec![1.0, 2.0], None).unwrap();
        assert!(matches!(fit_gaussian_linear(&train, &train, &[0.1]), Err(Error::Config(_))));
        let train = Dataset::new(vec![1.0, 1.0, 1.0, 1.0], 1, vec![1.0, 2.0, 3.0, 4.0], None).unwrap();
        assert!(matches!(fit_gaussian_linear(&train, &train, &[0.1]), Err(Error::Fit(_))));
        let train = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 1, vec![1.0, 2.0, 3.0, 4.5], None).unwrap();
        assert!(matches!(fit_gaussian_linear(&train, &train, &[]), Err(Error::Config(_))));
        assert!(matches!(fit_gaussian_linear(&train, &train, &[-1.0]), Err(Error::Config(_))));
        let model = fit_gaussian_linear(&train, &train, &[0.5]).unwrap();
        assert!(matches!(model.density(&[1.0, 2.0], 0.0), Err(Error::Dimension { .. })));
    }
}
