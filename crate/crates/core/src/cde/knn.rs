use alloc::format;
use alloc::vec::Vec;

use super::{argmax_first, fit_gaussian_mixture, CdeModel, CdeVariant, EmSettings, Grid, Mixture, DEFAULT_GRID_POINTS};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{self, Standardizer};

/// Local mixture estimator: for a query, EM fits an `components`-Gaussian
/// mixture to the responses of its `neighbors` nearest training rows
/// (Euclidean distance on standardized features).
#[derive(Debug, Clone, PartialEq)]
pub struct KnnMixtureParams {
    pub neighbors: usize,
    pub components: usize,
    pub em: EmSettings,
    pub standardizer: Standardizer,
    /// Standardized training features, row-major.
    pub points: Vec<f64>,
    pub responses: Vec<f64>,
}

impl KnnMixtureParams {
    pub(crate) fn validate(&self) -> Result<()> {
        let d = self.standardizer.dim();
        if self.components == 0 {
            return Err(Error::config("knn_mixture needs at least one component"));
        }
        if self.neighbors < 2 * self.components {
            return Err(Error::config(format!(
                "neighbor count {} is below twice the component count {}",
                self.neighbors, self.components
            )));
        }
        if d == 0 || self.points.len() != self.responses.len() * d {
            return Err(Error::config("knn_mixture: inconsistent stored training data"));
        }
        if self.responses.len() < self.neighbors {
            return Err(Error::config(format!(
                "knn_mixture: {} training rows for {} neighbors",
                self.responses.len(),
                self.neighbors
            )));
        }
        Ok(())
    }

    /// Training indices of the `k` nearest rows, ordered by (distance, index).
    fn nearest(&self, x: &[f64], k: usize) -> Result<Vec<usize>> {
        let z = self.standardizer.apply(x);
        let mut d2 = Vec::new();
        math::squared_distances(&z, &self.points, &mut d2);
        if d2.iter().any(|v| v.is_nan()) {
            return Err(Error::Data(format!("cannot compute neighbors of {x:?}")));
        }
        let mut order: Vec<(f64, usize)> = d2.into_iter().zip(0..).collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
            order.truncate(k);
        }
        order.sort_unstable_by(cmp);
        Ok(order.into_iter().map(|(_, i)| i).collect())
    }

    pub(crate) fn conditional(&self, x: &[f64]) -> Result<Mixture> {
        let idx = self.nearest(x, self.neighbors)?;
        let ys: Vec<f64> = idx.iter().map(|&i| self.responses[i]).collect();
        Ok(fit_gaussian_mixture(&ys, self.components, &self.em))
    }
}

/// [`fit_knn_mixture_with`] with default EM settings and a variance floor
/// of `1e-6 * var(y_train)`.
pub fn fit_knn_mixture(train: &Dataset, validation: &Dataset, k_grid: &[usize], components: usize) -> Result<CdeModel> {
    let em = EmSettings {
        variance_floor: (1e-6 * math::variance(train.responses())).max(1e-300),
        ..EmSettings::default()
    };
    fit_knn_mixture_with(train, validation, k_grid, components, em)
}

/// Fits the local mixture estimator, choosing the neighbor count from
/// `k_grid` by mean validation log-density (ties go to the smaller count).
pub fn fit_knn_mixture_with(
    train: &Dataset,
    validation: &Dataset,
    k_grid: &[usize],
    components: usize,
    em: EmSettings,
) -> Result<CdeModel> {
    if components == 0 {
        return Err(Error::config("knn_mixture needs at least one component"));
    }
    if k_grid.is_empty() {
        return Err(Error::config("neighbor grid is empty"));
    }
    let mut ks = k_grid.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks[0] < 2 * components {
        return Err(Error::config(format!(
            "neighbor count {} is below twice the component count {components}",
            ks[0]
        )));
    }
    let k_max = *ks.last().unwrap();
    if train.len() < k_max {
        return Err(Error::config(format!(
            "{} training rows cannot supply {k_max} neighbors",
            train.len()
        )));
    }
    if validation.is_empty() {
        return Err(Error::config("knn_mixture needs a nonempty validation set"));
    }
    let d = train.n_features();
    if validation.n_features() != d {
        return Err(Error::Dimension {
            expected: d,
            found: validation.n_features(),
        });
    }
    let standardizer = Standardizer::fit(train.features(), d);
    let mut params = KnnMixtureParams {
        neighbors: k_max,
        components,
        em,
        points: standardizer.apply_rows(train.features()),
        responses: train.responses().to_vec(),
        standardizer,
    };

    let mut scores = alloc::vec![0.0; ks.len()];
    for i in 0..validation.len() {
        let idx = params.nearest(validation.row(i), k_max)?;
        let ys: Vec<f64> = idx.iter().map(|&j| params.responses[j]).collect();
        let y = validation.response(i);
        for (score, &k) in scores.iter_mut().zip(&ks) {
            let mix = fit_gaussian_mixture(&ys[..k], components, &params.em);
            *score += math::ln(mix.density(y));
        }
    }
    let best = argmax_first(&scores)
        .ok_or_else(|| Error::Fit("every neighbor count gives -inf validation log-density".into()))?;
    params.neighbors = ks[best];
    let grid = Grid::covering(train.responses(), DEFAULT_GRID_POINTS)?;
    CdeModel::new(CdeVariant::KnnMixture(params), grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{surrogate, MixtureSpread};
    use crate::seed;
    use alloc::vec;

    /// Rows from a single surrogate cell, features at the noiseless cell
    /// centre plus a small jitter so neighbors are well defined.
    fn cell_data(cell: u32, n: usize, seed: u64) -> Dataset {
        let mut rng = seed::rng(seed);
        let lambda = surrogate::LAMBDAS[surrogate::lambda_index(cell)];
        let theta = surrogate::THETAS[surrogate::theta_index(cell)];
        let mut features = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let jitter = (i % 97) as f64 * 1e-3;
            features.extend_from_slice(&[lambda + jitter, theta - jitter]);
            ys.push(surrogate::sample_response(cell, MixtureSpread::Variance, &mut rng));
        }
        Dataset::new(features, 2, ys, None).unwrap()
    }

    fn params(model: &CdeModel) -> &KnnMixtureParams {
        match model.variant() {
            CdeVariant::KnnMixture(p) => p,
            _ => unreachable!(),
        }
    }

    #[test]
    fn recovers_symmetric_bimodal_cell() {
        let train = cell_data(surrogate::cell(1, 0), 2000, 1);
        let val = cell_data(surrogate::cell(1, 0), 200, 2);
        let model = fit_knn_mixture(&train, &val, &[500], 2).unwrap();
        let mix = model.conditional(&[0.4, core::f64::consts::FRAC_PI_4]).unwrap();
        let c = mix.components();
        assert!((c[0].mean + 2.0).abs() < 0.3, "{c:?}");
        assert!((c[1].mean - 2.0).abs() < 0.3, "{c:?}");
        let total: f64 = c.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_components_underfit_the_four_peak_cell() {
        let cell = surrogate::cell(1, 2);
        let train = cell_data(cell, 1500, 3);
        let val = cell_data(cell, 150, 4);
        let test = cell_data(cell, 150, 5);
        let two = fit_knn_mixture(&train, &val, &[600], 2).unwrap();
        let four = fit_knn_mixture(&train, &val, &[600], 4).unwrap();
        let ll2 = two.mean_log_density(&test).unwrap();
        let ll4 = four.mean_log_density(&test).unwrap();
        assert!(ll2 < ll4, "M=2 {ll2} vs M=4 {ll4}");
    }

    #[test]
    fn constant_neighborhood_gives_a_spike() {
        let train = Dataset::new((0..20).map(f64::from).collect(), 1, vec![3.0; 20], None).unwrap();
        let em = EmSettings { variance_floor: 1e-6, ..EmSettings::default() };
        let model = fit_knn_mixture_with(&train, &train, &[5], 1, em).unwrap();
        let f = |y| model.density(&[4.0], y).unwrap();
        for y in [2.0, 2.999, 3.001, 4.0] {
            assert!(f(3.0) >= f(y));
        }
    }

    #[test]
    fn rejects_too_few_neighbors() {
        let train = cell_data(0, 50, 1);
        assert!(matches!(fit_knn_mixture(&train, &train, &[3], 2), Err(Error::Config(_))));
        assert!(matches!(fit_knn_mixture(&train, &train, &[60], 2), Err(Error::Config(_))));
        assert!(matches!(fit_knn_mixture(&train, &train, &[10], 0), Err(Error::Config(_))));
    }

    #[test]
    fn selection_is_deterministic_and_prefers_validation_fit() {
        let train = cell_data(surrogate::cell(0, 1), 800, 5);
        let val = cell_data(surrogate::cell(0, 1), 100, 6);
        let a = fit_knn_mixture(&train, &val, &[50, 200, 400], 2).unwrap();
        let b = fit_knn_mixture(&train, &val, &[400, 200, 50], 2).unwrap();
        assert_eq!(a, b);
        assert!([50, 200, 400].contains(&params(&a).neighbors));
    }
}
