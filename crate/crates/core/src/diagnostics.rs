//! Local coverage functions `r_alpha(x) = P(HPD(Y; x) < alpha | x)`.
//!
//! A well-fitted conditional density gives `r_alpha(x) = alpha` everywhere.
//! The estimator here smooths the indicators `1{HPD_i < alpha}` of held-out
//! pairs with a Nadaraya-Watson kernel, one shared bandwidth for all alpha.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{self, Standardizer};

/// Minimum number of diagnostic pairs.
pub const MIN_DIAGNOSTIC_PAIRS: usize = 20;

/// Default alpha step.
pub const DEFAULT_ALPHA_STEP: f64 = 0.02;

/// `{0, step, 2 step, ..., 1}`, with the last point exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrid {
    step: f64,
    values: Vec<f64>,
}

impl AlphaGrid {
    pub fn new(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::config(format!("alpha step {step} outside (0, 1]")));
        }
        let p = math::ceil(1.0 / step - 1e-9) as usize + 1;
        let values = (0..p).map(|j| (j as f64 * step).min(1.0)).collect::<Vec<_>>();
        Ok(AlphaGrid { step, values })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the first alpha strictly above `h`, or `len()` if none.
    fn first_above(&self, h: f64) -> usize {
        self.values.partition_point(|&a| a <= h)
    }
}

impl Default for AlphaGrid {
    fn default() -> Self {
        AlphaGrid::new(DEFAULT_ALPHA_STEP).unwrap()
    }
}

/// Estimated coverage profile `(r_alpha(x))` over an alpha grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageProfile {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEval {
    pub profile: CoverageProfile,
    /// The kernel weights were unusable and the unweighted mean was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageEstimator {
    bandwidth: f64,
    standardizer: Standardizer,
    /// Standardized diagnostic features, row-major.
    points: Vec<f64>,
    hpd: Vec<f64>,
    alpha: AlphaGrid,
    /// Per diagnostic pair, the first alpha index whose indicator is 1.
    bucket: Vec<usize>,
}

impl CoverageEstimator {
    pub fn new(
        bandwidth: f64,
        standardizer: Standardizer,
        points: Vec<f64>,
        hpd: Vec<f64>,
        alpha: AlphaGrid,
    ) -> Result<Self> {
        let d = standardizer.dim();
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::config(format!("bandwidth {bandwidth} must be positive")));
        }
        if hpd.is_empty() || d == 0 || points.len() != hpd.len() * d {
            return Err(Error::config("coverage estimator: inconsistent diagnostic pairs"));
        }
        check_hpd(&hpd)?;
        let bucket = hpd.iter().map(|&h| alpha.first_above(h)).collect();
        Ok(CoverageEstimator { bandwidth, standardizer, points, hpd, alpha, bucket })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn hpd_values(&self) -> &[f64] {
        &self.hpd
    }

    pub fn alpha(&self) -> &AlphaGrid {
        &self.alpha
    }

    pub fn n_features(&self) -> usize {
        self.standardizer.dim()
    }

    /// Unmonotonized estimates `r_alpha(x)` for every alpha, and whether
    /// the unweighted fallback was used.
    pub fn raw_estimates(&self, x: &[f64]) -> Result<(Vec<f64>, bool)> {
        if x.len() != self.n_features() {
            return Err(Error::Dimension { expected: self.n_features(), found: x.len() });
        }
        let z = self.standardizer.apply(x);
        let mut d2 = Vec::new();
        math::squared_distances(&z, &self.points, &mut d2);
        let mut w = Vec::new();
        let total = math::gaussian_weights(&d2, self.bandwidth, &mut w);
        Ok(self.estimates_from(&w, total))
    }

    fn estimates_from(&self, w: &[f64], total: f64) -> (Vec<f64>, bool) {
        let p = self.alpha.len();
        let mut mass = vec![0.0; p + 1];
        let fallback = !(total.is_finite() && total > 0.0);
        let total = if fallback {
            for &b in &self.bucket {
                mass[b] += 1.0;
            }
            self.bucket.len() as f64
        } else {
            for (&b, &wi) in self.bucket.iter().zip(w) {
                mass[b] += wi;
            }
            total
        };
        let mut acc = 0.0;
        let out = mass[..p]
            .iter()
            .map(|m| {
                acc += m;
                (acc / total).min(1.0)
            })
            .collect();
        (out, fallback)
    }

    /// Monotonized profile: pool adjacent violators across alpha, clamp to
    /// `[0, 1]`, then pin the first entry to 0 and the last to 1.
    pub fn profile(&self, x: &[f64]) -> Result<ProfileEval> {
        let (raw, fallback) = self.raw_estimates(x)?;
        Ok(ProfileEval { profile: monotone_profile(&raw), fallback })
    }
}

/// The profile rule applied to raw per-alpha estimates.
pub fn monotone_profile(raw: &[f64]) -> CoverageProfile {
    let mut values = math::pava(raw);
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    if let Some(first) = values.first_mut() {
        *first = 0.0;
    }
    if let Some(last) = values.last_mut() {
        *last = 1.0;
    }
    CoverageProfile { values }
}

fn check_hpd(hpd: &[f64]) -> Result<()> {
    match hpd.iter().position(|h| !(0.0..=1.0).contains(h)) {
        Some(i) => Err(Error::Data(format!("HPD value {} at position {i} outside [0, 1]", hpd[i]))),
        None => Ok(()),
    }
}

/// Fits the kernel coverage estimator on diagnostic pairs and picks the
/// bandwidth minimizing the validation Brier score averaged over the alpha
/// grid. Ties go to the smaller bandwidth.
pub fn fit_coverage_estimator(
    diagnostic: &Dataset,
    diagnostic_hpd: &[f64],
    validation: &Dataset,
    validation_hpd: &[f64],
    bandwidths: &[f64],
    alpha: AlphaGrid,
) -> Result<CoverageEstimator> {
    if bandwidths.is_empty() {
        return Err(Error::config("bandwidth grid is empty"));
    }
    if let Some(h) = bandwidths.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(Error::config(format!("bandwidth {h} must be positive")));
    }
    if diagnostic.len() < MIN_DIAGNOSTIC_PAIRS {
        return Err(Error::config(format!(
            "{} diagnostic pairs, need at least {MIN_DIAGNOSTIC_PAIRS}",
            diagnostic.len()
        )));
    }
    if diagnostic_hpd.len() != diagnostic.len() || validation_hpd.len() != validation.len() {
        return Err(Error::config("HPD values do not match their datasets"));
    }
    if validation.is_empty() {
        return Err(Error::config("bandwidth selection needs a nonempty validation set"));
    }
    let d = diagnostic.n_features();
    if validation.n_features() != d {
        return Err(Error::Dimension { expected: d, found: validation.n_features() });
    }
    check_hpd(validation_hpd)?;

    let mut hs = bandwidths.to_vec();
    hs.sort_by(f64::total_cmp);
    hs.dedup();

    let standardizer = Standardizer::fit(diagnostic.features(), d);
    let points = standardizer.apply_rows(diagnostic.features());
    let mut est = CoverageEstimator::new(hs[0], standardizer, points, diagnostic_hpd.to_vec(), alpha)?;

    if hs.len() > 1 {
        let p = est.alpha.len();
        let mut loss = vec![0.0; hs.len()];
        let (mut z, mut d2, mut w) = (vec![0.0; d], Vec::new(), Vec::new());
        for i in 0..validation.len() {
            est.standardizer.apply_into(validation.row(i), &mut z);
            math::squared_distances(&z, &est.points, &mut d2);
            let first = est.alpha.first_above(validation_hpd[i]);
            for (l, &h) in loss.iter_mut().zip(&hs) {
                let total = math::gaussian_weights(&d2, h, &mut w);
                let (r, _) = est.estimates_from(&w, total);
                let brier: f64 = r
                    .iter()
                    .enumerate()
                    .map(|(j, &rj)| {
                        let target = if j >= first { 1.0 } else { 0.0 };
                        (target - rj) * (target - rj)
                    })
                    .sum();
                *l += brier / p as f64;
            }
        }
        let mut best = 0;
        for (k, &l) in loss.iter().enumerate() {
            if l < loss[best] {
                best = k;
            }
        }
        est.bandwidth = hs[best];
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn dataset(xs: &[f64]) -> Dataset {
        Dataset::new(xs.to_vec(), 1, vec![0.0; xs.len()], None).unwrap()
    }

    #[test]
    fn alpha_grid_shape() {
        let g = AlphaGrid::new(0.02).unwrap();
        assert_eq!(g.len(), 51);
        assert_eq!(g.values()[0], 0.0);
        assert_eq!(*g.values().last().unwrap(), 1.0);
        assert!(g.values().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(AlphaGrid::new(0.5).unwrap().values(), &[0.0, 0.5, 1.0]);
        assert_eq!(AlphaGrid::new(0.3).unwrap().values().len(), 5);
        assert!(AlphaGrid::new(0.0).is_err() && AlphaGrid::new(1.5).is_err());
    }

    #[test]
    fn profile_rule_examples() {
        assert_eq!(monotone_profile(&[0.1, 0.4, 0.9]).values, vec![0.0, 0.4, 1.0]);
        assert_eq!(monotone_profile(&[0.0, 0.6, 0.4, 1.0]).values, vec![0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn constant_hpd_gives_step_profiles() {
        let xs: Vec<f64> = (0..40).map(f64::from).collect();
        let diag = dataset(&xs);
        let est = fit_coverage_estimator(&diag, &[0.5; 40], &diag, &[0.5; 40], &[0.5, 2.0], AlphaGrid::default()).unwrap();
        for x in [0.0, 13.3, 39.0] {
            let (raw, fallback) = est.raw_estimates(&[x]).unwrap();
            assert!(!fallback);
            for (a, r) in est.alpha().values().iter().zip(&raw) {
                assert_eq!(*r, if *a > 0.5 { 1.0 } else { 0.0 }, "alpha {a}");
            }
        }
    }

    #[test]
    fn uniform_hpd_gives_the_diagonal() {
        let mut rng = seed::rng(11);
        let n = 5000;
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
        let hs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let vx: Vec<f64> = (0..500).map(|_| rng.random::<f64>() * 10.0).collect();
        let vh: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let est = fit_coverage_estimator(&dataset(&xs), &hs, &dataset(&vx), &vh, &[0.1, 0.3, 1.0], AlphaGrid::default()).unwrap();
        for x in [2.0, 5.0, 8.0] {
            let prof = est.profile(&[x]).unwrap().profile;
            for (a, r) in est.alpha().values().iter().zip(&prof.values) {
                assert!((a - r).abs() < 0.05, "x {x} alpha {a} r {r}");
            }
        }
    }

    #[test]
    fn raw_estimates_match_direct_formula() {
        let mut rng = seed::rng(12);
        let n = 300;
        let feats: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let hs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let diag = Dataset::new(feats, 2, vec![0.0; n], None).unwrap();
        let est = fit_coverage_estimator(&diag, &hs, &diag, &hs, &[0.4], AlphaGrid::new(0.1).unwrap()).unwrap();
        let st = est.standardizer().clone();
        for _ in 0..10 {
            let q = [rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0];
            let (raw, _) = est.raw_estimates(&q).unwrap();
            let zq = st.apply(&q);
            for (j, &a) in est.alpha().values().iter().enumerate() {
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..n {
                    let zi = st.apply(diag.row(i));
                    let d2 = (zq[0] - zi[0]).powi(2) + (zq[1] - zi[1]).powi(2);
                    let w = (-d2 / (2.0 * 0.16)).exp();
                    den += w;
                    if hs[i] < a {
                        num += w;
                    }
                }
                assert!((raw[j] - num / den).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unreachable_query_falls_back() {
        let xs: Vec<f64> = (0..30).map(f64::from).collect();
        let hs: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        let est = fit_coverage_estimator(&dataset(&xs), &hs, &dataset(&xs), &hs, &[1.0], AlphaGrid::new(0.5).unwrap()).unwrap();
        let eval = est.profile(&[1e300]).unwrap();
        assert!(eval.fallback);
        assert_eq!(eval.profile.values, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn input_checks() {
        let xs: Vec<f64> = (0..30).map(f64::from).collect();
        let d = dataset(&xs);
        let h = vec![0.5; 30];
        let a = AlphaGrid::default();
        assert!(fit_coverage_estimator(&d, &h, &d, &h, &[], a.clone()).unwrap_err().is_config());
        assert!(fit_coverage_estimator(&d, &h, &d, &h, &[0.0], a.clone()).unwrap_err().is_config());
        let small = dataset(&xs[..10]);
        assert!(fit_coverage_estimator(&small, &h[..10], &d, &h, &[1.0], a).unwrap_err().is_config());
    }

    #[test]
    fn larger_bandwidth_wins_when_hpd_ignores_x() {
        let mut rng = seed::rng(13);
        let xs: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
        let hs: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
        let vx: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
        let vh: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
        let est = fit_coverage_estimator(&dataset(&xs), &hs, &dataset(&vx), &vh, &[0.01, 5.0], AlphaGrid::default()).unwrap();
        assert_eq!(est.bandwidth(), 5.0);
    }
}
