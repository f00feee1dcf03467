//! Datasets, seeded four-way splits and the two synthetic generators.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::math;
use crate::seed;

/// Feature matrix (row-major, `n x d`) with one real response per row and
/// optional true subpopulation labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    responses: Vec<f64>,
    groups: Option<Vec<u32>>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        responses: Vec<f64>,
        groups: Option<Vec<u32>>,
    ) -> Result<Self> {
        if features.len() != responses.len() * n_features {
            return Err(Error::Data(format!(
                "feature matrix has {} entries, expected {} rows x {} columns",
                features.len(),
                responses.len(),
                n_features
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature in row {}",
                i / n_features.max(1)
            )));
        }
        if let Some(i) = responses.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite response in row {i}")));
        }
        if let Some(g) = &groups {
            if g.len() != responses.len() {
                return Err(Error::Data(format!(
                    "{} group labels for {} rows",
                    g.len(),
                    responses.len()
                )));
            }
        }
        Ok(Dataset {
            features,
            n_features,
            responses,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn response(&self, i: usize) -> f64 {
        self.responses[i]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn group_labels(&self) -> Option<&[u32]> {
        self.groups.as_deref()
    }

    /// Number of distinct true groups (`max label + 1`), if labelled.
    pub fn group_count(&self) -> Option<usize> {
        self.groups
            .as_ref()
            .map(|g| g.iter().map(|&v| v as usize + 1).max().unwrap_or(0))
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.n_features;
        let mut features = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: d,
            responses: indices.iter().map(|&i| self.responses[i]).collect(),
            groups: self
                .groups
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i]).collect()),
        }
    }
}

/// Fractions of the data assigned to each of the four roles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub diagnostic: f64,
    pub calibration: f64,
}

impl SplitFractions {
    pub const fn new(train: f64, validation: f64, diagnostic: f64, calibration: f64) -> Self {
        SplitFractions {
            train,
            validation,
            diagnostic,
            calibration,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.train, self.validation, self.diagnostic, self.calibration]
    }

    pub fn validate(&self) -> Result<()> {
        let parts = self.as_array();
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::config(format!(
                "split fractions must lie in [0, 1], got {parts:?}"
            )));
        }
        let total: f64 = parts.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::config(format!(
                "split fractions sum to {total}, above 1"
            )));
        }
        Ok(())
    }

    /// Moves the diagnostic share into training and validation, in
    /// proportion to their current sizes.
    pub fn fold_diagnostic(&self) -> Self {
        let base = self.train + self.validation;
        if self.diagnostic == 0.0 || base == 0.0 {
            return SplitFractions {
                diagnostic: 0.0,
                train: self.train + self.diagnostic,
                ..*self
            };
        }
        SplitFractions {
            train: self.train + self.diagnostic * self.train / base,
            validation: self.validation + self.diagnostic * self.validation / base,
            diagnostic: 0.0,
            calibration: self.calibration,
        }
    }
}

/// The four roles a row can play in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Validation,
    Diagnostic,
    Calibration,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Validation => "validation",
            Role::Diagnostic => "diagnostic",
            Role::Calibration => "calibration",
        }
    }
}

/// Disjoint index sets into a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub diagnostic: Vec<usize>,
    pub calibration: Vec<usize>,
    /// Rows not assigned to any role, in permutation order.
    pub unassigned: Vec<usize>,
}

impl SplitIndices {
    pub fn get(&self, role: Role) -> &[usize] {
        match role {
            Role::Train => &self.train,
            Role::Validation => &self.validation,
            Role::Diagnostic => &self.diagnostic,
            Role::Calibration => &self.calibration,
        }
    }

    /// Errors if any of `roles` received no rows.
    pub fn require(&self, roles: &[Role]) -> Result<()> {
        for &role in roles {
            if self.get(role).is_empty() {
                return Err(Error::config(format!(
                    "the {} set is empty; increase its split fraction",
                    role.name()
                )));
            }
        }
        Ok(())
    }
}

/// Seeded random four-way split. Set sizes are `floor(fraction * n)`; the
/// remainder is left unassigned.
pub fn split(dataset: &Dataset, fractions: SplitFractions, seed: u64) -> Result<SplitIndices> {
    split_len(dataset.len(), fractions, seed)
}

pub fn split_len(n: usize, fractions: SplitFractions, seed: u64) -> Result<SplitIndices> {
    fractions.validate()?;
    if n < 8 {
        return Err(Error::config(format!("cannot split {n} rows; need at least 8")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed));
    // The epsilon keeps products such as 0.29 * 100 from flooring to 28.
    let sizes = fractions
        .as_array()
        .map(|f| math::floor(f * n as f64 + 1e-9) as usize);
    let mut rest = perm.as_slice();
    let mut take = |k: usize| {
        let (head, tail) = rest.split_at(k.min(rest.len()));
        rest = tail;
        head.to_vec()
    };
    let train = take(sizes[0]);
    let validation = take(sizes[1]);
    let diagnostic = take(sizes[2]);
    let calibration = take(sizes[3]);
    Ok(SplitIndices {
        train,
        validation,
        diagnostic,
        calibration,
        unassigned: rest.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Example1,
    Example2Surrogate,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Example1 => "example1",
            GeneratorKind::Example2Surrogate => "example2_surrogate",
        }
    }
}

/// How the spread parameter `0.25` of the four-component cells is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MixtureSpread {
    #[default]
    Variance,
    StdDev,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub n: usize,
    pub seed: u64,
    /// Extra `Unif(0, 1)` feature columns (surrogate only).
    pub nuisance_dims: usize,
    /// Half-width of the uniform noise added to the lambda feature.
    pub lambda_noise: f64,
    /// Half-width of the uniform noise added to the theta feature.
    pub theta_noise: f64,
    pub spread: MixtureSpread,
}

impl GeneratorConfig {
    pub fn example1(n: usize, seed: u64) -> Self {
        GeneratorConfig {
            kind: GeneratorKind::Example1,
            n,
            seed,
            nuisance_dims: 0,
            lambda_noise: 0.05,
            theta_noise: PI / 36.0,
            spread: MixtureSpread::Variance,
        }
    }

    pub fn example2_surrogate(n: usize, seed: u64) -> Self {
        GeneratorConfig {
            kind: GeneratorKind::Example2Surrogate,
            ..Self::example1(n, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("sample count must be positive"));
        }
        if !(self.lambda_noise >= 0.0 && self.theta_noise >= 0.0)
            || !self.lambda_noise.is_finite()
            || !self.theta_noise.is_finite()
        {
            return Err(Error::config("noise half-widths must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Dispatches on `config.kind`.
pub fn generate(config: &GeneratorConfig) -> Result<Dataset> {
    match config.kind {
        GeneratorKind::Example1 => generate_example1(config),
        GeneratorKind::Example2Surrogate => generate_example2_surrogate(config),
    }
}

/// Heteroskedastic, shape-shifting example on one feature: truncated
/// normal noise for `|x| <= 2`, scaled Student-t beyond.
pub mod example1 {
    use super::*;

    pub fn sigma(u: f64) -> f64 {
        1.0 + 1.5 * u.abs()
    }

    /// Infinite at zero.
    pub fn trunc_max(u: f64) -> f64 {
        0.5 + math::ln(2.0 / u.abs())
    }

    pub fn degrees_of_freedom(u: f64) -> f64 {
        let a = 3.0 - u.abs();
        a * a * a + 2.0
    }

    /// Standard normal truncated to `[-bound, bound]`, by inverse CDF.
    pub fn truncated_standard_normal<R: Rng + ?Sized>(bound: f64, rng: &mut R) -> f64 {
        let u: f64 = Open01.sample(rng);
        if bound.is_infinite() {
            return math::normal_quantile(u);
        }
        // Sample |z| from the upper half to keep precision when the
        // truncation is wide.
        let lo = 0.5;
        let hi = math::normal_cdf(bound);
        let half = math::normal_quantile(lo + (hi - lo) * u);
        let sign: bool = rng.random();
        if sign {
            half
        } else {
            -half
        }
    }

    /// Draws `Y` given `X = x`.
    pub fn sample_response<R: Rng + ?Sized>(x: f64, rng: &mut R) -> f64 {
        let u = x.abs() - 2.0;
        let s = sigma(u);
        if x.abs() <= 2.0 {
            x + s * truncated_standard_normal(trunc_max(u), rng)
        } else {
            let t = StudentT::new(degrees_of_freedom(u))
                .expect("degrees of freedom are at least 2")
                .sample(rng);
            x + 0.5 * s * t
        }
    }
}

pub fn generate_example1(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    if config.kind != GeneratorKind::Example1 {
        return Err(Error::config("generate_example1 called with a different generator id"));
    }
    let mut rng = seed::rng(config.seed);
    let mut features = Vec::with_capacity(config.n);
    let mut responses = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let x = rng.random_range(-4.0..4.0);
        features.push(x);
        responses.push(example1::sample_response(x, &mut rng));
    }
    Dataset::new(features, 1, responses, None)
}

/// Nine-cell bimodal mixture study over a tabular `(lambda, theta)` feature
/// space.
pub mod surrogate {
    use super::*;

    pub const LAMBDAS: [f64; 3] = [0.1, 0.4, 0.75];
    pub const THETAS: [f64; 3] = [PI / 4.0, 2.0 * PI / 3.0, 5.0 * PI / 6.0];

    /// Response scale `a_lambda` for lambda index 0, 1, 2.
    pub const fn scale(lambda_index: usize) -> f64 {
        match lambda_index {
            0 => 0.5,
            1 => 1.0,
            _ => 2.0,
        }
    }

    /// Cell label `3 * lambda_index + theta_index`.
    pub const fn cell(lambda_index: usize, theta_index: usize) -> u32 {
        (3 * lambda_index + theta_index) as u32
    }

    pub const fn lambda_index(cell: u32) -> usize {
        cell as usize / 3
    }

    pub const fn theta_index(cell: u32) -> usize {
        cell as usize % 3
    }

    /// One draw of `U_theta` (`side = +1`) or `V_theta` (`side = -1`).
    fn shape<R: Rng + ?Sized>(theta_index: usize, side: f64, spread: MixtureSpread, rng: &mut R) -> f64 {
        match theta_index {
            0 => {
                let z: f64 = StandardNormal.sample(rng);
                side * 2.0 + z
            }
            1 => {
                let e: f64 = Exp1.sample(rng);
                (e - 1.0) + side * 2.0
            }
            _ => {
                let sd = match spread {
                    MixtureSpread::Variance => 0.5,
                    MixtureSpread::StdDev => 0.25,
                };
                let center = if rng.random::<bool>() { 2.7 } else { 1.3 };
                let z: f64 = StandardNormal.sample(rng);
                side * center + sd * z
            }
        }
    }

    /// Draws `Z` for a cell: `a_lambda * (U or V with probability 1/2)`.
    pub fn sample_response<R: Rng + ?Sized>(cell: u32, spread: MixtureSpread, rng: &mut R) -> f64 {
        let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        scale(lambda_index(cell)) * shape(theta_index(cell), side, spread, rng)
    }
}

pub fn generate_example2_surrogate(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    if config.kind != GeneratorKind::Example2Surrogate {
        return Err(Error::config(
            "generate_example2_surrogate called with a different generator id",
        ));
    }
    let d = 2 + config.nuisance_dims;
    let mut rng = seed::rng(config.seed);
    let mut features = Vec::with_capacity(config.n * d);
    let mut responses = Vec::with_capacity(config.n);
    let mut groups = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let cell = rng.random_range(0..9u32);
        let lambda = surrogate::LAMBDAS[surrogate::lambda_index(cell)];
        let theta = surrogate::THETAS[surrogate::theta_index(cell)];
        let noise = |rng: &mut seed::StageRng, hw: f64| hw * (2.0 * rng.random::<f64>() - 1.0);
        features.push(lambda + noise(&mut rng, config.lambda_noise));
        features.push(theta + noise(&mut rng, config.theta_noise));
        for _ in 0..config.nuisance_dims {
            features.push(rng.random::<f64>());
        }
        responses.push(surrogate::sample_response(cell, config.spread, &mut rng));
        groups.push(cell);
    }
    Dataset::new(features, d, responses, Some(groups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rows(n: usize) -> Dataset {
        Dataset::new((0..n).map(|i| i as f64).collect(), 1, vec![0.0; n], None).unwrap()
    }

    fn disjoint(s: &SplitIndices) -> bool {
        let mut all: Vec<usize> = [&s.train, &s.validation, &s.diagnostic, &s.calibration]
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect();
        let len = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == len
    }

    #[test]
    fn quarter_split() {
        let s = split(&rows(100), SplitFractions::new(0.25, 0.25, 0.25, 0.25), 7).unwrap();
        for set in [&s.train, &s.validation, &s.diagnostic, &s.calibration] {
            assert_eq!(set.len(), 25);
        }
        assert!(disjoint(&s));
        assert!(s.unassigned.is_empty());
    }

    #[test]
    fn degenerate_split_takes_everything() {
        let s = split(&rows(100), SplitFractions::new(1.0, 0.0, 0.0, 0.0), 3).unwrap();
        assert_eq!(s.train.len(), 100);
        assert!(s.validation.is_empty() && s.diagnostic.is_empty() && s.calibration.is_empty());
        assert!(s.require(&[Role::Calibration]).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let f = SplitFractions::new(0.33, 0.33, 0.0, 0.33);
        let a = split(&rows(99), f, 11).unwrap();
        let b = split(&rows(99), f, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 32);
        assert_ne!(a, split(&rows(99), f, 12).unwrap());
    }

    #[test]
    fn split_rejects_oversubscription_and_tiny_data() {
        let f = SplitFractions::new(0.5, 0.5, 0.25, 0.0);
        assert!(matches!(split(&rows(100), f, 1), Err(Error::Config(_))));
        let f = SplitFractions::new(0.25, 0.25, 0.25, 0.25);
        assert!(matches!(split(&rows(7), f, 1), Err(Error::Config(_))));
    }

    #[test]
    fn fold_keeps_calibration() {
        let f = SplitFractions::new(0.25, 0.25, 0.25, 0.25).fold_diagnostic();
        assert_eq!(f.as_array(), [0.375, 0.375, 0.0, 0.25]);
    }

    #[test]
    fn example1_helpers() {
        assert_eq!(example1::sigma(0.0), 1.0);
        assert_eq!(example1::sigma(-2.0), 4.0);
        assert_eq!(example1::degrees_of_freedom(1.0), 10.0);
        assert_eq!(example1::trunc_max(-2.0), 0.5);
        assert!(example1::trunc_max(0.0).is_infinite());
    }

    #[test]
    fn truncated_normal_respects_bounds() {
        let mut rng = seed::rng(5);
        for _ in 0..10_000 {
            assert!(example1::truncated_standard_normal(0.5, &mut rng).abs() <= 0.5);
        }
    }

    #[test]
    fn example1_is_centred_at_x() {
        let mut rng = seed::rng(1);
        let n = 100_000;
        let m: f64 = (0..n).map(|_| example1::sample_response(0.0, &mut rng)).sum::<f64>() / n as f64;
        assert!(m.abs() < 0.05, "mean {m}");
    }

    #[test]
    fn surrogate_cell_moments() {
        let mut rng = seed::rng(2);
        let n = 100_000;
        let draw = |cell, rng: &mut seed::StageRng| -> Vec<f64> {
            (0..n)
                .map(|_| surrogate::sample_response(cell, MixtureSpread::Variance, rng))
                .collect()
        };
        let z = draw(surrogate::cell(1, 0), &mut rng);
        assert!(math::mean(&z).abs() < 0.05);
        // a = 0.5, mixture of N(+-2, 1): variance 0.25 * (1 + 4).
        let z = draw(surrogate::cell(0, 0), &mut rng);
        assert!((math::variance(&z) - 1.25).abs() < 0.05);
        assert_eq!(surrogate::scale(2), 2.0);
    }

    #[test]
    fn generators_are_deterministic() {
        let a = generate(&GeneratorConfig::example2_surrogate(500, 9)).unwrap();
        let b = generate(&GeneratorConfig::example2_surrogate(500, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_features(), 2);
        assert!(a.group_labels().unwrap().iter().all(|&g| g < 9));
        let c = generate(&GeneratorConfig::example1(50, 9)).unwrap();
        assert_eq!(c.n_features(), 1);
        assert!(c.features().iter().all(|x| (-4.0..4.0).contains(x)));
    }

    #[test]
    fn generator_rejects_bad_config() {
        let mut c = GeneratorConfig::example1(0, 1);
        assert!(generate(&c).is_err());
        c.n = 10;
        c.lambda_noise = -1.0;
        assert!(generate(&c).is_err());
        assert!(generate_example1(&GeneratorConfig::example2_surrogate(10, 1)).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![1.0, 2.0], 1, vec![1.0], None).is_err());
        assert!(Dataset::new(vec![f64::NAN], 1, vec![1.0], None).is_err());
        assert!(Dataset::new(vec![1.0], 1, vec![1.0], Some(vec![0, 1])).is_err());
        let d = Dataset::new(vec![1.0, 2.0, 3.0], 1, vec![4.0, 5.0, 6.0], Some(vec![0, 2, 1])).unwrap();
        let s = d.subset(&[2, 0]);
        assert_eq!(s.responses(), &[6.0, 4.0]);
        assert_eq!(s.group_labels().unwrap(), &[1, 0]);
        assert_eq!(d.group_count(), Some(3));
    }
}
