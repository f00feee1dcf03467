//! End-to-end fitting: split, conditional density, coverage diagnostics,
//! partition, calibration.
//!
//! All randomness comes from one master seed through named stage seeds
//! (`split`, `partition`, `test`).

use alloc::vec;
use alloc::vec::Vec;

use crate::cde::{self, CdeModel};
use crate::conformal::{self, CalibrationOptions, LocalConformalPredictor, ScoreFunction};
use crate::data::{self, Dataset, GeneratorConfig, Role, SplitFractions, SplitIndices};
use crate::diagnostics::{self, AlphaGrid, CoverageEstimator};
use crate::error::{Error, Result};
use crate::hpd::HpdEvaluator;
use crate::math::Standardizer;
use crate::partition::{self, Embedding, PartitionMethod, PartitionModel};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub enum CdeSpec {
    GaussianLinear { bandwidths: Vec<f64> },
    KnnMixture { neighbors: Vec<usize>, components: usize },
}

impl CdeSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CdeSpec::GaussianLinear { .. } => "gaussian_linear",
            CdeSpec::KnnMixture { .. } => "knn_mixture",
        }
    }

    pub fn fit(&self, train: &Dataset, validation: &Dataset) -> Result<CdeModel> {
        match self {
            CdeSpec::GaussianLinear { bandwidths } => cde::fit_gaussian_linear(train, validation, bandwidths),
            CdeSpec::KnnMixture { neighbors, components } => {
                cde::fit_knn_mixture(train, validation, neighbors, *components)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub method: PartitionMethod,
    pub k: usize,
    /// Defaults to `cde_value` for `cd` and `hpd` otherwise.
    pub score: Option<ScoreFunction>,
    /// Fractions for `md`; other methods fold the diagnostic share into
    /// training and validation.
    pub fractions: SplitFractions,
    pub cde: CdeSpec,
    pub alpha_step: f64,
    pub diagnostic_bandwidths: Vec<f64>,
    pub restarts: usize,
    pub calibration: CalibrationOptions,
    pub seed: u64,
}

impl PipelineSpec {
    /// One-feature study: quarters for each role, Gaussian linear density.
    pub fn example1(method: PartitionMethod, k: usize, seed: u64) -> Self {
        PipelineSpec {
            method,
            k,
            score: None,
            fractions: SplitFractions::new(0.25, 0.25, 0.25, 0.25),
            cde: CdeSpec::GaussianLinear { bandwidths: vec![0.05, 0.1, 0.2, 0.5, 1.0] },
            alpha_step: diagnostics::DEFAULT_ALPHA_STEP,
            diagnostic_bandwidths: vec![0.05, 0.1, 0.2, 0.4, 0.8],
            restarts: partition::DEFAULT_RESTARTS,
            calibration: CalibrationOptions::default(),
            seed,
        }
    }

    /// Nine-cell surrogate study with the two-component local mixture.
    pub fn example2(method: PartitionMethod, k: usize, seed: u64) -> Self {
        PipelineSpec {
            fractions: SplitFractions::new(0.525, 0.225, 0.125, 0.125),
            cde: CdeSpec::KnnMixture { neighbors: vec![100, 200, 400], components: 2 },
            ..Self::example1(method, k, seed)
        }
    }

    pub fn effective_fractions(&self) -> SplitFractions {
        match self.method {
            PartitionMethod::Md => self.fractions,
            _ => self.fractions.fold_diagnostic(),
        }
    }

    pub fn effective_score(&self) -> ScoreFunction {
        self.score.unwrap_or(match self.method {
            PartitionMethod::Cd => ScoreFunction::CdeValue,
            _ => ScoreFunction::Hpd,
        })
    }

    pub fn effective_k(&self) -> usize {
        match self.method {
            PartitionMethod::Global => 1,
            _ => self.k,
        }
    }

    pub fn required_roles(&self) -> Vec<Role> {
        let mut roles = vec![Role::Train, Role::Validation, Role::Calibration];
        if self.method == PartitionMethod::Md {
            roles.push(Role::Diagnostic);
        }
        roles
    }

    pub fn validate(&self) -> Result<()> {
        self.fractions.validate()?;
        if self.k == 0 {
            return Err(Error::config("the number of groups must be positive"));
        }
        AlphaGrid::new(self.alpha_step)?;
        if self.restarts == 0 {
            return Err(Error::config("k-means needs at least one restart"));
        }
        Ok(())
    }
}

/// Seed of the held-out test sample drawn for a run.
pub fn test_seed(master: u64) -> u64 {
    seed::derive_seed(master, "test")
}

/// Generator config for the test sample matching `train_config`.
pub fn test_config(train_config: &GeneratorConfig, n_test: usize) -> GeneratorConfig {
    GeneratorConfig { n: n_test, seed: test_seed(train_config.seed), ..train_config.clone() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    pub split: SplitIndices,
    pub estimator: Option<CoverageEstimator>,
    pub predictor: LocalConformalPredictor,
}

pub fn fit_pipeline(data: &Dataset, spec: &PipelineSpec) -> Result<FittedPipeline> {
    spec.validate()?;
    let split = split_for(data, spec)?;
    let cde = fit_cde(data, &split, spec).map_err(Error::stage("cde"))?;
    let hpd = HpdEvaluator::for_model(&cde);
    let estimator = match spec.method {
        PartitionMethod::Md => Some(fit_diagnostics(data, &split, spec, &cde, &hpd).map_err(Error::stage("diagnostics"))?),
        _ => None,
    };
    let partition =
        fit_partition(data, &split.calibration, spec, &cde, &hpd, estimator.clone()).map_err(Error::stage("partition"))?;
    let predictor = calibrate(data, &split, spec, cde, hpd, partition).map_err(Error::stage("calibrate"))?;
    Ok(FittedPipeline { split, estimator, predictor })
}

/// The role split for `spec`, with every role the method needs nonempty.
pub fn split_for(data: &Dataset, spec: &PipelineSpec) -> Result<SplitIndices> {
    data::split(data, spec.effective_fractions(), seed::derive_seed(spec.seed, "split"))
        .and_then(|s| s.require(&spec.required_roles()).map(|_| s))
        .map_err(Error::stage("split"))
}

pub fn fit_cde(data: &Dataset, split: &SplitIndices, spec: &PipelineSpec) -> Result<CdeModel> {
    spec.cde.fit(&data.subset(&split.train), &data.subset(&split.validation))
}

/// HPD values on the diagnostic and validation sets, then the coverage
/// estimator.
pub fn fit_diagnostics(
    data: &Dataset,
    split: &SplitIndices,
    spec: &PipelineSpec,
    cde: &CdeModel,
    hpd: &HpdEvaluator,
) -> Result<CoverageEstimator> {
    let diag_hpd = hpd.hpd_batch(cde, data, &split.diagnostic)?;
    let val_hpd = hpd.hpd_batch(cde, data, &split.validation)?;
    diagnostics::fit_coverage_estimator(
        &data.subset(&split.diagnostic),
        &diag_hpd,
        &data.subset(&split.validation),
        &val_hpd,
        &spec.diagnostic_bandwidths,
        AlphaGrid::new(spec.alpha_step)?,
    )
}

/// Clusters the embedded calibration points.
pub fn fit_partition(
    data: &Dataset,
    calibration: &[usize],
    spec: &PipelineSpec,
    cde: &CdeModel,
    hpd: &HpdEvaluator,
    estimator: Option<CoverageEstimator>,
) -> Result<PartitionModel> {
    let embedding = match spec.method {
        PartitionMethod::Global => return Ok(PartitionModel::global()),
        PartitionMethod::Md => Embedding::ModelDiagnostic(
            estimator.ok_or_else(|| Error::config("the md partition needs a coverage estimator"))?,
        ),
        PartitionMethod::Cd => Embedding::Profile(*cde.grid()),
        PartitionMethod::Euclidean => {
            let cal = data.subset(calibration);
            Embedding::Euclidean(Standardizer::fit(cal.features(), cal.n_features()))
        }
    };
    let mut points = Vec::with_capacity(calibration.len());
    for &i in calibration {
        let x = data.row(i);
        let v = match embedding {
            Embedding::Profile(_) => {
                let curve = hpd.curve_at(cde, x).map_err(|e| Error::at_index(i, e))?;
                embedding.embed(x, Some(&curve))
            }
            _ => embedding.embed(x, None),
        }
        .map_err(|e| Error::at_index(i, e))?;
        points.push(v);
    }
    let km = partition::kmeanspp(&points, spec.effective_k(), seed::derive_seed(spec.seed, "partition"), spec.restarts)?;
    PartitionModel::new(embedding, km.centroids)
}

pub fn calibrate(
    data: &Dataset,
    split: &SplitIndices,
    spec: &PipelineSpec,
    cde: CdeModel,
    hpd: HpdEvaluator,
    partition: PartitionModel,
) -> Result<LocalConformalPredictor> {
    conformal::calibrate(cde, hpd, partition, spec.effective_score(), data, &split.calibration, spec.calibration)
}
