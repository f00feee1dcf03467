//! Experiment configuration as TOML. Every section is optional; missing
//! values take the defaults of the chosen generator. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use mdsplit_core::conformal::ScoreFunction;
use mdsplit_core::data::{GeneratorConfig, GeneratorKind, MixtureSpread, SplitFractions};
use mdsplit_core::partition::PartitionMethod;
use mdsplit_core::pipeline::{CdeSpec, PipelineSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Example1,
    Example2Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spread {
    Variance,
    Sd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Md,
    Cd,
    Euclidean,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score {
    Hpd,
    CdeValue,
    AbsResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratify {
    Bins,
    Groups,
    Clusters,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub generator: Option<Generator>,
    pub n: Option<usize>,
    pub n_test: Option<usize>,
    pub nuisance_dims: Option<usize>,
    pub lambda_noise: Option<f64>,
    pub theta_noise: Option<f64>,
    pub spread: Option<Spread>,
    /// Dataset file used instead of a generator; relative to the config.
    pub input: Option<PathBuf>,
    pub test_input: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train: Option<f64>,
    pub validation: Option<f64>,
    pub diagnostic: Option<f64>,
    pub calibration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CdeSection {
    GaussianLinear { bandwidths: Option<Vec<f64>> },
    KnnMixture { neighbors: Option<Vec<usize>>, components: Option<usize> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub alpha_step: Option<f64>,
    pub bandwidths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub method: Option<Method>,
    pub k: Option<usize>,
    pub restarts: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformalSection {
    pub score: Option<Score>,
    pub min_epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub levels: Option<Vec<f64>>,
    pub bins: Option<usize>,
    pub stratify: Option<Stratify>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub split: SplitSection,
    pub cde: Option<CdeSection>,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub partition: PartitionSection,
    #[serde(default)]
    pub conformal: ConformalSection,
    #[serde(default)]
    pub eval: EvalSection,
}

/// Where the data comes from once defaults are filled in.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Generated { train: GeneratorConfig, n_test: usize },
    Files { train: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub source: Source,
    pub spec: PipelineSpec,
    pub levels: Vec<f64>,
    pub bins: usize,
    pub stratify: Option<Stratify>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.input, &mut cfg.data.test_input].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config values serialize")
    }

    pub fn generator(&self) -> Generator {
        self.data.generator.unwrap_or(Generator::Example1)
    }

    /// Fills in defaults and checks the result.
    pub fn resolve(&self) -> Result<Resolved> {
        let seed = self.seed.unwrap_or(1);
        let d = &self.data;
        let example2 = d.input.is_none() && self.generator() == Generator::Example2Surrogate;
        let method = match self.partition.method.unwrap_or(Method::Md) {
            Method::Md => PartitionMethod::Md,
            Method::Cd => PartitionMethod::Cd,
            Method::Euclidean => PartitionMethod::Euclidean,
            Method::Global => PartitionMethod::Global,
        };
        let k = self.partition.k.unwrap_or(if example2 { 3 } else { 5 });
        let mut spec = if example2 {
            PipelineSpec::example2(method, k, seed)
        } else {
            PipelineSpec::example1(method, k, seed)
        };

        let f = &self.split;
        spec.fractions = SplitFractions::new(
            f.train.unwrap_or(spec.fractions.train),
            f.validation.unwrap_or(spec.fractions.validation),
            f.diagnostic.unwrap_or(spec.fractions.diagnostic),
            f.calibration.unwrap_or(spec.fractions.calibration),
        );
        if let Some(cde) = &self.cde {
            spec.cde = match (cde, &spec.cde) {
                (CdeSection::GaussianLinear { bandwidths }, CdeSpec::GaussianLinear { bandwidths: b }) => {
                    CdeSpec::GaussianLinear { bandwidths: bandwidths.clone().unwrap_or_else(|| b.clone()) }
                }
                (CdeSection::GaussianLinear { bandwidths }, _) => CdeSpec::GaussianLinear {
                    bandwidths: bandwidths.clone().unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.5, 1.0]),
                },
                (CdeSection::KnnMixture { neighbors, components }, _) => CdeSpec::KnnMixture {
                    neighbors: neighbors.clone().unwrap_or_else(|| vec![100, 200, 400]),
                    components: components.unwrap_or(2),
                },
            };
        }
        if let Some(s) = self.diagnostics.alpha_step {
            spec.alpha_step = s;
        }
        if let Some(b) = &self.diagnostics.bandwidths {
            spec.diagnostic_bandwidths = b.clone();
        }
        if let Some(r) = self.partition.restarts {
            spec.restarts = r;
        }
        spec.score = self.conformal.score.map(|s| match s {
            Score::Hpd => ScoreFunction::Hpd,
            Score::CdeValue => ScoreFunction::CdeValue,
            Score::AbsResidual => ScoreFunction::AbsResidual,
        });
        if let Some(e) = self.conformal.min_epsilon {
            spec.calibration.min_epsilon = e;
        }
        spec.validate()?;

        let source = match (&d.input, &d.test_input) {
            (Some(train), Some(test)) => Source::Files { train: train.clone(), test: test.clone() },
            (Some(_), None) | (None, Some(_)) => {
                return Err(CliError::Config("`data.input` and `data.test_input` go together".into()))
            }
            (None, None) => {
                let mut g = if example2 {
                    GeneratorConfig::example2_surrogate(36_000, seed)
                } else {
                    GeneratorConfig::example1(4_000, seed)
                };
                g.n = d.n.unwrap_or(g.n);
                g.nuisance_dims = d.nuisance_dims.unwrap_or(0);
                g.lambda_noise = d.lambda_noise.unwrap_or(g.lambda_noise);
                g.theta_noise = d.theta_noise.unwrap_or(g.theta_noise);
                g.spread = match d.spread.unwrap_or(Spread::Variance) {
                    Spread::Variance => MixtureSpread::Variance,
                    Spread::Sd => MixtureSpread::StdDev,
                };
                g.kind = if example2 { GeneratorKind::Example2Surrogate } else { GeneratorKind::Example1 };
                g.validate()?;
                let n_test = d.n_test.unwrap_or(if example2 { 4_500 } else { 5_000 });
                if n_test == 0 {
                    return Err(CliError::Config("`data.n_test` must be positive".into()));
                }
                Source::Generated { train: g, n_test }
            }
        };

        let levels = self.eval.levels.clone().unwrap_or_else(|| {
            if example2 {
                vec![0.2, 0.4, 0.6, 0.8]
            } else {
                vec![0.5, 0.8, 0.9]
            }
        });
        if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(CliError::Config(format!("nominal level {l} outside (0, 1)")));
        }
        let bins = self.eval.bins.unwrap_or(20);
        if bins < 2 {
            return Err(CliError::Config("`eval.bins` must be at least 2".into()));
        }
        Ok(Resolved { source, spec, levels, bins, stratify: self.eval.stratify })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_example1() {
        let r = ExperimentConfig::parse("").unwrap().resolve().unwrap();
        assert_eq!(r.spec, PipelineSpec::example1(PartitionMethod::Md, 5, 1));
        assert_eq!(r.source, Source::Generated { train: GeneratorConfig::example1(4000, 1), n_test: 5000 });
        assert_eq!(r.levels, vec![0.5, 0.8, 0.9]);
    }

    #[test]
    fn example2_defaults_and_overrides() {
        let text = r#"
            seed = 7
            [data]
            generator = "example2_surrogate"
            n = 9000
            [partition]
            method = "cd"
            [cde]
            kind = "knn_mixture"
            neighbors = [50, 100]
            [conformal]
            score = "hpd"
        "#;
        let r = ExperimentConfig::parse(text).unwrap().resolve().unwrap();
        assert_eq!(r.spec.k, 3);
        assert_eq!(r.spec.method, PartitionMethod::Cd);
        assert_eq!(r.spec.cde, CdeSpec::KnnMixture { neighbors: vec![50, 100], components: 2 });
        assert_eq!(r.spec.score, Some(ScoreFunction::Hpd));
        assert_eq!(r.spec.seed, 7);
        assert_eq!(r.levels, vec![0.2, 0.4, 0.6, 0.8]);
        match r.source {
            Source::Generated { train, n_test } => {
                assert_eq!((train.kind, train.n, train.seed, n_test), (GeneratorKind::Example2Surrogate, 9000, 7, 4500))
            }
            _ => panic!(),
        }
    }

    #[test]
    fn unknown_keys_and_ids_are_rejected() {
        let e = ExperimentConfig::parse("[partition]\nmethd = \"md\"\n").unwrap_err();
        assert!(e.to_string().contains("methd"), "{e}");
        let e = ExperimentConfig::parse("[data]\ngenerator = \"galaxies\"\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("example1") && msg.contains("example2_surrogate"), "{msg}");
        assert_eq!(e.exit_code(), 2);
        assert!(ExperimentConfig::parse("[split]\ntrain = 0.9\nvalidation = 0.9\n").unwrap().resolve().is_err());
        assert!(ExperimentConfig::parse("[eval]\nlevels = [1.5]\n").unwrap().resolve().is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let text = "seed = 3\n[partition]\nmethod = \"global\"\n[cde]\nkind = \"gaussian_linear\"\nbandwidths = [0.5]\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }
}
