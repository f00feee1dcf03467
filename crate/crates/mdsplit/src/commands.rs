//! The three subcommands. Every output file is a function of the config
//! alone, so repeated runs write identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use mdsplit_core::conformal::LocalConformalPredictor;
use mdsplit_core::data::{self, Dataset};
use mdsplit_core::diagnostics::CoverageEstimator;
use mdsplit_core::eval::{self, CoverageReport, TestEvaluation};
use mdsplit_core::hpd::HpdEvaluator;
use mdsplit_core::partition::PartitionMethod;
use mdsplit_core::pipeline::{self, PipelineSpec};
use mdsplit_core::Error;
use serde::Serialize;

use crate::config::{ExperimentConfig, Resolved, Source, Stratify};
use crate::error::{CliError, Result};
use crate::{format, io, report};

pub const DATA_FILE: &str = "data.csv";
pub const TEST_FILE: &str = "test.csv";
pub const CDE_FILE: &str = "cde.model";
pub const ESTIMATOR_FILE: &str = "estimator.model";
pub const PARTITION_FILE: &str = "partition.model";
pub const PREDICTOR_FILE: &str = "predictor.model";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(CliError::io(path))
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(CliError::io(out))
}

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'static str,
    generator: &'static str,
    n: usize,
    seed: u64,
    nuisance_dims: usize,
    lambda_noise: f64,
    theta_noise: f64,
    config: &'a ExperimentConfig,
}

/// Writes the generated dataset and a `.provenance` sidecar holding the
/// config and the seed. Returns the dataset path.
pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let resolved = cfg.resolve()?;
    let Source::Generated { train, .. } = &resolved.source else {
        return Err(CliError::Config("simulate needs a generator, not `data.input`".into()));
    };
    let dataset = data::generate(train)?;
    create_dir(out)?;
    let path = out.join(DATA_FILE);
    io::write_dataset(&dataset, &path)?;
    let sidecar = Provenance {
        command: "simulate",
        generator: train.kind.name(),
        n: train.n,
        seed: train.seed,
        nuisance_dims: train.nuisance_dims,
        lambda_noise: train.lambda_noise,
        theta_noise: train.theta_noise,
        config: cfg,
    };
    let text = toml::to_string(&sidecar).expect("provenance serializes");
    write(&out.join(format!("{DATA_FILE}.provenance")), &text)?;
    Ok(path)
}

/// Training and test data for a resolved config.
fn load_data(resolved: &Resolved) -> Result<(Dataset, Dataset)> {
    match &resolved.source {
        Source::Generated { train, n_test } => Ok((
            data::generate(train)?,
            data::generate(&pipeline::test_config(train, *n_test))?,
        )),
        Source::Files { train, test } => Ok((io::read_dataset(train)?, io::read_dataset(test)?)),
    }
}

/// Reads `path` when resuming and it exists, otherwise computes the value
/// and writes it.
fn staged<T>(
    path: &Path,
    resume: bool,
    parse: impl Fn(&str, &Path) -> Result<T>,
    render: impl Fn(&T) -> String,
    compute: impl FnOnce() -> Result<T>,
) -> Result<T> {
    if resume && path.exists() {
        return format::load(path, parse);
    }
    let v = compute()?;
    format::save(&render(&v), path)?;
    Ok(v)
}

/// Fits (or, with `resume`, reloads) every stage and saves the artifacts.
pub fn fit_staged(
    data: &Dataset,
    spec: &PipelineSpec,
    out: &Path,
    resume: bool,
) -> Result<(LocalConformalPredictor, Option<CoverageEstimator>)> {
    let split = pipeline::split_for(data, spec)?;
    let cde = staged(&out.join(CDE_FILE), resume, format::cde_from_str, format::cde_to_string, || {
        pipeline::fit_cde(data, &split, spec).map_err(|e| Error::stage("cde")(e).into())
    })?;
    let hpd = HpdEvaluator::for_model(&cde);
    let estimator = match spec.method {
        PartitionMethod::Md => Some(staged(
            &out.join(ESTIMATOR_FILE),
            resume,
            format::estimator_from_str,
            format::estimator_to_string,
            || pipeline::fit_diagnostics(data, &split, spec, &cde, &hpd).map_err(|e| Error::stage("diagnostics")(e).into()),
        )?),
        _ => None,
    };
    let partition = staged(&out.join(PARTITION_FILE), resume, format::partition_from_str, format::partition_to_string, || {
        pipeline::fit_partition(data, &split.calibration, spec, &cde, &hpd, estimator.clone())
            .map_err(|e| Error::stage("partition")(e).into())
    })?;
    let predictor = staged(&out.join(PREDICTOR_FILE), resume, format::predictor_from_str, format::predictor_to_string, || {
        pipeline::calibrate(data, &split, spec, cde.clone(), hpd, partition.clone())
            .map_err(|e| Error::stage("calibrate")(e).into())
    })?;
    Ok((predictor, estimator))
}

/// The stratification used for headline numbers: bins for one feature,
/// true groups when labelled, clusters otherwise.
pub fn stratified(ev: &TestEvaluation, test: &Dataset, resolved: &Resolved, k: usize) -> Result<CoverageReport> {
    let mode = resolved.stratify.unwrap_or(if test.n_features() == 1 {
        Stratify::Bins
    } else if test.group_labels().is_some() {
        Stratify::Groups
    } else {
        Stratify::Clusters
    });
    Ok(match mode {
        Stratify::Bins => ev.by_bins(test, resolved.bins)?,
        Stratify::Groups => ev.by_true_groups(test)?,
        Stratify::Clusters => ev.by_clusters(k),
    })
}

fn write_report(out: &Path, name: &str, title: &str, r: &CoverageReport, heatmap: bool) -> Result<()> {
    write(&out.join(format!("coverage_{name}.csv")), &report::coverage_csv(r))?;
    write(&out.join(format!("coverage_{name}.svg")), &report::coverage_svg(r, title))?;
    if heatmap {
        write(&out.join(format!("deviation_{name}.svg")), &report::deviation_heatmap_svg(r, title))?;
    }
    Ok(())
}

fn summary_lines(method: &str, k: usize, r: &CoverageReport, marginal: &CoverageReport) -> String {
    let mut s = String::new();
    for (j, &level) in r.levels.iter().enumerate() {
        s.push_str(&format!(
            "{method} k={k} level={} marginal={} mean_dev={} max_dev={}\n",
            io::num(level),
            marginal.strata[0].achieved(j).map_or(String::new(), io::num),
            io::num(r.mean_deviation(j)),
            io::num(r.max_deviation(j)),
        ));
    }
    s
}

/// Output of [`run`]: the fitted predictor and its test evaluation.
pub struct RunOutput {
    pub predictor: LocalConformalPredictor,
    pub evaluation: TestEvaluation,
    pub report: CoverageReport,
}

pub fn run(cfg: &ExperimentConfig, out: &Path, resume: bool) -> Result<RunOutput> {
    let resolved = cfg.resolve()?;
    create_dir(out)?;
    let (data, test) = load_data(&resolved)?;
    if let Source::Generated { .. } = resolved.source {
        io::write_dataset(&data, &out.join(DATA_FILE))?;
        io::write_dataset(&test, &out.join(TEST_FILE))?;
    }
    let (predictor, estimator) = fit_staged(&data, &resolved.spec, out, resume)?;

    let ev = eval::evaluate(&predictor, &test, &resolved.levels).map_err(Error::stage("evaluate"))?;
    let marginal = ev.marginal();
    write_report(out, "marginal", "marginal coverage", &marginal, false)?;
    if test.n_features() == 1 {
        write_report(out, "bins", "coverage by feature bin", &ev.by_bins(&test, resolved.bins)?, true)?;
    }
    if test.group_labels().is_some() {
        write_report(out, "groups", "coverage by true group", &ev.by_true_groups(&test)?, true)?;
    }
    write_report(out, "clusters", "coverage by assigned cluster", &ev.by_clusters(predictor.k()), true)?;

    let regions = (0..test.len())
        .map(|i| Ok((i, eval::RegionPredictor::regions(&predictor, test.row(i), &resolved.levels)?)))
        .collect::<Result<Vec<_>>>()?;
    write(&out.join("regions.csv"), &report::regions_csv(&regions))?;
    if let Some(est) = &estimator {
        let profiles = (0..test.len())
            .map(|i| Ok((i, est.profile(test.row(i))?.profile.values)))
            .collect::<Result<Vec<_>>>()?;
        write(&out.join("profiles.csv"), &report::profiles_csv(est.alpha().values(), &profiles))?;
    }

    let headline = stratified(&ev, &test, &resolved, predictor.k())?;
    let mut summary = summary_lines(resolved.spec.method.name(), predictor.k(), &headline, &marginal);
    summary.push_str(&format!("regions_touching_grid_boundary={}\n", ev.touched_boundary));
    write(&out.join("summary.txt"), &summary)?;
    Ok(RunOutput { predictor, evaluation: ev, report: headline })
}

/// Runs every config on one shared dataset and test set and writes the
/// comparison table plus each method's stratified report.
pub fn compare(cfgs: &[ExperimentConfig], out: &Path) -> Result<Vec<(String, CoverageReport)>> {
    let Some(first) = cfgs.first() else {
        return Err(CliError::Config("compare needs at least one config".into()));
    };
    let resolved: Vec<Resolved> = cfgs.iter().map(|c| c.resolve()).collect::<Result<_>>()?;
    let base = &resolved[0];
    for (c, r) in cfgs.iter().zip(&resolved).skip(1) {
        if r.source != base.source || c.data != first.data {
            return Err(CliError::Config("compared configs must share the same data section and seed".into()));
        }
        if r.levels != base.levels {
            return Err(CliError::Config("compared configs must share nominal levels".into()));
        }
    }
    create_dir(out)?;
    let (data, test) = load_data(base)?;

    let mut reports = Vec::new();
    let mut summary = String::new();
    for r in &resolved {
        let fit = pipeline::fit_pipeline(&data, &r.spec)?;
        let ev = eval::evaluate(&fit.predictor, &test, &r.levels).map_err(Error::stage("evaluate"))?;
        let rep = stratified(&ev, &test, r, fit.predictor.k())?;
        let mut label = r.spec.method.name().to_string();
        let same = reports.iter().filter(|(l, _): &&(String, CoverageReport)| l.split('#').next() == Some(&label)).count();
        if same > 0 {
            label = format!("{label}#{}", same + 1);
        }
        write(&out.join(format!("coverage_{label}.csv")), &report::coverage_csv(&rep))?;
        summary.push_str(&summary_lines(&label, fit.predictor.k(), &rep, &ev.marginal()));
        reports.push((label, rep));
    }
    write(&out.join("comparison.csv"), &report::comparison_csv(&eval::compare(&reports)))?;
    write(&out.join("summary.txt"), &summary)?;
    Ok(reports)
}
