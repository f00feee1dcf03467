//! Versioned text format for fitted artifacts.
//!
//! Every file starts with `mdsplit <kind> <version>`, followed by one
//! `key value...` line per field in a fixed order. Vectors are written as
//! `key n v1 ... vn`. Reals use the shortest representation that parses
//! back to the same bits, so reading a written artifact gives an equal one.

use std::fs;
use std::path::{Path, PathBuf};

use mdsplit_core::cde::{CdeModel, CdeVariant, EmSettings, GaussianLinearParams, Grid, KnnMixtureParams};
use mdsplit_core::conformal::{CalibratedScores, LocalConformalPredictor, ScoreFunction};
use mdsplit_core::diagnostics::{AlphaGrid, CoverageEstimator};
use mdsplit_core::hpd::{HpdEvaluator, HpdMethod};
use mdsplit_core::math::Standardizer;
use mdsplit_core::partition::{Embedding, PartitionMethod, PartitionModel};

use crate::error::{CliError, Result};
use crate::io::num;

pub const VERSION: u32 = 1;

struct Writer(String);

impl Writer {
    fn new(kind: &str) -> Self {
        Writer(format!("mdsplit {kind} {VERSION}\n"))
    }

    fn line(&mut self, key: &str, values: &[String]) {
        self.0.push_str(key);
        for v in values {
            self.0.push(' ');
            self.0.push_str(v);
        }
        self.0.push('\n');
    }

    fn word(&mut self, key: &str, v: &str) {
        self.line(key, &[v.to_string()]);
    }

    fn int(&mut self, key: &str, v: usize) {
        self.line(key, &[v.to_string()]);
    }

    fn real(&mut self, key: &str, v: f64) {
        self.line(key, &[num(v)]);
    }

    fn reals(&mut self, key: &str, vs: &[f64]) {
        let mut out = Vec::with_capacity(vs.len() + 1);
        out.push(vs.len().to_string());
        out.extend(vs.iter().map(|&v| num(v)));
        self.line(key, &out);
    }

    fn grid(&mut self, key: &str, g: &Grid) {
        self.line(key, &[num(g.min()), num(g.max()), g.len().to_string()]);
    }

    fn standardizer(&mut self, prefix: &str, s: &Standardizer) {
        self.reals(&format!("{prefix}.mean"), &s.mean);
        self.reals(&format!("{prefix}.scale"), &s.scale);
    }
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    path: PathBuf,
    line: u64,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str, path: &Path, kind: &str) -> Result<Self> {
        let mut r = Reader { lines: text.lines().enumerate(), path: path.to_path_buf(), line: 0 };
        let head = r.raw()?;
        let expected = format!("mdsplit {kind} {VERSION}");
        if head.trim() != expected {
            return Err(r.err(format!("expected header `{expected}`, found `{}`", head.trim())));
        }
        Ok(r)
    }

    fn err(&self, message: impl Into<String>) -> CliError {
        CliError::parse(&self.path, self.line, message)
    }

    fn raw(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i as u64 + 1;
                Ok(l)
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    fn fields(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.raw()?;
        let mut it = l.split_ascii_whitespace();
        match it.next() {
            Some(k) if k == key => Ok(it.collect()),
            other => Err(self.err(format!("expected `{key}`, found `{}`", other.unwrap_or("")))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("`{key}`: cannot parse `{s}`")))
    }

    fn single(&mut self, key: &str) -> Result<&'a str> {
        let f = self.fields(key)?;
        if f.len() != 1 {
            return Err(self.err(format!("`{key}` takes one value, found {}", f.len())));
        }
        Ok(f[0])
    }

    fn word(&mut self, key: &str) -> Result<&'a str> {
        self.single(key)
    }

    fn int(&mut self, key: &str) -> Result<usize> {
        let s = self.single(key)?;
        self.parse(key, s)
    }

    fn real(&mut self, key: &str) -> Result<f64> {
        let s = self.single(key)?;
        self.parse(key, s)
    }

    fn reals(&mut self, key: &str) -> Result<Vec<f64>> {
        let f = self.fields(key)?;
        let n: usize = match f.first() {
            Some(s) => self.parse(key, s)?,
            None => return Err(self.err(format!("`{key}` is missing its length"))),
        };
        if f.len() != n + 1 {
            return Err(self.err(format!("`{key}` declares {n} values, found {}", f.len() - 1)));
        }
        f[1..].iter().map(|s| self.parse(key, s)).collect()
    }

    fn grid(&mut self, key: &str) -> Result<Grid> {
        let f = self.fields(key)?;
        if f.len() != 3 {
            return Err(self.err(format!("`{key}` takes min, max and point count")));
        }
        let g = Grid::new(self.parse(key, f[0])?, self.parse(key, f[1])?, self.parse(key, f[2])?);
        g.map_err(|e| self.err(e.to_string()))
    }

    fn standardizer(&mut self, prefix: &str) -> Result<Standardizer> {
        let mean = self.reals(&format!("{prefix}.mean"))?;
        let scale = self.reals(&format!("{prefix}.scale"))?;
        if mean.len() != scale.len() {
            return Err(self.err("standardizer mean and scale lengths differ"));
        }
        Ok(Standardizer { mean, scale })
    }

    fn check<T>(&self, r: mdsplit_core::Result<T>) -> Result<T> {
        r.map_err(|e| self.err(e.to_string()))
    }

    fn finish(mut self) -> Result<()> {
        match self.lines.find(|(_, l)| !l.trim().is_empty()) {
            Some((i, l)) => {
                self.line = i as u64 + 1;
                Err(self.err(format!("trailing content `{l}`")))
            }
            None => Ok(()),
        }
    }
}

fn put_cde(w: &mut Writer, m: &CdeModel) {
    w.word("cde.kind", m.tag());
    w.grid("cde.grid", m.grid());
    match m.variant() {
        CdeVariant::GaussianLinear(p) => {
            w.real("cde.intercept", p.intercept);
            w.reals("cde.coefficients", &p.coefficients);
            w.real("cde.bandwidth", p.bandwidth);
            w.standardizer("cde.standardizer", &p.standardizer);
            w.reals("cde.smoother_points", &p.smoother_points);
            w.reals("cde.squared_residuals", &p.squared_residuals);
            w.real("cde.variance_floor", p.variance_floor);
        }
        CdeVariant::KnnMixture(p) => {
            w.int("cde.neighbors", p.neighbors);
            w.int("cde.components", p.components);
            w.int("cde.em.max_iterations", p.em.max_iterations);
            w.real("cde.em.tolerance", p.em.tolerance);
            w.real("cde.em.variance_floor", p.em.variance_floor);
            w.standardizer("cde.standardizer", &p.standardizer);
            w.reals("cde.points", &p.points);
            w.reals("cde.responses", &p.responses);
        }
    }
}

fn get_cde(r: &mut Reader) -> Result<CdeModel> {
    let kind = r.word("cde.kind")?;
    let grid = r.grid("cde.grid")?;
    let variant = match kind {
        "gaussian_linear" => CdeVariant::GaussianLinear(GaussianLinearParams {
            intercept: r.real("cde.intercept")?,
            coefficients: r.reals("cde.coefficients")?,
            bandwidth: r.real("cde.bandwidth")?,
            standardizer: r.standardizer("cde.standardizer")?,
            smoother_points: r.reals("cde.smoother_points")?,
            squared_residuals: r.reals("cde.squared_residuals")?,
            variance_floor: r.real("cde.variance_floor")?,
        }),
        "knn_mixture" => CdeVariant::KnnMixture(KnnMixtureParams {
            neighbors: r.int("cde.neighbors")?,
            components: r.int("cde.components")?,
            em: EmSettings {
                max_iterations: r.int("cde.em.max_iterations")?,
                tolerance: r.real("cde.em.tolerance")?,
                variance_floor: r.real("cde.em.variance_floor")?,
            },
            standardizer: r.standardizer("cde.standardizer")?,
            points: r.reals("cde.points")?,
            responses: r.reals("cde.responses")?,
        }),
        other => return Err(r.err(format!("unknown cde kind `{other}`"))),
    };
    r.check(CdeModel::new(variant, grid))
}

fn put_estimator(w: &mut Writer, e: &CoverageEstimator) {
    w.real("estimator.bandwidth", e.bandwidth());
    w.real("estimator.alpha_step", e.alpha().step());
    w.standardizer("estimator.standardizer", e.standardizer());
    w.reals("estimator.points", e.points());
    w.reals("estimator.hpd", e.hpd_values());
}

fn get_estimator(r: &mut Reader) -> Result<CoverageEstimator> {
    let bandwidth = r.real("estimator.bandwidth")?;
    let step = r.real("estimator.alpha_step")?;
    let alpha = r.check(AlphaGrid::new(step))?;
    let standardizer = r.standardizer("estimator.standardizer")?;
    let points = r.reals("estimator.points")?;
    let hpd = r.reals("estimator.hpd")?;
    r.check(CoverageEstimator::new(bandwidth, standardizer, points, hpd, alpha))
}

fn put_hpd(w: &mut Writer, h: &HpdEvaluator) {
    w.word("hpd.method", h.method.name());
    w.grid("hpd.grid", &h.grid);
    w.int("hpd.resolution", h.resolution);
}

fn get_hpd(r: &mut Reader) -> Result<HpdEvaluator> {
    let method = match r.word("hpd.method")? {
        m if m == HpdMethod::AnalyticGaussian.name() => HpdMethod::AnalyticGaussian,
        m if m == HpdMethod::Grid.name() => HpdMethod::Grid,
        other => return Err(r.err(format!("unknown hpd method `{other}`"))),
    };
    Ok(HpdEvaluator { method, grid: r.grid("hpd.grid")?, resolution: r.int("hpd.resolution")? })
}

fn put_partition(w: &mut Writer, p: &PartitionModel) {
    w.word("partition.method", p.method().name());
    match &p.embedding {
        Embedding::Global => {}
        Embedding::Euclidean(s) => w.standardizer("partition.standardizer", s),
        Embedding::ModelDiagnostic(e) => put_estimator(w, e),
        Embedding::Profile(g) => w.grid("partition.grid", g),
    }
    w.int("partition.k", p.centroids.len());
    for c in &p.centroids {
        w.reals("partition.centroid", c);
    }
}

fn get_partition(r: &mut Reader) -> Result<PartitionModel> {
    let method = r.word("partition.method")?;
    let method = r.check(PartitionMethod::parse(method))?;
    let embedding = match method {
        PartitionMethod::Global => Embedding::Global,
        PartitionMethod::Euclidean => Embedding::Euclidean(r.standardizer("partition.standardizer")?),
        PartitionMethod::Md => Embedding::ModelDiagnostic(get_estimator(r)?),
        PartitionMethod::Cd => Embedding::Profile(r.grid("partition.grid")?),
    };
    let k = r.int("partition.k")?;
    let centroids = (0..k).map(|_| r.reals("partition.centroid")).collect::<Result<Vec<_>>>()?;
    r.check(PartitionModel::new(embedding, centroids))
}

fn put_predictor(w: &mut Writer, p: &LocalConformalPredictor) {
    put_cde(w, &p.cde);
    put_hpd(w, &p.hpd);
    put_partition(w, &p.partition);
    w.word("score", p.score.name());
    w.grid("region.grid", &p.grid);
    w.int("groups", p.groups.len());
    for g in &p.groups {
        w.reals("group.scores", g.values());
    }
}

fn get_predictor(r: &mut Reader) -> Result<LocalConformalPredictor> {
    let cde = get_cde(r)?;
    let hpd = get_hpd(r)?;
    let partition = get_partition(r)?;
    let score = r.word("score")?;
    let score = r.check(ScoreFunction::parse(score))?;
    let grid = r.grid("region.grid")?;
    let k = r.int("groups")?;
    if k != partition.k() {
        return Err(r.err(format!("{k} calibration groups for a partition with {}", partition.k())));
    }
    let mut groups = Vec::with_capacity(k);
    for _ in 0..k {
        let v = r.reals("group.scores")?;
        groups.push(r.check(CalibratedScores::new(v))?);
    }
    Ok(LocalConformalPredictor { cde, hpd, partition, score, groups, grid })
}

macro_rules! artifact {
    ($to:ident, $from:ident, $kind:literal, $ty:ty, $put:ident, $get:ident) => {
        pub fn $to(value: &$ty) -> String {
            let mut w = Writer::new($kind);
            $put(&mut w, value);
            w.0
        }

        pub fn $from(text: &str, path: &Path) -> Result<$ty> {
            let mut r = Reader::new(text, path, $kind)?;
            let v = $get(&mut r)?;
            r.finish()?;
            Ok(v)
        }
    };
}

artifact!(cde_to_string, cde_from_str, "cde", CdeModel, put_cde, get_cde);
artifact!(estimator_to_string, estimator_from_str, "estimator", CoverageEstimator, put_estimator, get_estimator);
artifact!(partition_to_string, partition_from_str, "partition", PartitionModel, put_partition, get_partition);
artifact!(predictor_to_string, predictor_from_str, "predictor", LocalConformalPredictor, put_predictor, get_predictor);

pub fn save(text: &str, path: &Path) -> Result<()> {
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn load<T>(path: &Path, parse: impl Fn(&str, &Path) -> Result<T>) -> Result<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdsplit_core::data::{generate, GeneratorConfig};
    use mdsplit_core::pipeline::{fit_pipeline, CdeSpec, PipelineSpec};

    fn p() -> &'static Path {
        Path::new("m.txt")
    }

    #[test]
    fn fitted_artifacts_round_trip() {
        let d = generate(&GeneratorConfig::example1(800, 2)).unwrap();
        for m in PartitionMethod::ALL {
            let fit = fit_pipeline(&d, &PipelineSpec::example1(m, 3, 2)).unwrap();
            let pred = &fit.predictor;
            assert_eq!(&predictor_from_str(&predictor_to_string(pred), p()).unwrap(), pred);
            assert_eq!(&partition_from_str(&partition_to_string(&pred.partition), p()).unwrap(), &pred.partition);
            assert_eq!(&cde_from_str(&cde_to_string(&pred.cde), p()).unwrap(), &pred.cde);
            if let Some(e) = &fit.estimator {
                assert_eq!(&estimator_from_str(&estimator_to_string(e), p()).unwrap(), e);
            }
        }
    }

    #[test]
    fn knn_model_round_trips() {
        let d = generate(&GeneratorConfig::example2_surrogate(900, 4)).unwrap();
        let spec = PipelineSpec {
            cde: CdeSpec::KnnMixture { neighbors: vec![20, 40], components: 2 },
            ..PipelineSpec::example2(PartitionMethod::Cd, 2, 4)
        };
        let pred = fit_pipeline(&d, &spec).unwrap().predictor;
        let text = predictor_to_string(&pred);
        assert_eq!(predictor_from_str(&text, p()).unwrap(), pred);
        assert_eq!(predictor_to_string(&predictor_from_str(&text, p()).unwrap()), text);
    }

    #[test]
    fn malformed_files_name_the_line() {
        let d = generate(&GeneratorConfig::example1(400, 1)).unwrap();
        let fit = fit_pipeline(&d, &PipelineSpec::example1(PartitionMethod::Euclidean, 2, 1)).unwrap();
        let text = partition_to_string(&fit.predictor.partition);
        assert!(matches!(partition_from_str("mdsplit partition 9\n", p()), Err(CliError::Parse { line: 1, .. })));
        let broken = text.replacen("partition.k 2", "partition.k 3", 1);
        assert!(matches!(partition_from_str(&broken, p()), Err(CliError::Parse { .. })));
        let bad = text.replacen("partition.method euclidean", "partition.method fancy", 1);
        assert!(matches!(partition_from_str(&bad, p()), Err(CliError::Parse { line: 2, .. })));
        let extra = format!("{text}junk\n");
        assert!(partition_from_str(&extra, p()).is_err());
    }
}
