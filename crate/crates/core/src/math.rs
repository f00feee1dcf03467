//! Numerical helpers shared across the crate: normal distribution
//! functions, summary statistics, isotonic regression, least squares and
//! Gaussian kernel weights.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const SQRT_2: f64 = core::f64::consts::SQRT_2;
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * exp(-0.5 * z * z)
}

/// Standard normal CDF, accurate in both tails.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Density of `N(mean, sd^2)` at `y`.
#[inline]
pub fn gaussian_density(y: f64, mean: f64, sd: f64) -> f64 {
    normal_pdf((y - mean) / sd) / sd
}

/// Standard normal quantile (Wichura, AS 241, PPND16).
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = sqrt(-ln(tail));
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_879e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Nondecreasing least-squares fit with unit weights (pool adjacent
/// violators).
pub fn pava(values: &[f64]) -> Vec<f64> {
    // Each block: (sum, count).
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (sum, count) in blocks {
        let level = sum / count as f64;
        out.extend(core::iter::repeat_n(level, count));
    }
    out
}

/// Kolmogorov distance between the empirical CDF of `samples` and the CDF
/// `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        worst = worst.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    worst
}

/// Kolmogorov distance from the uniform distribution on [0, 1].
pub fn ks_uniform(samples: &[f64]) -> f64 {
    ks_distance(samples, |x| x.clamp(0.0, 1.0))
}

/// Ordinary least squares via Householder QR.
///
/// `design` is row-major with `cols` columns. Returns the coefficient
/// vector or a fit error when the design is (numerically) rank deficient.
pub fn least_squares(design: &[f64], cols: usize, target: &[f64]) -> Result<Vec<f64>> {
    let rows = target.len();
    if cols == 0 || design.len() != rows * cols || rows < cols {
        return Err(Error::Fit("least squares: inconsistent design shape".into()));
    }
    // Column-major working copy.
    let mut a = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            a[j * rows + i] = design[i * cols + j];
        }
    }
    let mut b = target.to_vec();
    let mut diag = vec![0.0; cols];
    let scale = (0..cols)
        .map(|j| sqrt(a[j * rows..(j + 1) * rows].iter().map(|v| v * v).sum()))
        .fold(0.0_f64, f64::max);
    for j in 0..cols {
        let col = &a[j * rows..(j + 1) * rows];
        let norm = sqrt(col[j..].iter().map(|v| v * v).sum());
        if !(norm > 1e-10 * scale) {
            return Err(Error::Fit("singular design matrix".into()));
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = col[j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        diag[j] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        for k in j + 1..cols {
            let c = &mut a[k * rows + j..(k + 1) * rows];
            let dot: f64 = v.iter().zip(c.iter()).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (ci, vi) in c.iter_mut().zip(&v) {
                *ci -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[j..]).map(|(p, q)| p * q).sum();
        let f = 2.0 * dot / vnorm2;
        for (bi, vi) in b[j..].iter_mut().zip(&v) {
            *bi -= f * vi;
        }
    }
    let mut coef = vec![0.0; cols];
    for j in (0..cols).rev() {
        let mut s = b[j];
        for k in j + 1..cols {
            s -= a[k * rows + j] * coef[k];
        }
        coef[j] = s / diag[j];
    }
    Ok(coef)
}

/// Per-dimension centering and scaling constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits mean and sample standard deviation of each column of a
    /// row-major matrix. Constant columns get unit scale.
    pub fn fit(features: &[f64], n_features: usize) -> Self {
        let n = if n_features == 0 {
            0
        } else {
            features.len() / n_features
        };
        let mut mean = vec![0.0; n_features];
        let mut scale = vec![1.0; n_features];
        for j in 0..n_features {
            let col: Vec<f64> = (0..n).map(|i| features[i * n_features + j]).collect();
            mean[j] = if n > 0 { self::mean(&col) } else { 0.0 };
            let sd = sqrt(variance(&col));
            if sd.is_finite() && sd > 1e-300 {
                scale[j] = sd;
            }
        }
        Standardizer { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, v), (m, s)) in out.iter_mut().zip(x).zip(self.mean.iter().zip(&self.scale)) {
            *o = (v - m) / s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }

    /// Standardizes every row of a row-major matrix.
    pub fn apply_rows(&self, features: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; features.len()];
        for (row, dst) in features.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.apply_into(row, dst);
        }
        out
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Squared distances from `query` to every row of the row-major `points`.
pub fn squared_distances(query: &[f64], points: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let d = query.len();
    if d == 0 {
        out.resize(points.len().max(1), 0.0);
        return;
    }
    out.extend(points.chunks_exact(d).map(|row| squared_distance(query, row)));
}

/// Gaussian kernel weights `exp(-d2 / (2 h^2))`, shifted by the smallest
/// squared distance so that the largest weight is exactly one. The shift
/// cancels in any normalized average. Returns the weight total, which is
/// not finite when some distance is not finite.
pub fn gaussian_weights(d2: &[f64], bandwidth: f64, out: &mut Vec<f64>) -> f64 {
    out.clear();
    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        out.resize(d2.len(), 0.0);
        return f64::NAN;
    }
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut total = 0.0;
    out.extend(d2.iter().map(|&v| {
        let w = exp(-(v - min) * inv);
        total += w;
        w
    }));
    total
}
