use alloc::vec;
use alloc::vec::Vec;

use super::{Component, Mixture};
use crate::math;

/// Stopping rule and variance floor for the per-query EM fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSettings {
    pub max_iterations: usize,
    /// Relative change in log-likelihood below which EM stops.
    pub tolerance: f64,
    pub variance_floor: f64,
}

impl Default for EmSettings {
    fn default() -> Self {
        EmSettings {
            max_iterations: 200,
            tolerance: 1e-8,
            variance_floor: 1e-12,
        }
    }
}

/// Maximum-likelihood `m`-component Gaussian mixture for `values` by EM.
///
/// Initialization is deterministic: component `j` starts at the
/// `(j + 0.5) / m` sample quantile with variance `var / m^2` and equal
/// weight. Components are returned sorted by mean.
pub fn fit_gaussian_mixture(values: &[f64], m: usize, settings: &EmSettings) -> Mixture {
    assert!(!values.is_empty() && m > 0, "EM needs data and at least one component");
    let n = values.len();
    let floor = settings.variance_floor;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = math::mean(values);
    let pop_var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;

    let mut weights = vec![1.0 / m as f64; m];
    let mut means: Vec<f64> = (0..m)
        .map(|j| math::quantile_sorted(&sorted, (j as f64 + 0.5) / m as f64))
        .collect();
    let mut vars = vec![(pop_var / (m * m) as f64).max(floor); m];

    let mut resp = vec![0.0; n * m];
    let mut logs = vec![0.0; m];
    let mut prev_ll = f64::NEG_INFINITY;
    for iteration in 0..settings.max_iterations {
        // E-step.
        let consts: Vec<f64> = (0..m)
            .map(|j| math::ln(weights[j]) - 0.5 * math::ln(vars[j]) - math::LN_SQRT_2PI)
            .collect();
        let mut ll = 0.0;
        for (i, &y) in values.iter().enumerate() {
            let mut top = f64::NEG_INFINITY;
            for j in 0..m {
                let z = y - means[j];
                logs[j] = consts[j] - 0.5 * z * z / vars[j];
                top = top.max(logs[j]);
            }
            let s: f64 = logs.iter().map(|l| math::exp(l - top)).sum();
            let lse = top + math::ln(s);
            ll += lse;
            for j in 0..m {
                resp[i * m + j] = math::exp(logs[j] - lse);
            }
        }
        if iteration > 0 && (ll - prev_ll).abs() <= settings.tolerance * prev_ll.abs() {
            break;
        }
        prev_ll = ll;

        // M-step.
        for j in 0..m {
            let nj: f64 = (0..n).map(|i| resp[i * m + j]).sum();
            if nj <= 1e-12 {
                weights[j] = 0.0;
                continue;
            }
            let mu = (0..n).map(|i| resp[i * m + j] * values[i]).sum::<f64>() / nj;
            let var = (0..n)
                .map(|i| {
                    let z = values[i] - mu;
                    resp[i * m + j] * z * z
                })
                .sum::<f64>()
                / nj;
            means[j] = mu;
            vars[j] = var.max(floor);
            weights[j] = nj / n as f64;
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
    }

    let mut components: Vec<Component> = (0..m)
        .map(|j| Component {
            weight: weights[j],
            mean: means[j],
            sd: math::sqrt(vars[j]),
        })
        .collect();
    components.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    Mixture::new(components).expect("EM keeps a valid mixture")
}
