#![allow(dead_code)]

use mdsplit_core::cde::{self, CdeModel};
use mdsplit_core::data::{self, Dataset, GeneratorConfig};
use mdsplit_core::seed;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Gaussian linear model fitted on example-1 data.
pub fn example1_gaussian(n: usize, seed: u64) -> CdeModel {
    let d = data::generate(&GeneratorConfig::example1(n, seed)).unwrap();
    let half: Vec<usize> = (0..n / 2).collect();
    let rest: Vec<usize> = (n / 2..n).collect();
    cde::fit_gaussian_linear(&d.subset(&half), &d.subset(&rest), &[0.1, 0.2, 0.5]).unwrap()
}

/// Draws `x ~ Unif(-4, 4)` and `y` from the model's own conditional, so the
/// model is correct for this data.
pub fn self_consistent(model: &CdeModel, n: usize, seed: u64) -> Dataset {
    let mut rng = seed::rng(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random_range(-4.0..4.0);
        let m = model.conditional(&[x]).unwrap();
        let c = m.components()[0];
        let z: f64 = StandardNormal.sample(&mut rng);
        xs.push(x);
        ys.push(c.mean + c.sd * z);
    }
    Dataset::new(xs, 1, ys, None).unwrap()
}
