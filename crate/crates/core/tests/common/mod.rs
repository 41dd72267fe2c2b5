#![allow(dead_code)]

use odefit_core::model::preset;
use odefit_core::series::{estimate_derivative, DerivativeEstimate, DerivativeMethod};
use odefit_core::sim::{generate_dataset, NoiseLevel, SimSpec};
use odefit_core::{OdeModel, TimeSeries};
use std::sync::Arc;

pub const POPULATION_GUESSES: [[f64; 5]; 5] = [
    [0.1, 0.1, 1.2, 1.3, 0.2],
    [1.0, -1.0, 2.0, 0.0, 1.0],
    [-10.0, -10.0, 2.0, -3.0, 1.0],
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [100.0, -100.0, -100.0, 20.0, -30.0],
];

pub const LORENZ_GUESSES: [[f64; 3]; 5] = [
    [15.0, 1.0, -10.0],
    [0.0, 10.0, -10.0],
    [30.0, -10.0, 10.0],
    [-3.0, 1.0, 0.0],
    [0.0, 0.0, 0.0],
];

pub const ACTIVATOR_GUESSES: [[f64; 4]; 5] = [
    [1.0, 2.0, 1.0, 2.0],
    [10.0, 0.0, 3.0, 0.1],
    [0.0, 0.0, -10.0, 0.0],
    [-1.0, 1.0, -10.0, 9.0],
    [-10.0, 11.0, 12.0, 13.0],
];

pub struct Problem {
    pub model: Arc<dyn OdeModel>,
    pub spec: SimSpec,
    pub data: TimeSeries,
    pub clean: TimeSeries,
    pub deriv: DerivativeEstimate,
}

pub fn problem(name: &str, noisy: bool, method: DerivativeMethod, seed: u64) -> Problem {
    let model = preset(name).unwrap();
    let mut spec = SimSpec::preset(name).unwrap();
    spec.seed = seed;
    if !noisy {
        spec.noise = NoiseLevel::none();
    }
    let ds = generate_dataset(model.as_ref(), &spec).unwrap();
    let deriv = estimate_derivative(&ds.noisy, method).unwrap();
    Problem {
        model,
        spec,
        data: ds.noisy,
        clean: ds.clean,
        deriv,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_rel_err(a: &[f64], truth: &[f64]) -> f64 {
    a.iter().zip(truth).map(|(x, t)| ((x - t) / t).abs()).fold(0.0, f64::max)
}
