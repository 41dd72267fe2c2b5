//! Synthetic data: fixed-step RK4 integration plus seeded Gaussian noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{preset, OdeModel};
use crate::series::TimeSeries;

/// Measurement noise, either absolute per-state standard deviations or a
/// fraction of each clean state's sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    Std(Vec<f64>),
    SignalFraction(f64),
}

impl NoiseLevel {
    pub fn none() -> Self {
        NoiseLevel::SignalFraction(0.0)
    }

    /// Per-state standard deviations for a given clean trajectory.
    pub fn resolve(&self, clean: &TimeSeries) -> Result<Vec<f64>> {
        let n = clean.n_states();
        let std = match self {
            NoiseLevel::Std(s) => {
                if s.len() != n {
                    return Err(Error::Config(format!(
                        "noise std has {} entries, series has {n} states",
                        s.len()
                    )));
                }
                s.clone()
            }
            NoiseLevel::SignalFraction(f) => (0..n).map(|k| f * sample_std(&clean.column(k))).collect(),
        };
        if std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config(format!("noise std must be finite and >= 0, got {std:?}")));
        }
        Ok(std)
    }
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub model: String,
    pub true_params: Vec<f64>,
    pub x0: Vec<f64>,
    pub t_span: [f64; 2],
    pub n_points: usize,
    pub integrator_dt: f64,
    pub noise: NoiseLevel,
    #[serde(default)]
    pub seed: u64,
}

impl SimSpec {
    /// Default experiment for a preset model.
    pub fn preset(name: &str) -> Result<Self> {
        let (true_params, x0, t_end, n_points, noise) = match name {
            "population" => (
                vec![10.0, 5.0, 3.0, 1.0, 3.0],
                vec![1.0, 1.0],
                2.0,
                201,
                NoiseLevel::SignalFraction(0.02),
            ),
            "lorenz" => (
                vec![10.0, 28.0, 8.0 / 3.0],
                vec![0.1, 1.0, 5.0],
                2.5,
                251,
                NoiseLevel::Std(vec![2f64.sqrt(); 3]),
            ),
            "activator-inhibitor" => (
                vec![2.0, 3.0, 0.1, 0.4],
                vec![0.1, 2.0],
                50.0,
                501,
                NoiseLevel::SignalFraction(0.02),
            ),
            other => {
                // reuse the model registry's error message
                preset(other)?;
                unreachable!("preset '{other}' has no simulation defaults");
            }
        };
        let spacing = t_end / (n_points - 1) as f64;
        Ok(SimSpec {
            model: name.to_string(),
            true_params,
            x0,
            t_span: [0.0, t_end],
            n_points,
            integrator_dt: spacing / 10.0,
            noise,
            seed: 0,
        })
    }

    pub fn validate(&self, model: &dyn OdeModel) -> Result<()> {
        let [t0, t1] = self.t_span;
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::Config(format!("t_span {:?} must satisfy t_start < t_end", self.t_span)));
        }
        if self.n_points < 3 {
            return Err(Error::Config(format!("n_points must be >= 3, got {}", self.n_points)));
        }
        let spacing = (t1 - t0) / (self.n_points - 1) as f64;
        if !(self.integrator_dt > 0.0 && self.integrator_dt <= spacing) {
            return Err(Error::Config(format!(
                "integrator_dt = {} must lie in (0, {spacing}]",
                self.integrator_dt
            )));
        }
        if self.true_params.len() != model.n_params() || self.x0.len() != model.n_states() {
            return Err(Error::Config(format!(
                "model '{}' needs {} parameters and {} initial states, got {} and {}",
                model.name(),
                model.n_params(),
                model.n_states(),
                self.true_params.len(),
                self.x0.len()
            )));
        }
        if self.true_params.iter().chain(&self.x0).any(|v| !v.is_finite()) {
            return Err(Error::Config("true_params and x0 must be finite".into()));
        }
        if let NoiseLevel::Std(s) = &self.noise {
            if s.len() != model.n_states() || s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!("noise std {s:?} must have one entry >= 0 per state")));
            }
        }
        if let NoiseLevel::SignalFraction(f) = self.noise {
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::Config(format!("noise fraction must be >= 0, got {f}")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.t_span[0], self.t_span[1], self.n_points)
    }
}

/// `n` equally spaced points from `t0` to `t1` inclusive.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let h = (t1 - t0) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| t0 + i as f64 * h).collect();
    if let Some(last) = grid.last_mut() {
        *last = t1;
    }
    grid
}

/// Classical RK4 sampled at `t_grid`. Each interval is split into
/// `ceil(h / max_dt)` equal substeps.
pub fn rk4_integrate(
    model: &dyn OdeModel,
    a: &[f64],
    x0: &[f64],
    t_grid: &[f64],
    max_dt: f64,
) -> Result<TimeSeries> {
    let n = model.n_states();
    if x0.len() != n || a.len() != model.n_params() {
        return Err(Error::Shape(format!(
            "model '{}' needs {} states and {} parameters, got {} and {}",
            model.name(),
            n,
            model.n_params(),
            x0.len(),
            a.len()
        )));
    }
    if !(max_dt > 0.0) {
        return Err(Error::Config(format!("integrator step must be positive, got {max_dt}")));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("integration grid must be strictly increasing".into()));
    }

    let mut values = Vec::with_capacity(n * t_grid.len());
    let mut x = x0.to_vec();
    values.extend_from_slice(&x);
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];

    for (interval, w) in t_grid.windows(2).enumerate() {
        let span = w[1] - w[0];
        // shave rounding so spacing / 10 gives exactly 10 substeps
        let steps = ((span / max_dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for s in 0..steps {
            let t = w[0] + s as f64 * h;
            let eval = |t: f64, x: &[f64], out: &mut [f64]| {
                model.rhs(t, x, a, out).map_err(|e| Error::Domain {
                    row: interval,
                    state: e.state,
                    msg: format!("{} (t = {t})", e.msg),
                })
            };
            eval(t, &x, &mut k[0])?;
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k[0][i];
            }
            eval(t + 0.5 * h, &tmp, &mut k[1])?;
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k[1][i];
            }
            eval(t + 0.5 * h, &tmp, &mut k[2])?;
            for i in 0..n {
                tmp[i] = x[i] + h * k[2][i];
            }
            eval(t + h, &tmp, &mut k[3])?;
            for i in 0..n {
                x[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp { t: t + h });
            }
        }
        values.extend_from_slice(&x);
    }
    TimeSeries::new(t_grid.to_vec(), values, model.state_labels())
}

/// Integrates fitted parameters for validation against data.
pub fn simulate_fit(
    model: &dyn OdeModel,
    a_hat: &[f64],
    x0: &[f64],
    t_grid: &[f64],
    max_dt: f64,
) -> Result<TimeSeries> {
    rk4_integrate(model, a_hat, x0, t_grid, max_dt)
}

/// Adds independent `N(0, std_k^2)` noise to every sample, drawn row by row
/// from a ChaCha8 stream seeded with `seed`. States with zero std are copied.
pub fn add_noise(clean: &TimeSeries, std: &[f64], seed: u64) -> Result<TimeSeries> {
    let n = clean.n_states();
    if std.len() != n {
        return Err(Error::Shape(format!("noise std has {} entries, expected {n}", std.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = clean.values().to_vec();
    for row in values.chunks_mut(n) {
        for (v, s) in row.iter_mut().zip(std) {
            let z: f64 = unit.sample(&mut rng);
            if *s > 0.0 {
                *v += s * z;
            }
        }
    }
    TimeSeries::new(clean.times().to_vec(), values, clean.labels().to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub clean: TimeSeries,
    pub noisy: TimeSeries,
    pub noise_std: Vec<f64>,
}

pub fn generate_dataset(model: &dyn OdeModel, spec: &SimSpec) -> Result<Dataset> {
    spec.validate(model)?;
    let clean = rk4_integrate(model, &spec.true_params, &spec.x0, &spec.grid(), spec.integrator_dt)?;
    let noise_std = spec.noise.resolve(&clean)?;
    let noisy = add_noise(&clean, &noise_std, spec.seed)?;
    Ok(Dataset {
        clean,
        noisy,
        noise_std,
    })
}
