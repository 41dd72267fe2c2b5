//! Experiment configuration (JSON) and override handling.
//!
//! Precedence for every overridable field: command-line flag, then the
//! `ODEFIT_SEED` environment variable (seed only), then the config file,
//! then the preset default.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use odefit_core::model::preset;
use odefit_core::sim::{NoiseLevel, SimSpec};
use odefit_core::solver::{Method, SolverConfig};
use odefit_core::{DerivativeMethod, OdeModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "ODEFIT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub true_params: Vec<f64>,
    pub x0: Vec<f64>,
    pub t_span: [f64; 2],
    pub n_points: usize,
    /// Internal RK4 step; defaults to a tenth of the sample spacing.
    #[serde(default)]
    pub integrator_dt: Option<f64>,
    pub noise: NoiseLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub method: Method,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Equations per draw for snr and sgd.
    pub subset_r: Option<usize>,
    pub damping: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            method: d.method,
            epsilon: d.epsilon,
            max_iters: d.max_iters,
            subset_r: None,
            damping: d.damping,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlsSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub max_iters: usize,
    pub ftol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    #[serde(default)]
    pub seed: u64,
    pub sim: SimSection,
    #[serde(default)]
    pub derivative: DerivativeMethod,
    #[serde(default)]
    pub solver: SolverSection,
    pub initial_guesses: Vec<Vec<f64>>,
    #[serde(default)]
    pub nls: Option<NlsSection>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Values supplied on the command line; `None` keeps the config value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub method: Option<Method>,
    pub subset_r: Option<usize>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub derivative: Option<DerivativeMethod>,
}

/// Canonical preset name for a repro experiment or model alias.
pub fn experiment_model(name: &str) -> CliResult<&'static str> {
    match name {
        "population" => Ok("population"),
        "lorenz" => Ok("lorenz"),
        "activator" | "activator-inhibitor" => Ok("activator-inhibitor"),
        other => Err(CliError::Config(format!(
            "unknown experiment '{other}' (available: population, lorenz, activator)"
        ))),
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> CliResult<Self> {
        let model = experiment_model(name)?;
        let spec = SimSpec::preset(model)?;
        let (guesses, lower, upper, subset_r): (Vec<Vec<f64>>, f64, f64, usize) = match model {
            "population" => (
                vec![
                    vec![0.1, 0.1, 1.2, 1.3, 0.2],
                    vec![1.0, -1.0, 2.0, 0.0, 1.0],
                    vec![-10.0, -10.0, 2.0, -3.0, 1.0],
                    vec![0.0; 5],
                    vec![100.0, -100.0, -100.0, 20.0, -30.0],
                ],
                0.0,
                11.0,
                1,
            ),
            "lorenz" => (
                vec![
                    vec![15.0, 1.0, -10.0],
                    vec![0.0, 10.0, -10.0],
                    vec![30.0, -10.0, 10.0],
                    vec![-3.0, 1.0, 0.0],
                    vec![0.0; 3],
                ],
                2.0,
                30.0,
                2,
            ),
            _ => (
                vec![
                    vec![1.0, 2.0, 1.0, 2.0],
                    vec![10.0, 0.0, 3.0, 0.1],
                    vec![0.0, 0.0, -10.0, 0.0],
                    vec![-1.0, 1.0, -10.0, 9.0],
                    vec![-10.0, 11.0, 12.0, 13.0],
                ],
                0.0,
                4.0,
                1,
            ),
        };
        let m = spec.true_params.len();
        Ok(ExperimentConfig {
            model: model.to_string(),
            seed: 0,
            sim: SimSection {
                true_params: spec.true_params,
                x0: spec.x0,
                t_span: spec.t_span,
                n_points: spec.n_points,
                integrator_dt: None,
                noise: spec.noise,
            },
            derivative: DerivativeMethod::ForwardDifference,
            solver: SolverSection {
                subset_r: Some(subset_r),
                ..Default::default()
            },
            initial_guesses: guesses,
            nls: Some(NlsSection {
                lower: vec![lower; m],
                upper: vec![upper; m],
                max_iters: 10,
                ftol: 1e-10,
            }),
            output_dir: PathBuf::from("out").join(name),
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Applies flags and the seed environment variable, then validates.
    pub fn resolve(mut self, overrides: &Overrides) -> CliResult<Self> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}='{raw}' is not an unsigned integer")))?;
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(method) = overrides.method {
            self.solver.method = method;
        }
        if let Some(r) = overrides.subset_r {
            self.solver.subset_r = Some(r);
        }
        if let Some(eps) = overrides.epsilon {
            self.solver.epsilon = eps;
        }
        if let Some(n) = overrides.max_iters {
            self.solver.max_iters = n;
        }
        if let Some(d) = overrides.derivative {
            self.derivative = d;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn model(&self) -> CliResult<Arc<dyn OdeModel>> {
        Ok(preset(&self.model)?)
    }

    pub fn sim_spec(&self) -> SimSpec {
        let s = &self.sim;
        let spacing = (s.t_span[1] - s.t_span[0]) / (s.n_points.max(2) - 1) as f64;
        SimSpec {
            model: self.model.clone(),
            true_params: s.true_params.clone(),
            x0: s.x0.clone(),
            t_span: s.t_span,
            n_points: s.n_points,
            integrator_dt: s.integrator_dt.unwrap_or(spacing / 10.0),
            noise: s.noise.clone(),
            seed: self.seed,
        }
    }

    /// Solver settings for `method`; `subset_r` is only passed to the
    /// stochastic methods.
    pub fn solver_config(&self, method: Method) -> SolverConfig {
        SolverConfig {
            method,
            epsilon: self.solver.epsilon,
            max_iters: self.solver.max_iters,
            subset_r: if method.is_stochastic() { self.solver.subset_r } else { None },
            seed: self.seed,
            damping: self.solver.damping,
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> CliResult<()> {
        let model = self.model()?;
        let m = model.n_params();
        self.sim_spec().validate(model.as_ref())?;
        if self.derivative == DerivativeMethod::Supplied {
            return Err(CliError::Config(
                "derivative must be forward_difference or three_point_nonuniform".into(),
            ));
        }
        let probe = SolverConfig {
            subset_r: None,
            ..self.solver_config(Method::Nr)
        };
        probe.validate(model.n_states())?;
        if let Some(r) = self.solver.subset_r {
            if r == 0 || r > model.n_states() {
                return Err(CliError::Config(format!(
                    "solver.subset_r = {r} must satisfy 1 <= r <= {}",
                    model.n_states()
                )));
            }
        }
        self.solver_config(self.solver.method).validate(model.n_states())?;
        if self.initial_guesses.is_empty() {
            return Err(CliError::Config("initial_guesses is empty".into()));
        }
        for (k, g) in self.initial_guesses.iter().enumerate() {
            if g.len() != m || g.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config(format!(
                    "initial guess {} must have {m} finite entries, got {g:?}",
                    k + 1
                )));
            }
        }
        if let Some(nls) = &self.nls {
            if nls.lower.len() != m || nls.upper.len() != m {
                return Err(CliError::Config(format!("nls bounds need {m} entries each")));
            }
            if nls.lower.iter().zip(&nls.upper).any(|(lo, hi)| !(lo <= hi)) {
                return Err(CliError::Config("nls lower bound exceeds upper bound".into()));
            }
            if nls.max_iters == 0 || !(nls.ftol >= 0.0) {
                return Err(CliError::Config("nls needs max_iters >= 1 and ftol >= 0".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in ["population", "lorenz", "activator"] {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            let json = serde_json::to_string_pretty(&cfg).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seed() {
        let a = ExperimentConfig::preset("lorenz").unwrap();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn stochastic_method_needs_subset() {
        let mut cfg = ExperimentConfig::preset("population").unwrap();
        cfg.solver.subset_r = None;
        cfg.solver.method = Method::Sgd;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn flags_override_config() {
        let cfg = ExperimentConfig::preset("population").unwrap();
        let cfg = cfg
            .resolve(&Overrides {
                seed: Some(77),
                method: Some(Method::Gd),
                ..Default::default()
            })
            .unwrap();
        assert_eq!(cfg.seed, 77);
        assert_eq!(cfg.solver.method, Method::Gd);
        assert_eq!(cfg.sim_spec().seed, 77);
    }

    #[test]
    fn bad_guess_length_is_a_config_error() {
        let mut cfg = ExperimentConfig::preset("lorenz").unwrap();
        cfg.initial_guesses.push(vec![1.0]);
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_experiment_lists_choices() {
        let err = ExperimentConfig::preset("duffing").unwrap_err();
        assert!(err.to_string().contains("population, lorenz, activator"));
    }
}
