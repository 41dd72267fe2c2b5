//! ODE right-hand sides with analytic parameter Jacobians.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 3] = ["population", "lorenz", "activator-inhibitor"];

/// A right-hand side failed to evaluate at the given point.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainError {
    /// 0-based index of the offending state equation.
    pub state: usize,
    pub msg: String,
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "equation {}: {}", self.state + 1, self.msg)
    }
}

/// Box from which [`check_param_jacobian`] draws probe points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeDomain {
    pub time: (f64, f64),
    pub state: (f64, f64),
    pub params: (f64, f64),
}

impl Default for ProbeDomain {
    fn default() -> Self {
        ProbeDomain {
            time: (0.0, 1.0),
            state: (-5.0, 5.0),
            params: (-5.0, 5.0),
        }
    }
}

/// `dx/dt = F(t, x, a)` together with `dF/da`.
///
/// Jacobians are written row-major into an `n_states x n_params` buffer,
/// entry `(j, l)` at `j * n_params + l` holding `df_j/da_l`.
pub trait OdeModel: Send + Sync {
    fn name(&self) -> &str;
    fn n_states(&self) -> usize;
    fn n_params(&self) -> usize;

    fn state_labels(&self) -> Vec<String> {
        (1..=self.n_states()).map(|k| format!("x{k}")).collect()
    }

    fn param_labels(&self) -> Vec<String> {
        (1..=self.n_params()).map(|l| format!("a{l}")).collect()
    }

    fn rhs(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]) -> std::result::Result<(), DomainError>;

    fn param_jacobian(
        &self,
        t: f64,
        x: &[f64],
        a: &[f64],
        out: &mut [f64],
    ) -> std::result::Result<(), DomainError>;

    fn probe_domain(&self) -> ProbeDomain {
        ProbeDomain::default()
    }
}

/// Central-difference `dF/da` with step `1e-6 * (1 + |a_l|)`.
pub fn finite_difference_jacobian<M: OdeModel + ?Sized>(
    model: &M,
    t: f64,
    x: &[f64],
    a: &[f64],
    out: &mut [f64],
) -> std::result::Result<(), DomainError> {
    let n = model.n_states();
    let m = model.n_params();
    let mut ap = a.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for l in 0..m {
        let h = 1e-6 * (1.0 + a[l].abs());
        ap[l] = a[l] + h;
        model.rhs(t, x, &ap, &mut fp)?;
        ap[l] = a[l] - h;
        model.rhs(t, x, &ap, &mut fm)?;
        ap[l] = a[l];
        let width = 2.0 * h;
        for j in 0..n {
            out[j * m + l] = (fp[j] - fm[j]) / width;
        }
    }
    Ok(())
}

/// Parameter values with their labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub labels: Vec<String>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if values.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} parameter values for {} labels",
                values.len(),
                labels.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col: i + 1 });
        }
        Ok(ParameterVector { values, labels })
    }

    pub fn for_model(model: &dyn OdeModel, values: Vec<f64>) -> Result<Self> {
        if values.len() != model.n_params() {
            return Err(Error::Shape(format!(
                "model '{}' has {} parameters, got {}",
                model.name(),
                model.n_params(),
                values.len()
            )));
        }
        Self::new(values, model.param_labels())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Predator-prey type population system, linear in its five parameters:
///
/// ```text
/// f1 = a1 x1 - a2 x1 x2
/// f2 = a3 x2 + a4 x1 x2 - a5 x2^2
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct PopulationModel;

impl OdeModel for PopulationModel {
    fn name(&self) -> &str {
        "population"
    }

    fn n_states(&self) -> usize {
        2
    }

    fn n_params(&self) -> usize {
        5
    }

    fn rhs(&self, _t: f64, x: &[f64], a: &[f64], out: &mut [f64]) -> std::result::Result<(), DomainError> {
        out[0] = a[0] * x[0] - a[1] * x[0] * x[1];
        out[1] = a[2] * x[1] + a[3] * x[0] * x[1] - a[4] * x[1] * x[1];
        Ok(())
    }

    fn param_jacobian(
        &self,
        _t: f64,
        x: &[f64],
        _a: &[f64],
        out: &mut [f64],
    ) -> std::result::Result<(), DomainError> {
        let x1x2 = x[0] * x[1];
        out.copy_from_slice(&[
            x[0], -x1x2, 0.0, 0.0, 0.0, //
            0.0, 0.0, x[1], x1x2, -x[1] * x[1],
        ]);
        Ok(())
    }
}

/// Lorenz system with `a = (sigma, rho, beta)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LorenzModel;

impl OdeModel for LorenzModel {
    fn name(&self) -> &str {
        "lorenz"
    }

    fn n_states(&self) -> usize {
        3
    }

    fn n_params(&self) -> usize {
        3
    }

    fn rhs(&self, _t: f64, x: &[f64], a: &[f64], out: &mut [f64]) -> std::result::Result<(), DomainError> {
        out[0] = a[0] * (x[1] - x[0]);
        out[1] = x[0] * (a[1] - x[2]) - x[1];
        out[2] = x[0] * x[1] - a[2] * x[2];
        Ok(())
    }

    fn param_jacobian(
        &self,
        _t: f64,
        x: &[f64],
        _a: &[f64],
        out: &mut [f64],
    ) -> std::result::Result<(), DomainError> {
        out.copy_from_slice(&[
            x[1] - x[0], 0.0, 0.0, //
            0.0, x[0], 0.0, //
            0.0, 0.0, -x[2],
        ]);
        Ok(())
    }

    fn probe_domain(&self) -> ProbeDomain {
        ProbeDomain {
            time: (0.0, 1.0),
            state: (-20.0, 20.0),
            params: (0.0, 30.0),
        }
    }
}

/// Activator-inhibitor system, nonlinear in `a1`, `a2` and bilinear in `a3`, `a4`:
///
/// ```text
/// f1 = (1 + a1 x1^2) / (1 + x1^2 + a2 x2) - x1
/// f2 = a3 (a4 x1 + x_basal - x2)
/// ```
///
/// `x_basal` is a fixed constant, zero for the preset.
#[derive(Debug, Clone, Copy, Default)]
pub struct ActivatorInhibitorModel {
    pub x_basal: f64,
}

const MIN_DENOMINATOR: f64 = 1e-12;

impl ActivatorInhibitorModel {
    fn denominator(x: &[f64], a: &[f64]) -> std::result::Result<f64, DomainError> {
        let den = 1.0 + x[0] * x[0] + a[1] * x[1];
        if den.abs() < MIN_DENOMINATOR {
            return Err(DomainError {
                state: 0,
                msg: format!("denominator 1 + x1^2 + a2 x2 = {den:e} vanishes"),
            });
        }
        Ok(den)
    }
}

impl OdeModel for ActivatorInhibitorModel {
    fn name(&self) -> &str {
        "activator-inhibitor"
    }

    fn n_states(&self) -> usize {
        2
    }

    fn n_params(&self) -> usize {
        4
    }

    fn rhs(&self, _t: f64, x: &[f64], a: &[f64], out: &mut [f64]) -> std::result::Result<(), DomainError> {
        let den = Self::denominator(x, a)?;
        out[0] = (1.0 + a[0] * x[0] * x[0]) / den - x[0];
        out[1] = a[2] * (a[3] * x[0] + self.x_basal - x[1]);
        Ok(())
    }

    fn param_jacobian(
        &self,
        _t: f64,
        x: &[f64],
        a: &[f64],
        out: &mut [f64],
    ) -> std::result::Result<(), DomainError> {
        let den = Self::denominator(x, a)?;
        let x1sq = x[0] * x[0];
        out.copy_from_slice(&[
            x1sq / den,
            -x[1] * (1.0 + a[0] * x1sq) / (den * den),
            0.0,
            0.0,
            0.0,
            0.0,
            a[3] * x[0] + self.x_basal - x[1],
            a[2] * x[0],
        ]);
        Ok(())
    }

    fn probe_domain(&self) -> ProbeDomain {
        ProbeDomain {
            time: (0.0, 1.0),
            state: (0.0, 3.0),
            params: (0.0, 4.0),
        }
    }
}

type RhsFn = dyn Fn(f64, &[f64], &[f64], &mut [f64]) -> std::result::Result<(), DomainError> + Send + Sync;

/// A user-defined model built from closures. Without an explicit Jacobian,
/// [`finite_difference_jacobian`] is used.
pub struct CustomModel {
    name: String,
    n_states: usize,
    n_params: usize,
    rhs: Box<RhsFn>,
    jacobian: Option<Box<RhsFn>>,
    probe: ProbeDomain,
}

impl CustomModel {
    pub fn new<F>(name: impl Into<String>, n_states: usize, n_params: usize, rhs: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) -> std::result::Result<(), DomainError> + Send + Sync + 'static,
    {
        CustomModel {
            name: name.into(),
            n_states,
            n_params,
            rhs: Box::new(rhs),
            jacobian: None,
            probe: ProbeDomain::default(),
        }
    }

    pub fn with_jacobian<F>(mut self, jac: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) -> std::result::Result<(), DomainError> + Send + Sync + 'static,
    {
        self.jacobian = Some(Box::new(jac));
        self
    }

    pub fn with_probe_domain(mut self, probe: ProbeDomain) -> Self {
        self.probe = probe;
        self
    }
}

impl fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomModel")
            .field("name", &self.name)
            .field("n_states", &self.n_states)
            .field("n_params", &self.n_params)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl OdeModel for CustomModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_params(&self) -> usize {
        self.n_params
    }

    fn rhs(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]) -> std::result::Result<(), DomainError> {
        (self.rhs)(t, x, a, out)
    }

    fn param_jacobian(
        &self,
        t: f64,
        x: &[f64],
        a: &[f64],
        out: &mut [f64],
    ) -> std::result::Result<(), DomainError> {
        match &self.jacobian {
            Some(jac) => jac(t, x, a, out),
            None => finite_difference_jacobian(self, t, x, a, out),
        }
    }

    fn probe_domain(&self) -> ProbeDomain {
        self.probe
    }
}

pub fn population_model() -> PopulationModel {
    PopulationModel
}

pub fn lorenz_model() -> LorenzModel {
    LorenzModel
}

pub fn activator_inhibitor_model() -> ActivatorInhibitorModel {
    ActivatorInhibitorModel { x_basal: 0.0 }
}

/// Looks a preset up by name.
pub fn preset(name: &str) -> Result<Arc<dyn OdeModel>> {
    match name {
        "population" => Ok(Arc::new(population_model())),
        "lorenz" => Ok(Arc::new(lorenz_model())),
        "activator-inhibitor" => Ok(Arc::new(activator_inhibitor_model())),
        _ => Err(Error::UnknownModel {
            name: name.to_string(),
            available: PRESET_NAMES.join(", "),
        }),
    }
}

/// Compares the analytic parameter Jacobian against central differences at
/// `trials` random points and returns the worst absolute discrepancy.
pub fn check_param_jacobian(model: &dyn OdeModel, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let n = model.n_states();
    let m = model.n_params();
    let dom = model.probe_domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut analytic = vec![0.0; n * m];
    let mut numeric = vec![0.0; n * m];
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let t = rng.random_range(dom.time.0..=dom.time.1);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(dom.state.0..=dom.state.1)).collect();
        let a: Vec<f64> = (0..m).map(|_| rng.random_range(dom.params.0..=dom.params.1)).collect();
        let probe = |e: DomainError| Error::NonFiniteProbe(format!("t={t}, x={x:?}, a={a:?}: {e}"));
        model.param_jacobian(t, &x, &a, &mut analytic).map_err(probe)?;
        finite_difference_jacobian(model, t, &x, &a, &mut numeric).map_err(probe)?;
        for (u, v) in analytic.iter().zip(&numeric) {
            if !u.is_finite() || !v.is_finite() {
                return Err(Error::NonFiniteProbe(format!("t={t}, x={x:?}, a={a:?}")));
            }
            worst = worst.max((u - v).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(model: &dyn OdeModel, x: &[f64], a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; model.n_states()];
        model.rhs(0.0, x, a, &mut out).unwrap();
        out
    }

    fn jac(model: &dyn OdeModel, x: &[f64], a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; model.n_states() * model.n_params()];
        model.param_jacobian(0.0, x, a, &mut out).unwrap();
        out
    }

    #[test]
    fn population_examples() {
        let m = population_model();
        assert_eq!(eval(&m, &[1.0, 1.0], &[10.0, 5.0, 3.0, 1.0, 3.0]), vec![5.0, 1.0]);
        assert_eq!(eval(&m, &[0.0, 0.0], &[1.0, -2.0, 3.0, 4.0, 5.0]), vec![0.0, 0.0]);
        let j = jac(&m, &[2.0, 3.0], &[7.0; 5]);
        assert_eq!(&j[..5], &[2.0, -6.0, 0.0, 0.0, 0.0]);
        assert_eq!(&j[5..], &[0.0, 0.0, 3.0, 6.0, -9.0]);
    }

    #[test]
    fn lorenz_examples() {
        let m = lorenz_model();
        let f = eval(&m, &[1.0, 1.0, 1.0], &[10.0, 28.0, 8.0 / 3.0]);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 26.0);
        assert!((f[2] - (1.0 - 8.0 / 3.0)).abs() < 1e-15);
        assert_eq!(eval(&m, &[0.0; 3], &[3.0, 4.0, 5.0]), vec![0.0; 3]);
        assert_eq!(
            jac(&m, &[2.0, 5.0, 7.0], &[1.0, 1.0, 1.0]),
            vec![3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, -7.0]
        );
    }

    #[test]
    fn activator_inhibitor_examples() {
        let m = activator_inhibitor_model();
        assert_eq!(eval(&m, &[0.0, 0.0], &[2.0, 3.0, 0.1, 0.4]), vec![1.0, 0.0]);
        let j = jac(&m, &[1.0, 0.5], &[2.0, 3.0, 0.1, 0.4]);
        assert!((j[7] - 0.1).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
            let a: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..4.0)).collect();
            let j = jac(&m, &x, &a);
            assert_eq!([j[2], j[3], j[4], j[5]], [0.0; 4]);
        }
    }

    #[test]
    fn activator_inhibitor_domain_error() {
        let m = activator_inhibitor_model();
        // 1 + 0 + a2 * x2 = 0
        let mut out = [0.0; 2];
        let err = m.rhs(0.0, &[0.0, 1.0], &[1.0, -1.0, 1.0, 1.0], &mut out).unwrap_err();
        assert_eq!(err.state, 0);
    }

    #[test]
    fn activator_inhibitor_jacobian_depends_on_a() {
        let m = activator_inhibitor_model();
        let x = [1.2, 0.7];
        let j1 = jac(&m, &x, &[2.0, 3.0, 0.1, 0.4]);
        let j2 = jac(&m, &x, &[1.0, 0.5, 0.1, 0.4]);
        assert_ne!(j1[1], j2[1]);
    }

    #[test]
    fn linear_models_have_parameter_free_jacobians() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let models: [Box<dyn OdeModel>; 2] = [Box::new(population_model()), Box::new(lorenz_model())];
        for model in &models {
            for _ in 0..20 {
                let x: Vec<f64> = (0..model.n_states()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let a: Vec<f64> = (0..model.n_params()).map(|_| rng.random_range(-9.0..9.0)).collect();
                let b: Vec<f64> = (0..model.n_params()).map(|_| rng.random_range(-9.0..9.0)).collect();
                assert_eq!(jac(model.as_ref(), &x, &a), jac(model.as_ref(), &x, &b));
            }
        }
    }

    #[test]
    fn linear_models_superpose() {
        // rhs(a) - rhs(0) is linear in a
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let models: [Box<dyn OdeModel>; 2] = [Box::new(population_model()), Box::new(lorenz_model())];
        for model in &models {
            let m = model.n_params();
            let x: Vec<f64> = (0..model.n_states()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a: Vec<f64> = (0..m).map(|_| rng.random_range(-9.0..9.0)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(-9.0..9.0)).collect();
            let (alpha, beta) = (0.7, -1.3);
            let mix: Vec<f64> = a.iter().zip(&b).map(|(u, v)| alpha * u + beta * v).collect();
            let base = eval(model.as_ref(), &x, &vec![0.0; m]);
            let fa = eval(model.as_ref(), &x, &a);
            let fb = eval(model.as_ref(), &x, &b);
            let fmix = eval(model.as_ref(), &x, &mix);
            for j in 0..model.n_states() {
                let lhs = fmix[j] - base[j];
                let rhs = alpha * (fa[j] - base[j]) + beta * (fb[j] - base[j]);
                assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
            }
        }
    }

    #[test]
    fn presets_pass_jacobian_check() {
        for name in PRESET_NAMES {
            let model = preset(name).unwrap();
            let worst = check_param_jacobian(model.as_ref(), 100, 7).unwrap();
            assert!(worst <= 1e-6, "{name}: {worst}");
        }
    }

    #[test]
    fn jacobian_check_catches_dropped_term() {
        // population model whose df2/da5 forgets the x2^2 term
        let broken = CustomModel::new("broken", 2, 5, |t, x, a, out| PopulationModel.rhs(t, x, a, out))
            .with_jacobian(|t, x, a, out| {
                PopulationModel.param_jacobian(t, x, a, out)?;
                out[9] = 0.0;
                Ok(())
            });
        let worst = check_param_jacobian(&broken, 100, 1).unwrap();
        assert!(worst > 1e-2, "{worst}");
    }

    #[test]
    fn custom_model_falls_back_to_finite_differences() {
        let m = CustomModel::new("decay", 1, 1, |_, x, a, out| {
            out[0] = -a[0] * x[0];
            Ok(())
        });
        let j = jac(&m, &[2.0], &[0.5]);
        assert!((j[0] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn unknown_preset_lists_available() {
        let err = preset("rossler").err().unwrap().to_string();
        for name in PRESET_NAMES {
            assert!(err.contains(name));
        }
    }

    #[test]
    fn parameter_vector_validation() {
        let m = lorenz_model();
        assert!(ParameterVector::for_model(&m, vec![1.0, 2.0]).is_err());
        assert!(ParameterVector::for_model(&m, vec![1.0, f64::NAN, 2.0]).is_err());
        let p = ParameterVector::for_model(&m, vec![10.0, 28.0, 2.5]).unwrap();
        assert_eq!(p.labels, vec!["a1", "a2", "a3"]);
    }
}
