//! Box-constrained trajectory least squares: minimise the squared mismatch
//! between the integrated model and the data by projected
//! Levenberg-Marquardt with finite-difference sensitivities.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OdeModel, ParameterVector};
use crate::series::TimeSeries;
use crate::sim::rk4_integrate;
use crate::solver::{FitResult, Termination, TraceRecord};

const MAX_DAMPING: f64 = 1e16;

#[derive(Clone, Copy)]
pub struct BoundedProblem<'a> {
    pub model: &'a dyn OdeModel,
    pub data: &'a TimeSeries,
    pub x0: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub a0: &'a [f64],
    pub integrator_dt: f64,
}

impl BoundedProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        let m = self.model.n_params();
        if self.lower.len() != m || self.upper.len() != m || self.a0.len() != m {
            return Err(Error::Config(format!(
                "bounds and start point need {m} entries, got {}, {} and {}",
                self.lower.len(),
                self.upper.len(),
                self.a0.len()
            )));
        }
        if self.x0.len() != self.model.n_states() || self.data.n_states() != self.model.n_states() {
            return Err(Error::Shape(format!(
                "model '{}' has {} states",
                self.model.name(),
                self.model.n_states()
            )));
        }
        for l in 0..m {
            let (lo, a, hi) = (self.lower[l], self.a0[l], self.upper[l]);
            if lo.is_nan() || hi.is_nan() || !(lo <= a && a <= hi) || !a.is_finite() {
                return Err(Error::Config(format!(
                    "start point a{} = {a} is outside [{lo}, {hi}]",
                    l + 1
                )));
            }
        }
        Ok(())
    }

    /// Simulated-minus-observed states, flattened row-major.
    fn try_residual(&self, a: &[f64]) -> Result<DVector<f64>> {
        let sim = rk4_integrate(self.model, a, self.x0, self.data.times(), self.integrator_dt)?;
        Ok(DVector::from_iterator(
            sim.values().len(),
            sim.values().iter().zip(self.data.values()).map(|(s, d)| s - d),
        ))
    }

    fn residual(&self, a: &[f64]) -> Option<DVector<f64>> {
        self.try_residual(a).ok()
    }

    fn project(&self, a: &mut [f64]) {
        for (l, v) in a.iter_mut().enumerate() {
            *v = v.clamp(self.lower[l], self.upper[l]);
        }
    }

    /// Forward differences with step `1e-6 (1 + |a_l|)`, stepping backwards
    /// when the forward point would leave the box or fail to integrate.
    fn jacobian(&self, a: &[f64], r: &DVector<f64>) -> Option<DMatrix<f64>> {
        let m = a.len();
        let mut jac = DMatrix::zeros(r.len(), m);
        let mut probe = a.to_vec();
        for l in 0..m {
            let h = 1e-6 * (1.0 + a[l].abs());
            let forward = a[l] + h <= self.upper[l];
            let mut column = None;
            for h in if forward { [h, -h] } else { [-h, h] } {
                probe[l] = a[l] + h;
                if let Some(rp) = self.residual(&probe) {
                    column = Some((rp - r) / h);
                    break;
                }
            }
            probe[l] = a[l];
            jac.set_column(l, &column?);
        }
        Some(jac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlsConfig {
    pub max_iters: usize,
    /// Stop when an accepted step lowers the sum of squares by less than
    /// this fraction.
    pub ftol: f64,
}

impl Default for NlsConfig {
    fn default() -> Self {
        NlsConfig {
            max_iters: 200,
            ftol: 1e-10,
        }
    }
}

pub fn nls_fit(problem: &BoundedProblem, cfg: &NlsConfig) -> Result<FitResult> {
    problem.validate()?;
    if cfg.max_iters == 0 || !(cfg.ftol >= 0.0) {
        return Err(Error::Config(format!(
            "nls needs max_iters >= 1 and ftol >= 0, got {} and {}",
            cfg.max_iters, cfg.ftol
        )));
    }
    let start = Instant::now();
    let m = problem.model.n_params();
    let mut a = problem.a0.to_vec();
    let mut r = problem.try_residual(&a)?;
    let mut sse = r.norm_squared();
    let mut mu: Option<f64> = None;
    let mut trace = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut diagnostic = None;

    for iteration in 1..=cfg.max_iters {
        if sse == 0.0 {
            termination = Termination::ToleranceMet;
            break;
        }
        let Some(jac) = problem.jacobian(&a, &r) else {
            termination = Termination::NonFiniteIterate;
            diagnostic = Some(format!("sensitivities failed to integrate at {a:?}"));
            break;
        };
        let jtj = jac.tr_mul(&jac);
        let grad = jac.tr_mul(&r);
        if grad.amax() == 0.0 {
            termination = Termination::ToleranceMet;
            break;
        }
        let mut damping = mu.unwrap_or_else(|| 1e-3 * jtj.diagonal().amax().max(1e-12));

        let accepted = loop {
            if damping > MAX_DAMPING {
                break None;
            }
            let mut lhs = jtj.clone();
            for l in 0..m {
                lhs[(l, l)] += damping;
            }
            let Some(chol) = lhs.cholesky() else {
                damping *= 10.0;
                continue;
            };
            let step = chol.solve(&grad);
            let mut trial: Vec<f64> = a.iter().zip(step.iter()).map(|(x, s)| x - s).collect();
            problem.project(&mut trial);
            if trial == a {
                break None;
            }
            match problem.residual(&trial) {
                Some(rt) if rt.norm_squared() < sse => break Some((trial, rt, damping)),
                _ => damping *= 10.0,
            }
        };

        let Some((next, r_next, used)) = accepted else {
            termination = Termination::StationaryStep;
            diagnostic = Some(format!("no decreasing projected step at iteration {iteration}"));
            break;
        };
        let sse_next = r_next.norm_squared();
        let step = a.iter().zip(&next).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        trace.push(TraceRecord {
            iteration,
            params: next.clone(),
            residual_norm: sse.sqrt(),
            step,
            eta: Some(used),
            subset: None,
        });
        let relative_drop = (sse - sse_next) / sse;
        a = next;
        r = r_next;
        sse = sse_next;
        mu = Some((used / 3.0).max(1e-15));
        if relative_drop <= cfg.ftol {
            termination = Termination::ToleranceMet;
            break;
        }
    }

    Ok(FitResult {
        method: "nls".into(),
        initial: problem.a0.to_vec(),
        params: ParameterVector::new(a, problem.model.param_labels())?,
        iterations: trace.len(),
        converged: matches!(termination, Termination::ToleranceMet | Termination::StationaryStep),
        termination,
        diagnostic,
        trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Sum of squared trajectory mismatches at `a`.
pub fn trajectory_sse(problem: &BoundedProblem, a: &[f64]) -> Option<f64> {
    problem.residual(a).map(|r| r.norm_squared())
}
