//! Newton-Raphson and gradient-descent iterations on the residual system.
//!
//! * NR: `a <- a - (J^T J + lambda I)^-1 J^T E`, solved by QR of `J` (with
//!   `sqrt(lambda) I` appended when damped). `lambda = 0` is the undamped
//!   Gauss-Newton form.
//! * GD: `a <- a - eta J^T G` with `eta = (delta^T G) / (delta^T delta)` and
//!   `delta = J J^T G`, the step that zeroes the linearised residual along the
//!   gradient direction.
//! * SNR / SGD: the same updates on a uniformly drawn subset of `r` ODE
//!   components, redrawn every iteration.
//!
//! All methods stop once the infinity norm of the parameter change drops to
//! `epsilon`. For the stochastic variants that test must hold across a run
//! of iterations whose subsets together cover every equation; otherwise an
//! iteration that happens to draw already-converged equations would end the
//! fit with the remaining parameters untouched.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OdeModel, ParameterVector};
use crate::residual::{assemble, ResidualSystem, SubsetSelector};
use crate::series::{DerivativeEstimate, TimeSeries};

/// Below this `delta^T delta` the gradient step is treated as stationary.
const STATIONARY_CURVATURE: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nr,
    Snr,
    Gd,
    Sgd,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Nr, Method::Snr, Method::Gd, Method::Sgd];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Nr => "nr",
            Method::Snr => "snr",
            Method::Gd => "gd",
            Method::Sgd => "sgd",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Snr | Method::Sgd)
    }

    fn is_newton(self) -> bool {
        matches!(self, Method::Nr | Method::Snr)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nr" => Ok(Method::Nr),
            "snr" => Ok(Method::Snr),
            "gd" => Ok(Method::Gd),
            "sgd" => Ok(Method::Sgd),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected nr, snr, gd or sgd)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: Method,
    /// Stopping tolerance on the infinity norm of the parameter change.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Equations per draw; required for SNR and SGD.
    pub subset_r: Option<usize>,
    pub seed: u64,
    /// Tikhonov term added to `J^T J` in the Newton step.
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Nr,
            epsilon: 1e-8,
            max_iters: 20_000,
            subset_r: None,
            seed: 0,
            damping: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        SolverConfig {
            method,
            ..Default::default()
        }
    }

    pub fn validate(&self, n_states: usize) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.damping >= 0.0) || !self.damping.is_finite() {
            return Err(Error::Config(format!("damping must be >= 0, got {}", self.damping)));
        }
        match (self.method.is_stochastic(), self.subset_r) {
            (true, None) => Err(Error::Config(format!(
                "method {} requires subset_r",
                self.method
            ))),
            (true, Some(r)) if r == 0 || r > n_states => Err(Error::Config(format!(
                "subset_r = {r} must satisfy 1 <= r <= {n_states}"
            ))),
            (false, Some(_)) => Err(Error::Config(format!(
                "subset_r only applies to snr and sgd, not {}",
                self.method
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ToleranceMet,
    MaxIters,
    SingularSystem,
    StationaryStep,
    NonFiniteIterate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Parameters after this iteration's update.
    pub params: Vec<f64>,
    /// `||E||_2` of the system the update was computed from.
    pub residual_norm: f64,
    /// Infinity norm of the parameter change.
    pub step: f64,
    /// Gradient step size (GD/SGD) or LM damping (trajectory baseline).
    pub eta: Option<f64>,
    /// Equations used this iteration (stochastic methods only).
    pub subset: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: String,
    pub initial: Vec<f64>,
    pub params: ParameterVector,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub diagnostic: Option<String>,
    pub trace: Vec<TraceRecord>,
    /// Seconds; excluded from serialized output so reruns compare equal.
    #[serde(skip)]
    pub wall_time: f64,
}

impl FitResult {
    /// `a_0, a_1, ..., a_k` including the starting point.
    pub fn iterates(&self) -> Vec<Vec<f64>> {
        std::iter::once(self.initial.clone())
            .chain(self.trace.iter().map(|r| r.params.clone()))
            .collect()
    }

    pub fn residual_norms(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.residual_norm).collect()
    }

    /// Trace as CSV: `iteration,<param labels>,residual_norm,eta,subset`.
    pub fn write_trace_csv<W: std::io::Write>(&self, w: W, comments: &[String]) -> Result<()> {
        let mut w = w;
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["iteration".to_string()];
        header.extend(self.params.labels.iter().cloned());
        header.extend(["residual_norm", "step", "eta", "subset"].map(String::from));
        wtr.write_record(&header)?;
        for rec in &self.trace {
            let mut row = vec![rec.iteration.to_string()];
            row.extend(rec.params.iter().map(f64::to_string));
            row.push(rec.residual_norm.to_string());
            row.push(rec.step.to_string());
            row.push(rec.eta.map(|e| e.to_string()).unwrap_or_default());
            row.push(
                rec.subset
                    .as_ref()
                    .map(|s| s.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(" "))
                    .unwrap_or_default(),
            );
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingularSystem {
    pub rank_deficient_columns: Vec<usize>,
}

/// Newton increment `delta` with `a_next = a - delta`.
fn newton_increment(
    jac: &DMatrix<f64>,
    residual: &DVector<f64>,
    damping: f64,
) -> std::result::Result<DVector<f64>, SingularSystem> {
    let (rows, m) = jac.shape();
    let (mat, rhs) = if damping > 0.0 {
        let mut mat = DMatrix::zeros(rows + m, m);
        mat.rows_mut(0, rows).copy_from(jac);
        let s = damping.sqrt();
        for l in 0..m {
            mat[(rows + l, l)] = s;
        }
        let mut rhs = DVector::zeros(rows + m);
        rhs.rows_mut(0, rows).copy_from(residual);
        (mat, rhs)
    } else {
        if rows < m {
            return Err(SingularSystem {
                rank_deficient_columns: (rows..m).collect(),
            });
        }
        (jac.clone(), residual.clone())
    };

    let total_rows = mat.nrows();
    let qr = mat.qr();
    let mut qtb = rhs;
    qr.q_tr_mul(&mut qtb);
    let r = qr.r();
    let diag_max = (0..m).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = diag_max * (total_rows.max(m) as f64) * f64::EPSILON;
    let deficient: Vec<usize> = (0..m).filter(|&i| !(r[(i, i)].abs() > tol)).collect();
    if !deficient.is_empty() {
        return Err(SingularSystem {
            rank_deficient_columns: deficient,
        });
    }
    let top = qtb.rows(0, m).into_owned();
    r.solve_upper_triangular(&top).ok_or(SingularSystem {
        rank_deficient_columns: Vec::new(),
    })
}

/// One Newton-Raphson update `a - (J^T J + damping I)^-1 J^T E`.
pub fn nr_step(system: &ResidualSystem, a: &[f64], damping: f64) -> std::result::Result<Vec<f64>, SingularSystem> {
    let delta = newton_increment(&system.jacobian, &system.residual, damping)?;
    Ok(a.iter().zip(delta.iter()).map(|(x, d)| x - d).collect())
}

/// Newton step restricted to the parameters that appear in the system.
/// Columns that are identically zero (parameters absent from the drawn
/// equations) keep their current value.
fn nr_step_active(
    system: &ResidualSystem,
    a: &[f64],
    damping: f64,
) -> std::result::Result<Vec<f64>, SingularSystem> {
    let jac = &system.jacobian;
    let active: Vec<usize> = (0..jac.ncols())
        .filter(|&l| jac.column(l).iter().any(|v| *v != 0.0))
        .collect();
    if active.len() == jac.ncols() {
        return nr_step(system, a, damping);
    }
    if active.is_empty() {
        return Ok(a.to_vec());
    }
    let sub = jac.select_columns(&active);
    let delta = newton_increment(&sub, &system.residual, damping).map_err(|e| SingularSystem {
        rank_deficient_columns: e.rank_deficient_columns.iter().map(|&i| active[i]).collect(),
    })?;
    let mut next = a.to_vec();
    for (k, &l) in active.iter().enumerate() {
        next[l] -= delta[k];
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Eta(f64),
    /// `delta^T delta` vanished: stationary point or zero residual.
    Stationary,
}

fn gd_direction(system: &ResidualSystem) -> (DVector<f64>, StepSize) {
    let g = &system.residual;
    let v = system.jacobian.tr_mul(g);
    let delta = &system.jacobian * &v;
    let dd = delta.norm_squared();
    if !(dd >= STATIONARY_CURVATURE) {
        return (v, StepSize::Stationary);
    }
    (v, StepSize::Eta(delta.dot(g) / dd))
}

/// Explicit step size `eta = (delta^T G) / (delta^T delta)` with
/// `delta = J J^T G`.
pub fn gd_step_size(system: &ResidualSystem) -> StepSize {
    gd_direction(system).1
}

/// Runs the method selected in `cfg`.
pub fn fit(
    model: &dyn OdeModel,
    series: &TimeSeries,
    deriv: &DerivativeEstimate,
    a0: &[f64],
    cfg: &SolverConfig,
) -> Result<FitResult> {
    cfg.validate(model.n_states())?;
    let start = Instant::now();
    let method = cfg.method;
    let n = model.n_states();
    let m = model.n_params();
    if a0.len() != m {
        return Err(Error::Shape(format!(
            "initial guess has {} entries, model '{}' has {} parameters",
            a0.len(),
            model.name(),
            m
        )));
    }
    if a0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("initial guess has non-finite entries".into()));
    }

    let mut selector = match cfg.subset_r {
        Some(r) if method.is_stochastic() => Some(SubsetSelector::new(n, r, cfg.seed)?),
        _ => None,
    };
    let mut a = a0.to_vec();
    let mut trace = Vec::new();
    let mut covered = vec![false; n];
    let mut termination = Termination::MaxIters;
    let mut diagnostic = None;

    for iteration in 1..=cfg.max_iters {
        let subset = selector.as_mut().map(|s| s.draw().to_vec());
        let system = assemble(model, series, deriv, &a, subset.as_deref())?;
        let residual_norm = system.norm();

        let (next, eta) = if method.is_newton() {
            let step = if method.is_stochastic() {
                nr_step_active(&system, &a, cfg.damping)
            } else {
                nr_step(&system, &a, cfg.damping)
            };
            match step {
                Ok(next) => (next, None),
                Err(e) => {
                    termination = Termination::SingularSystem;
                    diagnostic = Some(singular_message(&e, subset.as_deref(), iteration));
                    break;
                }
            }
        } else {
            match gd_direction(&system) {
                (v, StepSize::Eta(eta)) => (
                    a.iter().zip(v.iter()).map(|(x, g)| x - eta * g).collect(),
                    Some(eta),
                ),
                (_, StepSize::Stationary) if method.is_stochastic() => (a.clone(), Some(0.0)),
                (_, StepSize::Stationary) => {
                    trace.push(TraceRecord {
                        iteration,
                        params: a.clone(),
                        residual_norm,
                        step: 0.0,
                        eta: Some(0.0),
                        subset: None,
                    });
                    termination = Termination::StationaryStep;
                    break;
                }
            }
        };

        if next.iter().any(|v| !v.is_finite()) {
            termination = Termination::NonFiniteIterate;
            diagnostic = Some(format!(
                "iteration {iteration} produced {next:?} from {a:?} (residual norm {residual_norm})"
            ));
            break;
        }

        let step = a
            .iter()
            .zip(&next)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        trace.push(TraceRecord {
            iteration,
            params: next.clone(),
            residual_norm,
            step,
            eta,
            subset: subset.clone(),
        });
        a = next;

        if step <= cfg.epsilon {
            match &subset {
                Some(s) => {
                    for &j in s {
                        covered[j] = true;
                    }
                    if covered.iter().all(|c| *c) {
                        termination = Termination::ToleranceMet;
                        break;
                    }
                }
                None => {
                    termination = Termination::ToleranceMet;
                    break;
                }
            }
        } else {
            covered.fill(false);
        }
    }

    let converged = matches!(termination, Termination::ToleranceMet | Termination::StationaryStep);
    Ok(FitResult {
        method: method.as_str().to_string(),
        initial: a0.to_vec(),
        params: ParameterVector::new(a, model.param_labels())?,
        iterations: trace.len(),
        converged,
        termination,
        diagnostic,
        trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn singular_message(e: &SingularSystem, subset: Option<&[usize]>, iteration: usize) -> String {
    let cols: Vec<String> = e.rank_deficient_columns.iter().map(|l| format!("a{}", l + 1)).collect();
    let mut msg = format!(
        "rank-deficient Jacobian at iteration {iteration} (columns: {})",
        if cols.is_empty() { "unknown".into() } else { cols.join(", ") }
    );
    if let Some(s) = subset {
        let eqs: Vec<String> = s.iter().map(|j| format!("f{}", j + 1)).collect();
        msg.push_str(&format!("; equation subset {{{}}}", eqs.join(", ")));
    }
    msg
}

fn fit_with(
    method: Method,
    model: &dyn OdeModel,
    series: &TimeSeries,
    deriv: &DerivativeEstimate,
    a0: &[f64],
    cfg: &SolverConfig,
) -> Result<FitResult> {
    if cfg.method != method {
        return Err(Error::Config(format!(
            "{}_fit called with method {}",
            method, cfg.method
        )));
    }
    fit(model, series, deriv, a0, cfg)
}

pub fn nr_fit(model: &dyn OdeModel, series: &TimeSeries, deriv: &DerivativeEstimate, a0: &[f64], cfg: &SolverConfig) -> Result<FitResult> {
    fit_with(Method::Nr, model, series, deriv, a0, cfg)
}

pub fn snr_fit(model: &dyn OdeModel, series: &TimeSeries, deriv: &DerivativeEstimate, a0: &[f64], cfg: &SolverConfig) -> Result<FitResult> {
    fit_with(Method::Snr, model, series, deriv, a0, cfg)
}

pub fn gd_fit(model: &dyn OdeModel, series: &TimeSeries, deriv: &DerivativeEstimate, a0: &[f64], cfg: &SolverConfig) -> Result<FitResult> {
    fit_with(Method::Gd, model, series, deriv, a0, cfg)
}

pub fn sgd_fit(model: &dyn OdeModel, series: &TimeSeries, deriv: &DerivativeEstimate, a0: &[f64], cfg: &SolverConfig) -> Result<FitResult> {
    fit_with(Method::Sgd, model, series, deriv, a0, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceEstimate {
    /// The first iterate already sits on `a*`; no rate can be fitted.
    pub one_step: bool,
    /// Least-squares slope of `log e_{i+1}` against `log e_i`.
    pub order: Option<f64>,
    /// Geometric mean of `e_{i+1} / e_i` over the fitted tail.
    pub tail_ratio: Option<f64>,
    pub points: usize,
}

/// Iterates kept for the rate fit, counted from the end of the decreasing run.
const ORDER_WINDOW: usize = 5;

/// Empirical convergence order of `iterates` towards `a_star`, using the
/// infinity-norm error. Errors below `1e-12 * max(1, |a*|)` are treated as
/// converged and excluded.
pub fn empirical_convergence_order(iterates: &[Vec<f64>], a_star: &[f64]) -> Result<ConvergenceEstimate> {
    let scale = a_star.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let floor = 1e-12 * scale;
    let errors: Vec<f64> = iterates
        .iter()
        .map(|a| a.iter().zip(a_star).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        .collect();
    if errors.len() >= 2 && errors[0] > floor && errors[1] <= floor {
        return Ok(ConvergenceEstimate {
            one_step: true,
            order: None,
            tail_ratio: None,
            points: 2,
        });
    }
    let usable = errors.iter().take_while(|e| **e > floor).count();
    // last strictly decreasing run among the usable errors
    let mut start = 0;
    for i in 1..usable {
        if !(errors[i] < errors[i - 1]) {
            start = i;
        }
    }
    let run = &errors[start..usable];
    if run.len() < 4 {
        return Err(Error::InsufficientIterates(format!(
            "{} strictly decreasing errors above {floor:e}, need 4",
            run.len()
        )));
    }
    let tail = &run[run.len().saturating_sub(ORDER_WINDOW)..];
    let xs: Vec<f64> = tail[..tail.len() - 1].iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = tail[1..].iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let order = (sxx > 0.0).then(|| sxy / sxx);
    let tail_ratio = ((tail[tail.len() - 1] / tail[0]).ln() / k).exp();
    Ok(ConvergenceEstimate {
        one_step: false,
        order,
        tail_ratio: Some(tail_ratio),
        points: tail.len(),
    })
}
