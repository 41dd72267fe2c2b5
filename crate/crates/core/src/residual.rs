//! Stacked derivative-mismatch residuals and their parameter Jacobians.
//!
//! Rows are ordered data-index major: all selected equations of sample `d`
//! come before those of `d + 1`. Stochastic methods restrict the system to
//! a random subset of ODE components; whole equations are dropped at every
//! sample, data indices are never subsampled.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::OdeModel;
use crate::series::{DerivativeEstimate, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowIndex {
    /// Data index `d` (0-based).
    pub sample: usize,
    /// ODE component `j` (0-based).
    pub state: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSystem {
    /// `f_j(t_d, x_d, a) - x'_j(t_d)`.
    pub residual: DVector<f64>,
    /// `df_j/da (t_d, x_d, a)`, one row per residual entry.
    pub jacobian: DMatrix<f64>,
    pub row_index: Vec<RowIndex>,
}

impl ResidualSystem {
    pub fn rows(&self) -> usize {
        self.residual.len()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.residual.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.residual.norm()
    }
}

/// Builds the residual system at parameters `a`.
///
/// `subset` lists the 0-based equations to keep (sorted, distinct); `None`
/// keeps all of them.
pub fn assemble(
    model: &dyn OdeModel,
    series: &TimeSeries,
    deriv: &DerivativeEstimate,
    a: &[f64],
    subset: Option<&[usize]>,
) -> Result<ResidualSystem> {
    let n = model.n_states();
    let m = model.n_params();
    check_inputs(model, series, deriv, a)?;
    let all: Vec<usize>;
    let equations = match subset {
        Some(s) => {
            validate_subset(s, n)?;
            s
        }
        None => {
            all = (0..n).collect();
            &all
        }
    };

    let r = equations.len();
    let rows = deriv.len() * r;
    let mut residual = DVector::zeros(rows);
    let mut jacobian = DMatrix::zeros(rows, m);
    let mut row_index = Vec::with_capacity(rows);
    let mut f = vec![0.0; n];
    let mut jac = vec![0.0; n * m];
    let times = series.times();

    for d in 0..deriv.len() {
        let x = series.row(d);
        let dx = deriv.row(d);
        let domain = |e: crate::model::DomainError| Error::Domain {
            row: d,
            state: e.state,
            msg: e.msg,
        };
        model.rhs(times[d], x, a, &mut f).map_err(domain)?;
        model.param_jacobian(times[d], x, a, &mut jac).map_err(domain)?;
        for (s, &j) in equations.iter().enumerate() {
            let row = d * r + s;
            residual[row] = f[j] - dx[j];
            for l in 0..m {
                jacobian[(row, l)] = jac[j * m + l];
            }
            row_index.push(RowIndex { sample: d, state: j });
        }
    }
    Ok(ResidualSystem {
        residual,
        jacobian,
        row_index,
    })
}

fn check_inputs(
    model: &dyn OdeModel,
    series: &TimeSeries,
    deriv: &DerivativeEstimate,
    a: &[f64],
) -> Result<()> {
    let n = model.n_states();
    if series.n_states() != n || deriv.n_states() != n {
        return Err(Error::Shape(format!(
            "model '{}' has {} states, series has {}, derivatives have {}",
            model.name(),
            n,
            series.n_states(),
            deriv.n_states()
        )));
    }
    if a.len() != model.n_params() {
        return Err(Error::Shape(format!(
            "model '{}' has {} parameters, got {}",
            model.name(),
            model.n_params(),
            a.len()
        )));
    }
    if deriv.len() >= series.len() || deriv.times() != &series.times()[..deriv.len()] {
        return Err(Error::Shape(
            "derivative times are not a proper prefix of the series times".into(),
        ));
    }
    Ok(())
}

fn validate_subset(subset: &[usize], n: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::Config("equation subset is empty".into()));
    }
    if subset.windows(2).any(|w| w[0] >= w[1]) || subset.iter().any(|&j| j >= n) {
        return Err(Error::Config(format!(
            "equation subset {subset:?} must be sorted, distinct and below {n}"
        )));
    }
    Ok(())
}

/// Uniform sampler over the `C(n, r)` subsets of `r` equations.
#[derive(Debug, Clone)]
pub struct SubsetSelector {
    n: usize,
    r: usize,
    rng: ChaCha8Rng,
    current: Vec<usize>,
}

impl SubsetSelector {
    pub fn new(n: usize, r: usize, seed: u64) -> Result<Self> {
        if r == 0 || r > n {
            return Err(Error::Config(format!(
                "subset size r = {r} must satisfy 1 <= r <= {n}"
            )));
        }
        Ok(SubsetSelector {
            n,
            r,
            rng: ChaCha8Rng::seed_from_u64(seed),
            current: (0..r).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// The most recent draw (initially the first `r` equations).
    pub fn current(&self) -> &[usize] {
        &self.current
    }

    /// Draws a fresh subset, returned sorted.
    pub fn draw(&mut self) -> &[usize] {
        let mut picked = index::sample(&mut self.rng, self.n, self.r).into_vec();
        picked.sort_unstable();
        self.current = picked;
        &self.current
    }
}
