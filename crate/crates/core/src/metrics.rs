//! Goodness-of-fit table: bias, MAPE, MAE, RMSE and R² per state and per
//! right-hand-side component.
//!
//! Conventions: bias is `mean(predicted - observed)`; MAPE is a fraction and
//! skips points with `|observed| <= MAPE_MIN_OBSERVED`; R² is taken about the
//! observed mean. Undefined values (constant observations, every point
//! skipped for MAPE) are `None`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OdeModel;
use crate::series::{DerivativeEstimate, TimeSeries};

pub const MAPE_MIN_OBSERVED: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub bias: f64,
    pub mape: Option<f64>,
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    /// Points left out of the MAPE average.
    pub mape_excluded: usize,
}

pub fn compute_metrics(observed: &[f64], predicted: &[f64]) -> Result<Metrics> {
    if observed.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "observed has {} points, predicted has {}",
            observed.len(),
            predicted.len()
        )));
    }
    if observed.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: observed.len(),
        });
    }
    if let Some(i) = observed.iter().chain(predicted).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: i % observed.len() + 1,
            col: i / observed.len(),
        });
    }

    let n = observed.len() as f64;
    let mut sum = 0.0;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut pct = 0.0;
    let mut pct_count = 0usize;
    for (o, p) in observed.iter().zip(predicted) {
        let e = p - o;
        sum += e;
        abs += e.abs();
        sq += e * e;
        if o.abs() > MAPE_MIN_OBSERVED {
            pct += (e / o).abs();
            pct_count += 1;
        }
    }
    let mean_obs = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean_obs).powi(2)).sum();
    Ok(Metrics {
        bias: sum / n,
        mape: (pct_count > 0).then(|| pct / pct_count as f64),
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        r2: (ss_tot > 0.0).then(|| 1.0 - sq / ss_tot),
        mape_excluded: observed.len() - pct_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub quantity: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset_id: Option<String>,
    pub fit_id: Option<String>,
    pub rows: Vec<ReportRow>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn row(&self, quantity: &str) -> Option<&Metrics> {
        self.rows.iter().find(|r| r.quantity == quantity).map(|r| &r.metrics)
    }

    /// Mean R² over the state rows, `None` if any is undefined.
    pub fn mean_state_r2(&self, state_labels: &[String]) -> Option<f64> {
        let mut total = 0.0;
        for label in state_labels {
            total += self.row(label)?.r2?;
        }
        Some(total / state_labels.len() as f64)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["quantity", "bias", "mape", "mae", "rmse", "r2"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            let m = &row.metrics;
            wtr.write_record([
                row.quantity.clone(),
                m.bias.to_string(),
                opt(m.mape),
                m.mae.to_string(),
                m.rmse.to_string(),
                opt(m.r2),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// One row per state: `data` observed, `fitted` predicted.
pub fn state_rows(data: &TimeSeries, fitted: &TimeSeries) -> Result<Vec<ReportRow>> {
    if data.times() != fitted.times() || data.n_states() != fitted.n_states() {
        return Err(Error::Shape(
            "fitted trajectory is not sampled on the data grid".into(),
        ));
    }
    (0..data.n_states())
        .map(|k| {
            Ok(ReportRow {
                quantity: data.labels()[k].clone(),
                metrics: compute_metrics(&data.column(k), &fitted.column(k))?,
            })
        })
        .collect()
}

/// One row per right-hand-side component: derivative estimates observed,
/// `f_j(t_d, x_d, a_hat)` on the observed states predicted.
pub fn derivative_rows(
    model: &dyn OdeModel,
    states: &TimeSeries,
    deriv: &DerivativeEstimate,
    a_hat: &[f64],
) -> Result<Vec<ReportRow>> {
    let n = model.n_states();
    if deriv.n_states() != n || states.n_states() != n || deriv.times() != &states.times()[..deriv.len().min(states.len())] {
        return Err(Error::Shape(
            "derivative estimate does not match the state series".into(),
        ));
    }
    let mut predicted = vec![Vec::with_capacity(deriv.len()); n];
    let mut f = vec![0.0; n];
    for d in 0..deriv.len() {
        model
            .rhs(deriv.times()[d], states.row(d), a_hat, &mut f)
            .map_err(|e| Error::Domain {
                row: d,
                state: e.state,
                msg: e.msg,
            })?;
        for j in 0..n {
            predicted[j].push(f[j]);
        }
    }
    (0..n)
        .map(|j| {
            Ok(ReportRow {
                quantity: format!("f{}", j + 1),
                metrics: compute_metrics(&deriv.column(j), &predicted[j])?,
            })
        })
        .collect()
}

/// State rows followed by derivative rows, all taken from `data`.
pub fn paper_table(
    model: &dyn OdeModel,
    data: &TimeSeries,
    fitted: &TimeSeries,
    deriv_obs: &DerivativeEstimate,
    a_hat: &[f64],
) -> Result<MetricsReport> {
    let mut rows = state_rows(data, fitted)?;
    rows.extend(derivative_rows(model, data, deriv_obs, a_hat)?);
    Ok(MetricsReport {
        rows,
        ..Default::default()
    })
}
