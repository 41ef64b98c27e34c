//! Cox proportional hazards regression.
//!
//! Coefficients maximize the log partial likelihood (Efron or Breslow tie
//! handling) by Newton–Raphson with step halving. The cumulative baseline
//! hazard is the Breslow estimator evaluated at the covariate means, so
//! `S(t | x) = exp(-H0(t) * exp((x - center)' beta))`.

use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FeatureKind, FeatureSchema, FeatureValue, PatientRecord, Prediction, TimeGrid};

/// Coefficients beyond this magnitude are treated as separation.
pub const SEPARATION_LIMIT: f64 = 50.0;

const MAX_HALVINGS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoxError {
    #[error("no events in data; partial likelihood undefined")]
    NoEvents,
    #[error("need n >= d + 1 subjects (n={n}, d={d})")]
    TooFewSubjects { n: usize, d: usize },
    #[error("covariate column {0} is constant")]
    ConstantColumn(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("information matrix is singular (try a ridge penalty)")]
    SingularHessian,
    #[error("coefficient {index} diverged to {value} (separation)")]
    Separation { index: usize, value: f64 },
    #[error("no convergence after {iterations} iterations (log partial likelihood {log_likelihood})")]
    NonConvergence { iterations: usize, log_likelihood: f64 },
    #[error("expected {expected} covariates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMethod {
    #[default]
    Efron,
    Breslow,
}

impl FromStr for TieMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "efron" => Ok(TieMethod::Efron),
            "breslow" => Ok(TieMethod::Breslow),
            _ => Err(format!("unknown tie method '{s}' (expected efron or breslow)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    pub ties: TieMethod,
    pub tol: f64,
    pub max_iter: usize,
    pub ridge: f64,
    pub standardize: bool,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            ties: TieMethod::Efron,
            tol: 1e-9,
            max_iter: 100,
            ridge: 0.0,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub log_likelihood: f64,
    pub converged: bool,
}

/// Cumulative baseline hazard at event times, for covariates equal to `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    pub times: Vec<f64>,
    pub cumulative_hazard: Vec<f64>,
}

impl BaselineHazard {
    pub fn at(&self, t: f64) -> f64 {
        match self.times.partition_point(|x| *x <= t) {
            0 => 0.0,
            i => self.cumulative_hazard[i - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub coefficients: Vec<f64>,
    pub center: Vec<f64>,
    pub baseline: BaselineHazard,
    pub options: CoxOptions,
    pub diagnostics: FitDiagnostics,
}

/// Log partial likelihood with its gradient and information matrix
/// (negative Hessian).
#[derive(Debug, Clone)]
pub struct PartialLikelihood {
    pub log_likelihood: f64,
    pub gradient: DVector<f64>,
    pub information: DMatrix<f64>,
}

fn check_data(x: &DMatrix<f64>, times: &[f64], events: &[bool]) -> Result<(), CoxError> {
    let (n, d) = x.shape();
    if times.len() != n || events.len() != n {
        return Err(CoxError::InvalidInput(format!(
            "{n} covariate rows, {} times, {} events",
            times.len(),
            events.len()
        )));
    }
    if times.iter().any(|t| !t.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(CoxError::InvalidInput("non-finite time or covariate".into()));
    }
    if d == 0 {
        return Err(CoxError::InvalidInput("no covariates".into()));
    }
    Ok(())
}

/// Evaluates the log partial likelihood at `beta`.
pub fn partial_likelihood(
    x: &DMatrix<f64>,
    times: &[f64],
    events: &[bool],
    beta: &DVector<f64>,
    ties: TieMethod,
) -> Result<PartialLikelihood, CoxError> {
    check_data(x, times, events)?;
    let (n, d) = x.shape();
    if beta.len() != d {
        return Err(CoxError::DimensionMismatch {
            expected: d,
            got: beta.len(),
        });
    }
    let eta = x * beta;
    // shifting every linear predictor by a constant leaves the likelihood unchanged
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(d);
    let mut s2 = DMatrix::<f64>::zeros(d, d);
    let mut loglik = 0.0;
    let mut grad = DVector::<f64>::zeros(d);
    let mut info = DMatrix::<f64>::zeros(d, d);

    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let mut j = i;
        let mut deaths = 0usize;
        let mut d0 = 0.0;
        let mut d1 = DVector::<f64>::zeros(d);
        let mut d2 = DMatrix::<f64>::zeros(d, d);
        while j < n && times[order[j]] == t {
            let k = order[j];
            let xk = x.row(k).transpose();
            let xx = &xk * xk.transpose();
            s0 += w[k];
            s1.axpy(w[k], &xk, 1.0);
            s2 += &xx * w[k];
            if events[k] {
                deaths += 1;
                d0 += w[k];
                d1.axpy(w[k], &xk, 1.0);
                d2 += &xx * w[k];
                loglik += eta[k] - shift;
                grad += &xk;
            }
            j += 1;
        }
        for l in 0..deaths {
            let frac = match ties {
                TieMethod::Efron => l as f64 / deaths as f64,
                TieMethod::Breslow => 0.0,
            };
            let a0 = s0 - frac * d0;
            let a1 = &s1 - &d1 * frac;
            let a2 = &s2 - &d2 * frac;
            loglik -= a0.ln();
            grad -= &a1 / a0;
            info += &a2 / a0 - (&a1 * a1.transpose()) / (a0 * a0);
        }
        i = j;
    }
    Ok(PartialLikelihood {
        log_likelihood: loglik,
        gradient: grad,
        information: info,
    })
}

fn penalized(mut pl: PartialLikelihood, beta: &DVector<f64>, ridge: f64) -> PartialLikelihood {
    if ridge > 0.0 {
        pl.log_likelihood -= 0.5 * ridge * beta.norm_squared();
        pl.gradient -= beta * ridge;
        for k in 0..beta.len() {
            pl.information[(k, k)] += ridge;
        }
    }
    pl
}

/// Fits a Cox model to covariate rows `x` (n x d).
pub fn fit(x: &DMatrix<f64>, times: &[f64], events: &[bool], options: CoxOptions) -> Result<CoxModel, CoxError> {
    check_data(x, times, events)?;
    let (n, d) = x.shape();
    if !events.iter().any(|e| *e) {
        return Err(CoxError::NoEvents);
    }
    if n < d + 1 {
        return Err(CoxError::TooFewSubjects { n, d });
    }
    if times.iter().any(|t| *t < 0.0) {
        return Err(CoxError::InvalidInput("negative time".into()));
    }

    let center: Vec<f64> = (0..d).map(|k| x.column(k).mean()).collect();
    let mut scale = vec![1.0; d];
    for k in 0..d {
        let col = x.column(k);
        if col.iter().all(|v| *v == col[0]) {
            return Err(CoxError::ConstantColumn(k));
        }
        if options.standardize {
            let var = col.iter().map(|v| (v - center[k]).powi(2)).sum::<f64>() / n as f64;
            scale[k] = var.sqrt();
        }
    }
    let z = DMatrix::from_fn(n, d, |i, k| (x[(i, k)] - center[k]) / scale[k]);

    let mut beta = DVector::<f64>::zeros(d);
    let mut current = penalized(partial_likelihood(&z, times, events, &beta, options.ties)?, &beta, options.ridge);
    let mut iterations = 0;
    let mut converged = false;
    let mut last_step = 0.0;
    while iterations < options.max_iter {
        iterations += 1;
        let Some(chol) = current.information.clone().cholesky() else {
            // curvature lost to cancellation while coefficients still move in
            // large strides: the likelihood keeps rising toward infinity
            if last_step >= 0.5 {
                let (index, value) = (0..d)
                    .map(|k| (k, beta[k] / scale[k]))
                    .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                    .expect("d >= 1");
                return Err(CoxError::Separation { index, value });
            }
            return Err(CoxError::SingularHessian);
        };
        let mut step = chol.solve(&current.gradient);
        if step.iter().any(|s| !s.is_finite()) {
            return Err(CoxError::SingularHessian);
        }
        let mut halvings = 0;
        let (candidate, next) = loop {
            let candidate = &beta + &step;
            let next = penalized(partial_likelihood(&z, times, events, &candidate, options.ties)?, &candidate, options.ridge);
            let slack = 1e-12 * (1.0 + current.log_likelihood.abs());
            if next.log_likelihood.is_finite() && next.log_likelihood >= current.log_likelihood - slack {
                break (candidate, next);
            }
            if halvings == MAX_HALVINGS {
                step.fill(0.0);
                break (beta.clone(), current.clone());
            }
            step /= 2.0;
            halvings += 1;
        };
        for (k, b) in candidate.iter().enumerate() {
            let raw = b / scale[k];
            if !raw.is_finite() || raw.abs() > SEPARATION_LIMIT {
                return Err(CoxError::Separation { index: k, value: raw });
            }
        }
        beta = candidate;
        current = next;
        last_step = step.amax();
        if last_step < options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CoxError::NonConvergence {
            iterations,
            log_likelihood: current.log_likelihood,
        });
    }

    let coefficients: Vec<f64> = (0..d).map(|k| beta[k] / scale[k]).collect();
    let baseline = breslow_baseline(&z, times, events, &beta);
    Ok(CoxModel {
        coefficients,
        center,
        baseline,
        options,
        diagnostics: FitDiagnostics {
            iterations,
            log_likelihood: current.log_likelihood,
            converged,
        },
    })
}

/// Breslow cumulative hazard for covariate rows `z` at coefficient `beta`.
pub fn breslow_baseline(z: &DMatrix<f64>, times: &[f64], events: &[bool], beta: &DVector<f64>) -> BaselineHazard {
    let n = times.len();
    let eta = z * beta;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut steps = Vec::new();
    let mut risk = 0.0;
    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let mut deaths = 0usize;
        let mut j = i;
        while j < n && times[order[j]] == t {
            risk += eta[order[j]].exp();
            deaths += usize::from(events[order[j]]);
            j += 1;
        }
        if deaths > 0 {
            steps.push((t, deaths as f64 / risk));
        }
        i = j;
    }
    steps.reverse();
    let mut cum = 0.0;
    let mut out = BaselineHazard {
        times: Vec::with_capacity(steps.len()),
        cumulative_hazard: Vec::with_capacity(steps.len()),
    };
    for (t, h) in steps {
        cum += h;
        out.times.push(t);
        out.cumulative_hazard.push(cum);
    }
    out
}

impl CoxModel {
    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), CoxError> {
        if x.len() != self.dim() {
            return Err(CoxError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Linear predictor `x' beta`.
    pub fn predict_risk(&self, x: &[f64]) -> Result<f64, CoxError> {
        self.check_dim(x)?;
        Ok(x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }

    pub fn predict_risk_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, CoxError> {
        rows.iter().map(|r| self.predict_risk(r)).collect()
    }

    /// Survival curve on `grid`; flat beyond the last observed event.
    pub fn predict_survival(&self, x: &[f64], grid: &Arc<TimeGrid>) -> Result<Prediction, CoxError> {
        self.check_dim(x)?;
        let centered: f64 = x
            .iter()
            .zip(&self.center)
            .zip(&self.coefficients)
            .map(|((v, c), b)| (v - c) * b)
            .sum();
        let rel = centered.exp();
        let values: Vec<f64> = grid
            .times()
            .iter()
            .map(|&t| (-self.baseline.at(t) * rel).exp().clamp(0.0, 1.0))
            .collect();
        Prediction::new(grid.clone(), values).map_err(|e| CoxError::InvalidInput(e.to_string()))
    }
}

/// Numeric encoding of schema features for regression: continuous and
/// ordinal as-is, booleans as 0/1, categoricals as treatment-coded
/// indicators against their first level (sorted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub columns: Vec<DesignColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignColumn {
    pub name: String,
    pub feature: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub level: Option<String>,
}

impl Design {
    /// Builds the encoding from a schema and the training records that fix
    /// categorical levels.
    pub fn from_records(schema: &FeatureSchema, records: &[PatientRecord]) -> Self {
        let mut columns = Vec::new();
        for (i, f) in schema.features.iter().enumerate() {
            if f.kind == FeatureKind::Categorical {
                let mut levels: Vec<&str> = records
                    .iter()
                    .filter_map(|r| match r.values.get(i) {
                        Some(FeatureValue::Category(c)) => Some(c.as_str()),
                        _ => None,
                    })
                    .collect();
                levels.sort_unstable();
                levels.dedup();
                for level in levels.into_iter().skip(1) {
                    columns.push(DesignColumn {
                        name: format!("{}={}", f.name, level),
                        feature: i,
                        level: Some(level.to_string()),
                    });
                }
            } else {
                columns.push(DesignColumn {
                    name: f.name.clone(),
                    feature: i,
                    level: None,
                });
            }
        }
        Self { columns }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn encode(&self, record: &PatientRecord) -> Result<Vec<f64>, CoxError> {
        self.columns
            .iter()
            .map(|c| {
                let v = record.values.get(c.feature).ok_or_else(|| {
                    CoxError::InvalidInput(format!("patient '{}' lacks feature {}", record.id, c.feature))
                })?;
                match (v, &c.level) {
                    (FeatureValue::Category(s), Some(level)) => Ok(f64::from(u8::from(s == level))),
                    (FeatureValue::Bool(b), None) => Ok(f64::from(u8::from(*b))),
                    (v, None) if v.as_f64().is_some() => Ok(v.as_f64().unwrap_or_default()),
                    (v, _) => Err(CoxError::InvalidInput(format!(
                        "patient '{}': cannot encode {v:?} for column '{}'",
                        record.id, c.name
                    ))),
                }
            })
            .collect()
    }

    pub fn matrix(&self, records: &[PatientRecord]) -> Result<DMatrix<f64>, CoxError> {
        let rows = records.iter().map(|r| self.encode(r)).collect::<Result<Vec<_>, _>>()?;
        Ok(DMatrix::from_fn(rows.len(), self.width(), |i, k| rows[i][k]))
    }
}
