//! Domain types shared by every stage of the pipeline: feature schemas,
//! patient records, survival outcomes, survival-curve predictions and the
//! cohort container that ties them together.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical,
    Boolean,
    Ordinal,
    Continuous,
}

/// How two values of one feature are judged equal for the entry-level loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Comparator {
    #[default]
    Exact,
    Tolerance {
        eps: f64,
    },
    Binned {
        edges: Vec<f64>,
    },
}

impl Comparator {
    /// True when `a` and `b` count as different entries.
    ///
    /// Values must already be type-compatible; a missing value always differs.
    pub fn differs(&self, a: &FeatureValue, b: &FeatureValue) -> bool {
        match self {
            Comparator::Exact => !a.same_as(b),
            Comparator::Tolerance { eps } => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => (x - y).abs() > *eps,
                _ => !a.same_as(b),
            },
            Comparator::Binned { edges } => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => bin_index(edges, x) != bin_index(edges, y),
                _ => !a.same_as(b),
            },
        }
    }
}

fn bin_index(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|e| *e <= x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub comparator: Comparator,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, kind: FeatureKind, comparator: Comparator) -> Self {
        Self {
            name: name.into(),
            kind,
            comparator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let schema = Self { features };
        let problems = schema.problems();
        if problems.is_empty() {
            Ok(schema)
        } else {
            Err(Error::SchemaMismatch(problems.join("; ")))
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Lists every violated schema invariant.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                out.push(format!("duplicate feature name '{}'", f.name));
            }
            if RESERVED_COLUMNS.contains(&f.name.as_str()) {
                out.push(format!("feature name '{}' is reserved", f.name));
            }
            match (&f.kind, &f.comparator) {
                (FeatureKind::Categorical | FeatureKind::Boolean, c) if *c != Comparator::Exact => {
                    out.push(format!(
                        "feature '{}': categorical and boolean features require the exact comparator",
                        f.name
                    ));
                }
                (_, Comparator::Tolerance { eps }) if !(eps.is_finite() && *eps >= 0.0) => {
                    out.push(format!("feature '{}': tolerance eps must be finite and >= 0", f.name));
                }
                (_, Comparator::Binned { edges }) => {
                    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                        out.push(format!(
                            "feature '{}': bin edges must be finite and strictly increasing",
                            f.name
                        ));
                    }
                }
                _ => {}
            }
        }
        out
    }
}

/// Column names the cohort CSV reserves for identifiers and outcomes.
pub const RESERVED_COLUMNS: [&str; 4] = ["id", "time", "event", "endpoint"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Missing,
    Bool(bool),
    Int(i64),
    Real(f64),
    Category(String),
}

impl FeatureValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FeatureValue::Int(i) => Some(*i as f64),
            FeatureValue::Real(x) => Some(*x),
            _ => None,
        }
    }

    fn same_as(&self, other: &FeatureValue) -> bool {
        match (self, other) {
            (FeatureValue::Missing, _) | (_, FeatureValue::Missing) => false,
            (FeatureValue::Bool(a), FeatureValue::Bool(b)) => a == b,
            (FeatureValue::Category(a), FeatureValue::Category(b)) => a == b,
            _ => match (self.as_f64(), other.as_f64()) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            },
        }
    }

    pub fn is_compatible(&self, kind: FeatureKind) -> bool {
        match (self, kind) {
            (FeatureValue::Category(_), FeatureKind::Categorical) => true,
            (FeatureValue::Bool(_), FeatureKind::Boolean) => true,
            (FeatureValue::Int(_), FeatureKind::Ordinal) => true,
            (FeatureValue::Int(_), FeatureKind::Continuous) => true,
            (FeatureValue::Real(x), FeatureKind::Continuous) => x.is_finite(),
            _ => false,
        }
    }

    /// Parses one CSV cell according to the feature kind. Empty cells map to
    /// `Missing` so validation can report them.
    pub fn parse(raw: &str, kind: FeatureKind) -> std::result::Result<Self, String> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Ok(FeatureValue::Missing);
        }
        match kind {
            FeatureKind::Categorical => Ok(FeatureValue::Category(raw.to_string())),
            FeatureKind::Boolean => match raw.to_ascii_lowercase().as_str() {
                "1" | "true" | "yes" => Ok(FeatureValue::Bool(true)),
                "0" | "false" | "no" => Ok(FeatureValue::Bool(false)),
                _ => Err(format!("'{raw}' is not a boolean")),
            },
            FeatureKind::Ordinal => raw
                .parse::<i64>()
                .map(FeatureValue::Int)
                .map_err(|_| format!("'{raw}' is not an integer")),
            FeatureKind::Continuous => raw
                .parse::<f64>()
                .map(FeatureValue::Real)
                .map_err(|_| format!("'{raw}' is not a number")),
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Missing => Ok(()),
            FeatureValue::Bool(b) => write!(f, "{}", u8::from(*b)),
            FeatureValue::Int(i) => write!(f, "{i}"),
            FeatureValue::Real(x) => f.write_str(&crate::io::format_f64(*x)),
            FeatureValue::Category(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub values: Vec<FeatureValue>,
}

impl PatientRecord {
    pub fn new(id: impl Into<String>, values: Vec<FeatureValue>) -> Self {
        Self {
            id: id.into(),
            values,
        }
    }

    /// Checks value count and per-feature type compatibility.
    pub fn check(&self, schema: &FeatureSchema) -> Result<()> {
        if self.values.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "patient '{}' has {} values, schema has {} features",
                self.id,
                self.values.len(),
                schema.len()
            )));
        }
        for (v, f) in self.values.iter().zip(&schema.features) {
            if !v.is_compatible(f.kind) {
                return Err(Error::SchemaMismatch(format!(
                    "patient '{}': value {:?} incompatible with {:?} feature '{}'",
                    self.id, v, f.kind, f.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalOutcome {
    pub time: f64,
    pub event: bool,
    pub endpoint: String,
}

impl SurvivalOutcome {
    pub fn new(time: f64, event: bool, endpoint: impl Into<String>) -> Self {
        Self {
            time,
            event,
            endpoint: endpoint.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidGrid("grid times must be finite and >= 0".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("grid times must be strictly increasing".into()));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the last grid point at or before `t`, clamped to the first point.
    pub fn step_index(&self, t: f64) -> usize {
        self.times.partition_point(|x| *x <= t).saturating_sub(1)
    }
}

/// A survival curve sampled on a shared [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    grid: Arc<TimeGrid>,
    values: Vec<f64>,
}

impl Prediction {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        let p = Self::new_unchecked(grid, values);
        match p.problems().into_iter().next() {
            None => Ok(p),
            Some(msg) => Err(Error::InvalidPrediction(msg)),
        }
    }

    /// Builds a prediction without checking its invariants; use
    /// [`validate_cohort`] to report problems afterwards.
    pub fn new_unchecked(grid: Arc<TimeGrid>, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn same_grid(&self, other: &Prediction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.values.len() != self.grid.len() {
            out.push(format!(
                "{} values for a grid of {} times",
                self.values.len(),
                self.grid.len()
            ));
        }
        if self.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            out.push("value outside [0,1]".to_string());
        }
        if self.values.windows(2).any(|w| w[1] > w[0]) {
            out.push("survival curve increases along the grid".to_string());
        }
        out
    }
}

/// A single invariant violation found by [`validate_cohort`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub patient: Option<String>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.patient {
            Some(id) => write!(f, "patient '{}': {}: {}", id, self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cohort {
    pub schema: FeatureSchema,
    pub patients: Vec<PatientRecord>,
    /// Aligned with `patients` by position.
    pub outcomes: Vec<SurvivalOutcome>,
    /// Aligned with `patients` by position when present.
    pub predictions: Option<Vec<Prediction>>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.patients.iter().position(|p| p.id == id)
    }

    pub fn times(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.outcomes.iter().map(|o| o.event).collect()
    }

    /// Attaches predictions keyed by patient id, aligning them to patient order.
    pub fn attach_predictions(&mut self, table: &crate::io::PredictionTable) -> Result<()> {
        let lookup: std::collections::HashMap<&str, usize> = table
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut preds = Vec::with_capacity(self.patients.len());
        for p in &self.patients {
            let &i = lookup
                .get(p.id.as_str())
                .ok_or_else(|| Error::MissingPrediction(p.id.clone()))?;
            preds.push(table.curves[i].clone());
        }
        self.predictions = Some(preds);
        Ok(())
    }
}

/// Returns every violated cohort invariant; an empty list means the cohort is valid.
pub fn validate_cohort(cohort: &Cohort) -> Vec<Violation> {
    let mut out = Vec::new();
    let schema = &cohort.schema;
    for msg in schema.problems() {
        out.push(Violation {
            patient: None,
            field: "schema".into(),
            message: msg,
        });
    }

    let mut seen = HashSet::new();
    for p in &cohort.patients {
        if !seen.insert(p.id.as_str()) {
            out.push(Violation {
                patient: Some(p.id.clone()),
                field: "id".into(),
                message: "duplicate patient id".into(),
            });
        }
        if p.values.len() != schema.len() {
            out.push(Violation {
                patient: Some(p.id.clone()),
                field: "values".into(),
                message: format!("{} values, schema has {} features", p.values.len(), schema.len()),
            });
            continue;
        }
        for (v, f) in p.values.iter().zip(&schema.features) {
            let message = match v {
                FeatureValue::Missing => "missing value".to_string(),
                v if !v.is_compatible(f.kind) => format!("value {v:?} incompatible with {:?}", f.kind),
                _ => continue,
            };
            out.push(Violation {
                patient: Some(p.id.clone()),
                field: f.name.clone(),
                message,
            });
        }
    }

    if cohort.outcomes.len() != cohort.patients.len() {
        out.push(Violation {
            patient: None,
            field: "outcomes".into(),
            message: format!(
                "{} outcomes for {} patients",
                cohort.outcomes.len(),
                cohort.patients.len()
            ),
        });
    }
    for (p, o) in cohort.patients.iter().zip(&cohort.outcomes) {
        if !(o.time.is_finite() && o.time > 0.0) {
            out.push(Violation {
                patient: Some(p.id.clone()),
                field: "time".into(),
                message: format!("time {} must be finite and > 0", o.time),
            });
        }
    }

    if let Some(preds) = &cohort.predictions {
        if preds.len() != cohort.patients.len() {
            out.push(Violation {
                patient: None,
                field: "predictions".into(),
                message: format!("{} predictions for {} patients", preds.len(), cohort.patients.len()),
            });
        }
        let first = preds.first();
        for (p, pred) in cohort.patients.iter().zip(preds) {
            if let Some(first) = first {
                if !pred.same_grid(first) {
                    out.push(Violation {
                        patient: Some(p.id.clone()),
                        field: "prediction".into(),
                        message: "time grid differs from the cohort grid".into(),
                    });
                }
            }
            for msg in pred.problems() {
                out.push(Violation {
                    patient: Some(p.id.clone()),
                    field: "prediction".into(),
                    message: msg,
                });
            }
        }
    }
    out
}
