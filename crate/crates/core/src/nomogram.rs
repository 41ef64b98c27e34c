//! Declarative point-table nomograms.
//!
//! A nomogram is a list of criteria; each criterion holds mutually exclusive
//! rules, and each rule is a conjunction of feature predicates awarding a
//! fixed number of points. The intracranial-progression nomogram ships as
//! [`ICP_NOMOGRAM_JSON`].

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{FeatureKind, FeatureSchema, FeatureValue, PatientRecord};

/// Bundled intracranial-progression nomogram.
pub const ICP_NOMOGRAM_JSON: &str = include_str!("../data/icp_nomogram.json");

/// Feature names the bundled ICP nomogram expects in the schema.
pub const ICP_FEATURES: [&str; 4] = ["histology", "brain_mets", "wbrt_history", "years_dx_to_mets"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomogramSpec {
    #[serde(default)]
    pub name: String,
    pub criteria: Vec<Criterion>,
    pub risk_cutoff: u32,
    pub risk_labels: (String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub when: Vec<Predicate>,
    pub points: u32,
}

/// A test on one feature: either a value set (`in` / `not_in`) or an
/// interval with any combination of `ge`, `gt`, `le`, `lt` bounds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Predicate {
    pub feature: String,
    #[serde(rename = "in", default, skip_serializing_if = "Option::is_none")]
    pub is_in: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_in: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub le: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lt: Option<f64>,
}

impl Predicate {
    fn is_interval(&self) -> bool {
        self.ge.is_some() || self.gt.is_some() || self.le.is_some() || self.lt.is_some()
    }

    fn matches(&self, v: &FeatureValue) -> bool {
        if matches!(v, FeatureValue::Missing) {
            return false;
        }
        if let Some(set) = &self.is_in {
            return set.iter().any(|s| value_eq(s, v));
        }
        if let Some(set) = &self.not_in {
            return !set.iter().any(|s| value_eq(s, v));
        }
        let Some(x) = v.as_f64() else { return false };
        self.ge.is_none_or(|b| x >= b)
            && self.gt.is_none_or(|b| x > b)
            && self.le.is_none_or(|b| x <= b)
            && self.lt.is_none_or(|b| x < b)
    }
}

fn value_eq(json: &Value, v: &FeatureValue) -> bool {
    match (json, v) {
        (Value::String(s), FeatureValue::Category(c)) => s == c,
        (Value::Bool(b), FeatureValue::Bool(c)) => b == c,
        (Value::Number(n), v) => match (n.as_f64(), v.as_f64()) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        },
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RiskClass {
    Low,
    High,
}

impl NomogramSpec {
    pub fn icp() -> Self {
        serde_json::from_str(ICP_NOMOGRAM_JSON).expect("bundled nomogram parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }

    pub fn max_points(&self) -> u32 {
        self.criteria
            .iter()
            .map(|c| c.rules.iter().map(|r| r.points).max().unwrap_or(0))
            .sum()
    }

    /// Low iff `points < risk_cutoff`.
    pub fn risk_class(&self, points: u32) -> RiskClass {
        if points < self.risk_cutoff {
            RiskClass::Low
        } else {
            RiskClass::High
        }
    }

    pub fn risk_label(&self, points: u32) -> &str {
        match self.risk_class(points) {
            RiskClass::Low => &self.risk_labels.0,
            RiskClass::High => &self.risk_labels.1,
        }
    }

    /// Resolves feature names against `schema` and checks predicate types.
    pub fn bind(&self, schema: &FeatureSchema) -> Result<Nomogram> {
        let mut columns = Vec::new();
        for c in &self.criteria {
            if c.rules.is_empty() {
                return Err(Error::InvalidNomogram(format!("criterion '{}' has no rules", c.name)));
            }
            let mut rule_cols = Vec::new();
            for r in &c.rules {
                let mut cols = Vec::new();
                for p in &r.when {
                    let idx = schema.index_of(&p.feature).ok_or_else(|| {
                        Error::InvalidNomogram(format!("feature '{}' not in schema", p.feature))
                    })?;
                    check_predicate(p, schema.features[idx].kind)?;
                    cols.push(idx);
                }
                rule_cols.push(cols);
            }
            columns.push(rule_cols);
        }
        Ok(Nomogram {
            spec: self.clone(),
            columns,
        })
    }
}

fn check_predicate(p: &Predicate, kind: FeatureKind) -> Result<()> {
    let forms = [p.is_in.is_some(), p.not_in.is_some(), p.is_interval()];
    if forms.iter().filter(|f| **f).count() != 1 {
        return Err(Error::InvalidNomogram(format!(
            "predicate on '{}' must use exactly one of in, not_in or interval bounds",
            p.feature
        )));
    }
    let numeric = matches!(kind, FeatureKind::Ordinal | FeatureKind::Continuous);
    if p.is_interval() && !numeric {
        return Err(Error::InvalidNomogram(format!(
            "interval predicate on non-numeric feature '{}'",
            p.feature
        )));
    }
    for v in p.is_in.iter().chain(&p.not_in).flatten() {
        let ok = match v {
            Value::String(_) => kind == FeatureKind::Categorical,
            Value::Bool(_) => kind == FeatureKind::Boolean,
            Value::Number(_) => numeric,
            _ => false,
        };
        if !ok {
            return Err(Error::InvalidNomogram(format!(
                "value {v} does not fit {kind:?} feature '{}'",
                p.feature
            )));
        }
    }
    Ok(())
}

/// A nomogram bound to a schema, ready to score records.
#[derive(Debug, Clone)]
pub struct Nomogram {
    spec: NomogramSpec,
    // criterion -> rule -> predicate column
    columns: Vec<Vec<Vec<usize>>>,
}

impl Nomogram {
    pub fn spec(&self) -> &NomogramSpec {
        &self.spec
    }

    /// Sums the points of the single rule firing in each criterion.
    pub fn score_points(&self, patient: &PatientRecord) -> Result<u32> {
        let mut total = 0;
        for (c, cols) in self.spec.criteria.iter().zip(&self.columns) {
            let mut fired = c.rules.iter().zip(cols).filter(|(rule, rule_cols)| {
                rule.when.iter().zip(rule_cols.iter()).all(|(p, &i)| {
                    patient.values.get(i).is_some_and(|v| p.matches(v))
                })
            });
            let first = fired.next();
            let extra = fired.count();
            match (first, extra) {
                (Some((rule, _)), 0) => total += rule.points,
                (first, extra) => {
                    return Err(Error::RuleCoverage {
                        criterion: c.name.clone(),
                        patient: patient.id.clone(),
                        matched: usize::from(first.is_some()) + extra,
                    })
                }
            }
        }
        Ok(total)
    }
}
