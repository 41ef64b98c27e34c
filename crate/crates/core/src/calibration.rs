//! Group-level calibrated predictions and prediction-similarity ranking.
//!
//! Each group's curve is a softmax-weighted average of its members' curves,
//! with weights `exp(-s * l_patient)`. Groups are then ranked by squared
//! distance between their calibrated curve and the POI's own curve.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::PatientGroup;
use crate::model::Prediction;

/// Monotonicity slack allowed on a calibrated curve before it is an error.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Scaling applied to patient losses before the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossScale {
    /// `s = 1`.
    #[default]
    Raw,
    /// `s = 1 / sd(in-group losses)`; uniform weights when the sd is zero.
    Std,
}

impl FromStr for LossScale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "raw" => Ok(LossScale::Raw),
            "std" => Ok(LossScale::Std),
            _ => Err(format!("unknown loss scale '{s}' (expected raw or std)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedGroup {
    pub gsr: usize,
    pub weights: Vec<f64>,
    pub pred_g: Prediction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPrediction {
    pub gsr: usize,
    pub weights: Vec<f64>,
    pub pred_g: Prediction,
    pub l_pred: f64,
    pub msr: usize,
}

/// Softmax of `-scale * loss` over the given losses.
pub fn softmax_weights(losses: &[f64], mode: LossScale) -> Vec<f64> {
    let s = match mode {
        LossScale::Raw => 1.0,
        LossScale::Std => {
            let n = losses.len() as f64;
            let mean = losses.iter().sum::<f64>() / n;
            let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 0.0 {
                1.0 / sd
            } else {
                0.0
            }
        }
    };
    let logits: Vec<f64> = losses.iter().map(|l| -s * l).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Calibrated curve of one group. `predictions` is indexed by training
/// position (`PatientSimilarity::index`).
pub fn group_prediction(
    group: &PatientGroup,
    predictions: &[Prediction],
    mode: LossScale,
) -> Result<CalibratedGroup> {
    let curves = group
        .members
        .iter()
        .map(|m| predictions.get(m.index).ok_or_else(|| Error::MissingPrediction(m.id.clone())))
        .collect::<Result<Vec<_>>>()?;
    let first = *curves.first().ok_or(Error::EmptyTraining)?;
    if curves.iter().any(|c| !c.same_grid(first) || c.values().len() != first.values().len()) {
        return Err(Error::GridMismatch);
    }

    let losses: Vec<f64> = group.losses().collect();
    let weights = softmax_weights(&losses, mode);
    let mut values = vec![0.0; first.values().len()];
    for (w, c) in weights.iter().zip(&curves) {
        for (acc, v) in values.iter_mut().zip(c.values()) {
            *acc += w * v;
        }
    }
    for i in 0..values.len() {
        values[i] = values[i].clamp(0.0, 1.0);
        if i > 0 && values[i] > values[i - 1] {
            if values[i] - values[i - 1] > MONOTONE_SLACK {
                return Err(Error::InvalidPrediction(format!(
                    "calibrated curve of group {} increases at grid index {i}",
                    group.gsr
                )));
            }
            values[i] = values[i - 1];
        }
    }
    Ok(CalibratedGroup {
        gsr: group.gsr,
        weights,
        pred_g: Prediction::new(first.grid().clone(), values)?,
    })
}

/// Squared Euclidean distance between two curves on the same grid.
pub fn prediction_loss(pred_poi: &Prediction, pred_g: &Prediction) -> Result<f64> {
    if !pred_poi.same_grid(pred_g) || pred_poi.values().len() != pred_g.values().len() {
        return Err(Error::GridMismatch);
    }
    Ok(pred_poi
        .values()
        .iter()
        .zip(pred_g.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum())
}

/// 1-based ranks of `l_pred` in ascending order; equal losses keep input order.
pub fn msr_from_losses(l_pred: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..l_pred.len()).collect();
    order.sort_by(|&a, &b| l_pred[a].total_cmp(&l_pred[b]).then(a.cmp(&b)));
    let mut msr = vec![0; l_pred.len()];
    for (rank, i) in order.into_iter().enumerate() {
        msr[i] = rank + 1;
    }
    msr
}

/// Computes each group's prediction loss against the POI curve and assigns
/// msr, breaking ties by ascending gsr. Output is ordered by gsr.
pub fn rank_groups(mut groups: Vec<CalibratedGroup>, pred_poi: &Prediction) -> Result<Vec<GroupPrediction>> {
    groups.sort_by_key(|g| g.gsr);
    let l_pred = groups
        .iter()
        .map(|g| prediction_loss(pred_poi, &g.pred_g))
        .collect::<Result<Vec<_>>>()?;
    let msr = msr_from_losses(&l_pred);
    Ok(groups
        .into_iter()
        .zip(l_pred)
        .zip(msr)
        .map(|((g, l_pred), msr)| GroupPrediction {
            gsr: g.gsr,
            weights: g.weights,
            pred_g: g.pred_g,
            l_pred,
            msr,
        })
        .collect())
}
