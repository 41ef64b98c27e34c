//! Censoring-aware survival metrics and the UQ-constrained ROC analysis
//! that turns per-patient UQ scores into a model-level uncertainty.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Prediction, SurvivalOutcome};

/// Right-continuous step function starting at 1 before the first step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    /// Value at `t`, including a step located exactly at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|x| *x <= t) {
            0 => 1.0,
            i => self.values[i - 1],
        }
    }

    /// Left limit at `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        match self.times.partition_point(|x| *x < t) {
            0 => 1.0,
            i => self.values[i - 1],
        }
    }
}

/// Kaplan–Meier product-limit estimator. Steps are recorded at event times.
pub fn km_estimator(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    if times.is_empty() {
        return Err(Error::EmptyInput);
    }
    if times.len() != events.len() {
        return Err(Error::LengthMismatch {
            left: times.len(),
            right: events.len(),
        });
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut at_risk = times.len();
    let mut surv = 1.0;
    let mut out = StepFunction {
        times: Vec::new(),
        values: Vec::new(),
    };
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut deaths = 0;
        let mut j = i;
        while j < order.len() && times[order[j]] == t {
            deaths += usize::from(events[order[j]]);
            j += 1;
        }
        if deaths > 0 {
            surv *= 1.0 - deaths as f64 / at_risk as f64;
            out.times.push(t);
            out.values.push(surv);
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(out)
}

/// Kaplan–Meier estimate of the censoring survival function G(t).
pub fn censoring_km(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    let flipped: Vec<bool> = events.iter().map(|e| !e).collect();
    km_estimator(times, &flipped)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelEntry {
    pub id: String,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Excluded {
    pub id: String,
    pub reason: String,
}

/// Fixed-horizon binary labels derived from right-censored outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryLabelSet {
    pub horizon: f64,
    pub entries: Vec<LabelEntry>,
    pub excluded: Vec<Excluded>,
}

impl BinaryLabelSet {
    pub fn counts(&self) -> (usize, usize) {
        let pos = self.entries.iter().filter(|e| e.positive).count();
        (pos, self.entries.len() - pos)
    }
}

/// Positive: event at or before the horizon. Negative: followed up to the
/// horizon without an event. Censored before the horizon: excluded.
pub fn binarize<'a, I>(outcomes: I, horizon: f64) -> Result<BinaryLabelSet>
where
    I: IntoIterator<Item = (&'a str, &'a SurvivalOutcome)>,
{
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::UnusableHorizon(horizon));
    }
    let mut set = BinaryLabelSet {
        horizon,
        entries: Vec::new(),
        excluded: Vec::new(),
    };
    for (id, o) in outcomes {
        if o.event && o.time <= horizon {
            set.entries.push(LabelEntry {
                id: id.to_string(),
                positive: true,
            });
        } else if o.time >= horizon {
            set.entries.push(LabelEntry {
                id: id.to_string(),
                positive: false,
            });
        } else {
            set.excluded.push(Excluded {
                id: id.to_string(),
                reason: format!("censored at {} before horizon", o.time),
            });
        }
    }
    if set.entries.is_empty() {
        return Err(Error::UnusableHorizon(horizon));
    }
    Ok(set)
}

/// Mann–Whitney AUC: P(score_pos > score_neg) + 0.5 P(equal), via midranks.
pub fn mann_whitney_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: positive.len(),
        });
    }
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass {
            positives: n_pos,
            negatives: n_neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share the midrank
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_run = order[i..j].iter().filter(|&&k| positive[k]).count();
        rank_sum_pos += midrank * pos_in_run as f64;
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

fn labeled_scores(scores: &HashMap<String, f64>, labels: &BinaryLabelSet) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut s = Vec::with_capacity(labels.entries.len());
    let mut y = Vec::with_capacity(labels.entries.len());
    for e in &labels.entries {
        let v = scores.get(&e.id).ok_or_else(|| Error::MissingScore(e.id.clone()))?;
        s.push(*v);
        y.push(e.positive);
    }
    Ok((s, y))
}

/// ROC AUC of per-patient risk scores over the labeled patients.
pub fn roc_auc(scores: &HashMap<String, f64>, labels: &BinaryLabelSet) -> Result<f64> {
    let (s, y) = labeled_scores(scores, labels)?;
    mann_whitney_auc(&s, &y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub uq_threshold: f64,
    pub n_retained: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    /// `None` when the retained set is too small or single-class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    pub fn valid_points(&self) -> impl Iterator<Item = (&SweepPoint, f64)> {
        self.points.iter().filter_map(|p| p.auc.map(|a| (p, a)))
    }
}

pub const DEFAULT_MIN_RETAINED: usize = 20;

/// `n` evenly spaced thresholds covering [0, 1].
pub fn even_thresholds(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// AUC of the model scores restricted to patients with `uq >= threshold`,
/// for each threshold.
pub fn uq_sweep(
    model_scores: &HashMap<String, f64>,
    labels: &BinaryLabelSet,
    uq_scores: &HashMap<String, f64>,
    thresholds: &[f64],
    min_retained: usize,
) -> Result<SweepCurve> {
    if thresholds.is_empty() {
        return Err(Error::InvalidThresholds("no thresholds".into()));
    }
    if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidThresholds("thresholds must be finite and strictly increasing".into()));
    }
    if min_retained < 2 {
        return Err(Error::InvalidThresholds(format!("min_retained {min_retained} < 2")));
    }
    let (scores, positive) = labeled_scores(model_scores, labels)?;
    let uq = labels
        .entries
        .iter()
        .map(|e| uq_scores.get(&e.id).copied().ok_or_else(|| Error::MissingScore(e.id.clone())))
        .collect::<Result<Vec<f64>>>()?;

    let mut points = Vec::with_capacity(thresholds.len());
    for &tau in thresholds {
        let keep: Vec<usize> = (0..uq.len()).filter(|&i| uq[i] >= tau).collect();
        let s: Vec<f64> = keep.iter().map(|&i| scores[i]).collect();
        let y: Vec<bool> = keep.iter().map(|&i| positive[i]).collect();
        let n_positive = y.iter().filter(|p| **p).count();
        let n_negative = y.len() - n_positive;
        let auc = if keep.len() >= min_retained && n_positive > 0 && n_negative > 0 {
            Some(mann_whitney_auc(&s, &y)?)
        } else {
            None
        };
        points.push(SweepPoint {
            uq_threshold: tau,
            n_retained: keep.len(),
            n_positive,
            n_negative,
            auc,
        });
    }
    Ok(SweepCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelUncertainty {
    pub base_auc: f64,
    pub max_constrained_auc: f64,
    pub best_threshold: f64,
    /// `max_constrained_auc / base_auc`.
    pub uncertainty_ratio: f64,
    /// Percentage increase of the best constrained AUC over the base AUC.
    pub uncertainty_pct: f64,
}

/// Requires a valid point at a threshold <= 0, which retains everyone.
pub fn model_uncertainty(curve: &SweepCurve, base_auc: f64) -> Result<ModelUncertainty> {
    if !curve.valid_points().any(|(p, _)| p.uq_threshold <= 0.0) {
        return Err(Error::MissingBasePoint);
    }
    let (best, max_auc) = curve
        .valid_points()
        .fold(None::<(&SweepPoint, f64)>, |acc, (p, a)| match acc {
            Some((_, best)) if best >= a => acc,
            _ => Some((p, a)),
        })
        .expect("at least one valid point");
    let ratio = max_auc / base_auc;
    Ok(ModelUncertainty {
        base_auc,
        max_constrained_auc: max_auc,
        best_threshold: best.uq_threshold,
        uncertainty_ratio: ratio,
        uncertainty_pct: (ratio - 1.0) * 100.0,
    })
}

/// Percentage with two decimals, e.g. `1.56%`.
pub fn format_pct(pct: f64) -> String {
    format!("{pct:.2}%")
}

/// Harrell's concordance index; higher risk should mean an earlier event.
pub fn harrell_c_index(times: &[f64], events: &[bool], risks: &[f64]) -> Result<f64> {
    if times.len() != events.len() || times.len() != risks.len() {
        return Err(Error::LengthMismatch {
            left: times.len(),
            right: risks.len(),
        });
    }
    let mut score = 0.0;
    let mut pairs = 0usize;
    for i in 0..times.len() {
        if !events[i] {
            continue;
        }
        for j in 0..times.len() {
            if times[i] < times[j] {
                pairs += 1;
                if risks[i] > risks[j] {
                    score += 1.0;
                } else if risks[i] == risks[j] {
                    score += 0.5;
                }
            }
        }
    }
    if pairs == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(score / pairs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrierScore {
    pub ibs: f64,
    /// Grid times actually integrated over.
    pub times: Vec<f64>,
    pub brier: Vec<f64>,
    /// Last usable time when the censoring distribution reached zero inside the grid.
    pub truncated_at: Option<f64>,
}

/// IPCW Brier score on each grid time, integrated by the trapezoid rule and
/// divided by the integration span.
pub fn integrated_brier_score(curves: &[Prediction], times: &[f64], events: &[bool]) -> Result<BrierScore> {
    if curves.is_empty() {
        return Err(Error::EmptyInput);
    }
    if curves.len() != times.len() || times.len() != events.len() {
        return Err(Error::LengthMismatch {
            left: curves.len(),
            right: times.len(),
        });
    }
    let grid = curves[0].grid().clone();
    if curves.iter().any(|c| !c.same_grid(&curves[0])) {
        return Err(Error::GridMismatch);
    }
    let g = censoring_km(times, events)?;
    let n = curves.len() as f64;

    let mut used_times = Vec::new();
    let mut brier = Vec::new();
    let mut truncated_at = None;
    for (j, &t) in grid.times().iter().enumerate() {
        let g_t = g.eval(t);
        if g_t <= 0.0 {
            truncated_at = used_times.last().copied();
            break;
        }
        let mut total = 0.0;
        for ((curve, &ti), &ei) in curves.iter().zip(times).zip(events) {
            let s = curve.values()[j];
            if ti <= t && ei {
                let g_ti = g.eval_left(ti);
                total += s * s / g_ti;
            } else if ti > t {
                total += (1.0 - s) * (1.0 - s) / g_t;
            }
        }
        used_times.push(t);
        brier.push(total / n);
    }
    if used_times.is_empty() {
        return Err(Error::IbsUndefined("censoring distribution is zero on the whole grid".into()));
    }
    if truncated_at.is_none() && used_times.len() < grid.len() {
        truncated_at = used_times.last().copied();
    }
    let ibs = if used_times.len() == 1 {
        brier[0]
    } else {
        let area: f64 = used_times
            .windows(2)
            .zip(brier.windows(2))
            .map(|(t, b)| (b[0] + b[1]) / 2.0 * (t[1] - t[0]))
            .sum();
        area / (used_times[used_times.len() - 1] - used_times[0])
    };
    Ok(BrierScore {
        ibs,
        times: used_times,
        brier,
        truncated_at,
    })
}

/// `1 - S(horizon)`, reading the curve as a step function on its grid and
/// clamping horizons outside the grid to its ends.
pub fn curve_to_risk(prediction: &Prediction, horizon: f64) -> f64 {
    let i = prediction.grid().step_index(horizon);
    (1.0 - prediction.values()[i]).clamp(0.0, 1.0)
}
