//! Personalized uncertainty score: the concordance between group similarity
//! rank (gsr) and group prediction-similarity rank (msr) for one patient of
//! interest. Higher means feature-similar patients received similar
//! predictions, i.e. the POI's prediction is more certain.

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{group_prediction, rank_groups, LossScale};
use crate::error::{Error, Result};
use crate::grouping::partition_by_rank;
use crate::model::{Cohort, PatientRecord, Prediction};
use crate::nomogram::Nomogram;
use crate::similarity::SimilarityIndex;

/// Prediction losses closer than this are treated as tied.
pub const L_PRED_TIE_EPS: f64 = 1e-12;

/// Default number of groups.
pub const DEFAULT_GROUPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UqScore {
    pub id: String,
    pub uq: f64,
    pub k: usize,
    /// `(gsr, msr)` per group, msr with ties sharing the lowest rank.
    pub ranks: Vec<(usize, usize)>,
}

/// Concordance of `msr` against `gsr`: over all pairs ordered by gsr,
/// concordant pairs score 1, msr ties 0.5, discordant 0.
pub fn rank_concordance(gsr: &[usize], msr: &[usize]) -> Result<f64> {
    if gsr.len() != msr.len() {
        return Err(Error::LengthMismatch {
            left: gsr.len(),
            right: msr.len(),
        });
    }
    let k = gsr.len();
    if k < 2 {
        return Err(Error::TooFewRanks(k));
    }
    let mut score = 0.0;
    let mut pairs = 0usize;
    for i in 0..k {
        for j in 0..k {
            if gsr[i] < gsr[j] {
                pairs += 1;
                if msr[i] < msr[j] {
                    score += 1.0;
                } else if msr[i] == msr[j] {
                    score += 0.5;
                }
            }
        }
    }
    if pairs == 0 {
        return Err(Error::TooFewRanks(k));
    }
    Ok(score / pairs as f64)
}

/// Competition ranks (1, 2, 2, 4, ...) of `values` ascending, where values
/// within `eps` of the first value of a run share a rank.
pub fn tied_ranks(values: &[f64], eps: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; values.len()];
    let mut run_start = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos == 0 || values[i] - values[order[run_start]] > eps {
            run_start = pos;
        }
        ranks[i] = run_start + 1;
    }
    ranks
}

/// Scores patients of interest against one training cohort.
#[derive(Debug, Clone)]
pub struct UqScorer<'a> {
    index: SimilarityIndex<'a>,
    predictions: &'a [Prediction],
    k: usize,
    scale: LossScale,
}

impl<'a> UqScorer<'a> {
    pub fn new(training: &'a Cohort, nomogram: &'a Nomogram, k: usize, scale: LossScale) -> Result<Self> {
        let predictions = training
            .predictions
            .as_deref()
            .ok_or_else(|| Error::MissingPrediction("training cohort".into()))?;
        if predictions.len() != training.len() {
            return Err(Error::LengthMismatch {
                left: predictions.len(),
                right: training.len(),
            });
        }
        if k < 2 {
            return Err(Error::TooFewRanks(k));
        }
        Ok(Self {
            index: SimilarityIndex::new(training, nomogram)?,
            predictions,
            k,
            scale,
        })
    }

    pub fn score(&self, poi: &PatientRecord, poi_prediction: &Prediction) -> Result<UqScore> {
        let ranked = self.index.rank(poi)?;
        let groups = partition_by_rank(&ranked, self.k)?;
        let calibrated = groups
            .iter()
            .map(|g| group_prediction(g, self.predictions, self.scale))
            .collect::<Result<Vec<_>>>()?;
        let ranked_groups = rank_groups(calibrated, poi_prediction)?;
        let gsr: Vec<usize> = ranked_groups.iter().map(|g| g.gsr).collect();
        let l_pred: Vec<f64> = ranked_groups.iter().map(|g| g.l_pred).collect();
        let msr = tied_ranks(&l_pred, L_PRED_TIE_EPS);
        let uq = rank_concordance(&gsr, &msr)?;
        Ok(UqScore {
            id: poi.id.clone(),
            uq,
            k: self.k,
            ranks: gsr.into_iter().zip(msr).collect(),
        })
    }

    /// Scores every patient of `test` in parallel; output follows input order.
    pub fn score_cohort(&self, test: &Cohort) -> Result<Vec<UqScore>> {
        let preds = test
            .predictions
            .as_deref()
            .ok_or_else(|| Error::MissingPrediction("test cohort".into()))?;
        if preds.len() != test.len() {
            return Err(Error::LengthMismatch {
                left: preds.len(),
                right: test.len(),
            });
        }
        test.patients
            .par_iter()
            .zip(preds.par_iter())
            .map(|(p, pred)| self.score(p, pred))
            .collect()
    }
}

/// One-shot score for a single patient of interest.
pub fn personalized_uq(
    poi: &PatientRecord,
    poi_prediction: &Prediction,
    training: &Cohort,
    nomogram: &Nomogram,
    k: usize,
    scale: LossScale,
) -> Result<UqScore> {
    UqScorer::new(training, nomogram, k, scale)?.score(poi, poi_prediction)
}
