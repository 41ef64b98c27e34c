//! Patient-level similarity: nomogram distance plus a count of differing
//! feature entries, and the resulting similarity ranking of a training set
//! against a patient of interest.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Cohort, FeatureSchema, PatientRecord};
use crate::nomogram::Nomogram;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientSimilarity {
    pub id: String,
    /// Position of the patient in the training cohort.
    #[serde(skip)]
    pub index: usize,
    pub l_nomogram: f64,
    pub l_entry: u32,
    pub l_patient: f64,
    /// 1-based similarity rank; 1 is the most similar patient.
    pub psr: usize,
}

/// Number of features judged different under each feature's comparator.
pub fn entry_loss(a: &PatientRecord, b: &PatientRecord, schema: &FeatureSchema) -> Result<u32> {
    if a.values.len() != schema.len() || b.values.len() != schema.len() {
        return Err(Error::SchemaMismatch(format!(
            "records '{}' ({}) and '{}' ({}) vs schema of {} features",
            a.id,
            a.values.len(),
            b.id,
            b.values.len(),
            schema.len()
        )));
    }
    let n = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&schema.features)
        .filter(|((x, y), f)| f.comparator.differs(x, y))
        .count();
    Ok(n as u32)
}

pub fn nomogram_loss(a: &PatientRecord, b: &PatientRecord, nomogram: &Nomogram) -> Result<f64> {
    let sa = nomogram.score_points(a)?;
    let sb = nomogram.score_points(b)?;
    Ok(f64::from(sa.abs_diff(sb)))
}

pub fn patient_loss(
    a: &PatientRecord,
    b: &PatientRecord,
    schema: &FeatureSchema,
    nomogram: &Nomogram,
) -> Result<f64> {
    Ok(nomogram_loss(a, b, nomogram)? + f64::from(entry_loss(a, b, schema)?))
}

/// Training cohort with nomogram scores cached, so that ranking many
/// patients of interest costs one pass over the features each.
#[derive(Debug, Clone)]
pub struct SimilarityIndex<'a> {
    training: &'a Cohort,
    nomogram: &'a Nomogram,
    scores: Vec<u32>,
}

impl<'a> SimilarityIndex<'a> {
    pub fn new(training: &'a Cohort, nomogram: &'a Nomogram) -> Result<Self> {
        if training.is_empty() {
            return Err(Error::EmptyTraining);
        }
        let scores = training
            .patients
            .iter()
            .map(|p| nomogram.score_points(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            training,
            nomogram,
            scores,
        })
    }

    pub fn training(&self) -> &Cohort {
        self.training
    }

    /// Ranks the training set by ascending patient loss against `poi`.
    ///
    /// Ties are broken by ascending patient id. A training patient sharing
    /// the POI's id is left out.
    pub fn rank(&self, poi: &PatientRecord) -> Result<Vec<PatientSimilarity>> {
        let schema = &self.training.schema;
        let poi_score = self.nomogram.score_points(poi)?;
        let mut ranked = Vec::with_capacity(self.training.len());
        for (index, (p, &score)) in self.training.patients.iter().zip(&self.scores).enumerate() {
            if p.id == poi.id {
                continue;
            }
            let l_nomogram = f64::from(score.abs_diff(poi_score));
            let l_entry = entry_loss(poi, p, schema)?;
            ranked.push(PatientSimilarity {
                id: p.id.clone(),
                index,
                l_nomogram,
                l_entry,
                l_patient: l_nomogram + f64::from(l_entry),
                psr: 0,
            });
        }
        if ranked.is_empty() {
            return Err(Error::EmptyTraining);
        }
        ranked.sort_by(|a, b| a.l_patient.total_cmp(&b.l_patient).then_with(|| a.id.cmp(&b.id)));
        for (i, r) in ranked.iter_mut().enumerate() {
            r.psr = i + 1;
        }
        Ok(ranked)
    }
}

pub fn rank_patients(
    poi: &PatientRecord,
    training: &Cohort,
    nomogram: &Nomogram,
) -> Result<Vec<PatientSimilarity>> {
    SimilarityIndex::new(training, nomogram)?.rank(poi)
}
