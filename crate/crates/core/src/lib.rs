//! Personalized uncertainty quantification for survival models.
//!
//! For a patient of interest (POI) the training set is ranked by patient
//! similarity (nomogram distance plus differing feature entries), cut into
//! `k` rank buckets, and each bucket's predictions are averaged with softmax
//! weights. The POI's UQ score is the concordance between the buckets'
//! similarity order and the order of their distance to the POI's own
//! prediction. Sweeping a threshold over UQ scores and tracking the AUC of
//! the retained patients yields a model-level uncertainty.
//!
//! Modules follow the pipeline:
//! [`similarity`] → [`grouping`] → [`calibration`] → [`uq`] → [`evaluation`],
//! with [`coxph`] as a native survival model and [`synth`] for seeded
//! synthetic cohorts.

pub mod calibration;
pub mod coxph;
pub mod error;
pub mod evaluation;
pub mod grouping;
pub mod io;
pub mod model;
pub mod nomogram;
pub mod similarity;
pub mod synth;
pub mod uq;

pub use error::{Error, Result};
pub use model::{
    validate_cohort, Cohort, Comparator, FeatureKind, FeatureSchema, FeatureSpec, FeatureValue, PatientRecord,
    Prediction, SurvivalOutcome, TimeGrid, Violation,
};
