//! Seeded synthetic cohorts with known ground truth.
//!
//! Event times follow a Weibull proportional-hazards model,
//! `S(t | x) = exp(-(t / scale)^shape * exp(x' beta))`, censored by an
//! independent exponential time and an optional administrative cutoff.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Stream 0 draws features and outcomes; stream 1
//! draws prediction alignment and decoy curves, so changing
//! `alignment_fraction` never changes the cohort itself.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Cohort, Comparator, FeatureKind, FeatureSchema, FeatureSpec, FeatureValue, PatientRecord, Prediction,
    SurvivalOutcome, TimeGrid,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureGen {
    Categorical {
        name: String,
        levels: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        comparator: Option<Comparator>,
    },
    Boolean {
        name: String,
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        comparator: Option<Comparator>,
    },
    /// Uniform integer in `min..=max`.
    Ordinal {
        name: String,
        min: i64,
        max: i64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        comparator: Option<Comparator>,
    },
    Continuous {
        name: String,
        dist: ContinuousDist,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        comparator: Option<Comparator>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContinuousDist {
    Normal { mean: f64, sd: f64 },
    Uniform { min: f64, max: f64 },
}

impl FeatureGen {
    fn name(&self) -> &str {
        match self {
            FeatureGen::Categorical { name, .. }
            | FeatureGen::Boolean { name, .. }
            | FeatureGen::Ordinal { name, .. }
            | FeatureGen::Continuous { name, .. } => name,
        }
    }

    fn spec(&self) -> FeatureSpec {
        let (kind, comparator) = match self {
            FeatureGen::Categorical { comparator, .. } => (FeatureKind::Categorical, comparator),
            FeatureGen::Boolean { comparator, .. } => (FeatureKind::Boolean, comparator),
            FeatureGen::Ordinal { comparator, .. } => (FeatureKind::Ordinal, comparator),
            FeatureGen::Continuous { comparator, .. } => (FeatureKind::Continuous, comparator),
        };
        FeatureSpec::new(self.name(), kind, comparator.clone().unwrap_or_default())
    }

    /// Number of design columns this feature contributes.
    fn width(&self) -> usize {
        match self {
            FeatureGen::Categorical { levels, .. } => levels.len().saturating_sub(1),
            _ => 1,
        }
    }

    fn problems(&self) -> Option<String> {
        let name = self.name();
        match self {
            FeatureGen::Categorical { levels, weights, .. } => {
                if levels.is_empty() {
                    return Some(format!("'{name}': no levels"));
                }
                let mut sorted = levels.clone();
                sorted.sort();
                sorted.dedup();
                if sorted.len() != levels.len() {
                    return Some(format!("'{name}': duplicate levels"));
                }
                if let Some(w) = weights {
                    if w.len() != levels.len() || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                        return Some(format!("'{name}': weights must be one non-negative value per level"));
                    }
                }
                None
            }
            FeatureGen::Boolean { p, .. } => (!(0.0..=1.0).contains(p)).then(|| format!("'{name}': p outside [0,1]")),
            FeatureGen::Ordinal { min, max, .. } => (min > max).then(|| format!("'{name}': min > max")),
            FeatureGen::Continuous { dist, .. } => match dist {
                ContinuousDist::Normal { mean, sd } => {
                    (!(mean.is_finite() && sd.is_finite() && *sd >= 0.0)).then(|| format!("'{name}': invalid normal"))
                }
                ContinuousDist::Uniform { min, max } => {
                    (!(min.is_finite() && max.is_finite() && min <= max)).then(|| format!("'{name}': invalid uniform"))
                }
            },
        }
    }

    /// Draws a value and appends its design encoding to `x`.
    fn sample<R: Rng>(&self, rng: &mut R, x: &mut Vec<f64>) -> FeatureValue {
        match self {
            FeatureGen::Categorical { levels, weights, .. } => {
                let idx = match weights {
                    Some(w) => {
                        let total: f64 = w.iter().sum();
                        let mut u = rng.random::<f64>() * total;
                        let mut idx = levels.len() - 1;
                        for (i, wi) in w.iter().enumerate() {
                            if u < *wi {
                                idx = i;
                                break;
                            }
                            u -= wi;
                        }
                        idx
                    }
                    None => rng.random_range(0..levels.len()),
                };
                x.extend((1..levels.len()).map(|l| f64::from(u8::from(l == idx))));
                FeatureValue::Category(levels[idx].clone())
            }
            FeatureGen::Boolean { p, .. } => {
                let b = rng.random::<f64>() < *p;
                x.push(f64::from(u8::from(b)));
                FeatureValue::Bool(b)
            }
            FeatureGen::Ordinal { min, max, .. } => {
                let v = rng.random_range(*min..=*max);
                x.push(v as f64);
                FeatureValue::Int(v)
            }
            FeatureGen::Continuous { dist, .. } => {
                let v = match *dist {
                    ContinuousDist::Normal { mean, sd } => {
                        mean + sd * Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
                    }
                    ContinuousDist::Uniform { min, max } => min + (max - min) * rng.random::<f64>(),
                };
                x.push(v);
                FeatureValue::Real(v)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullBaseline {
    pub shape: f64,
    pub scale: f64,
}

impl WeibullBaseline {
    /// Survival at `t` for linear predictor `eta`.
    pub fn survival(&self, t: f64, eta: f64) -> f64 {
        (-(t / self.scale).powf(self.shape) * eta.exp()).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Censoring {
    /// Rate of the exponential censoring time; 0 disables it.
    #[serde(default)]
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admin_cutoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Training-set size.
    pub n: usize,
    /// Extra subjects emitted as a separate test cohort.
    #[serde(default)]
    pub n_test: usize,
    pub seed: u64,
    pub features: Vec<FeatureGen>,
    /// One coefficient per design column (categoricals are treatment-coded
    /// against their first listed level).
    pub beta: Vec<f64>,
    pub baseline: WeibullBaseline,
    #[serde(default)]
    pub censoring: Censoring,
    /// Share of subjects whose supplied prediction is their true curve;
    /// the rest get the true curve of an independently drawn decoy subject.
    #[serde(default = "one")]
    pub alignment_fraction: f64,
    /// Prediction grid; defaults to 25 points spanning [0, 2 * scale].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
}

fn one() -> f64 {
    1.0
}

fn default_endpoint() -> String {
    "ICP".into()
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        if !(self.baseline.shape > 0.0 && self.baseline.scale > 0.0) {
            return bad("Weibull shape and scale must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.alignment_fraction) {
            return bad("alignment_fraction must lie in [0,1]".into());
        }
        if !(self.censoring.rate.is_finite() && self.censoring.rate >= 0.0) {
            return bad("censoring rate must be finite and >= 0".into());
        }
        if self.censoring.admin_cutoff.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return bad("admin_cutoff must be > 0".into());
        }
        if let Some(p) = self.features.iter().find_map(FeatureGen::problems) {
            return bad(p);
        }
        let width: usize = self.features.iter().map(FeatureGen::width).sum();
        if self.beta.len() != width || self.beta.iter().any(|b| !b.is_finite()) {
            return bad(format!("beta needs {width} finite coefficients, got {}", self.beta.len()));
        }
        self.schema()?;
        self.time_grid()?;
        Ok(())
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        FeatureSchema::new(self.features.iter().map(FeatureGen::spec).collect())
            .map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let times = match &self.grid {
            Some(t) => t.clone(),
            None => {
                let max = 2.0 * self.baseline.scale;
                (0..25).map(|i| max * i as f64 / 24.0).collect()
            }
        };
        TimeGrid::new(times).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Preset mixing the intracranial-progression nomogram features with a
    /// few extra clinical covariates; hazard rises with nomogram points.
    pub fn icp_mixture(n: usize, n_test: usize, seed: u64, alignment_fraction: f64) -> Self {
        let binned = |edges: &[f64]| {
            Some(Comparator::Binned {
                edges: edges.to_vec(),
            })
        };
        SynthConfig {
            n,
            n_test,
            seed,
            features: vec![
                FeatureGen::Categorical {
                    name: "histology".into(),
                    levels: vec!["melanoma".into(), "non-melanoma".into()],
                    weights: Some(vec![0.35, 0.65]),
                    comparator: None,
                },
                FeatureGen::Ordinal {
                    name: "brain_mets".into(),
                    min: 1,
                    max: 5,
                    comparator: None,
                },
                FeatureGen::Boolean {
                    name: "wbrt_history".into(),
                    p: 0.25,
                    comparator: None,
                },
                FeatureGen::Continuous {
                    name: "years_dx_to_mets".into(),
                    dist: ContinuousDist::Uniform { min: 0.0, max: 10.0 },
                    comparator: binned(&[5.0]),
                },
                FeatureGen::Continuous {
                    name: "age".into(),
                    dist: ContinuousDist::Normal { mean: 62.0, sd: 11.0 },
                    comparator: binned(&[50.0, 60.0, 70.0]),
                },
                FeatureGen::Categorical {
                    name: "sex".into(),
                    levels: vec!["F".into(), "M".into()],
                    weights: None,
                    comparator: None,
                },
                FeatureGen::Ordinal {
                    name: "kps_decile".into(),
                    min: 6,
                    max: 10,
                    comparator: None,
                },
                FeatureGen::Boolean {
                    name: "extracranial_disease".into(),
                    p: 0.5,
                    comparator: None,
                },
            ],
            beta: vec![-0.8, 0.35, -0.5, -0.08, 0.0, 0.0, -0.15, 0.4],
            baseline: WeibullBaseline { shape: 1.2, scale: 18.0 },
            censoring: Censoring {
                rate: 0.02,
                admin_cutoff: Some(48.0),
            },
            alignment_fraction,
            grid: Some((0..=16).map(|i| 3.0 * f64::from(i)).collect()),
            endpoint: "ICP".into(),
        }
    }
}

/// True generative quantities for every generated subject.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub beta: Vec<f64>,
    pub baseline: WeibullBaseline,
    pub grid: Vec<f64>,
    pub subjects: Vec<SubjectTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectTruth {
    pub id: String,
    pub test: bool,
    pub linear_predictor: f64,
    pub event_time: f64,
    pub aligned: bool,
    pub true_curve: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub train: Cohort,
    pub test: Option<Cohort>,
    pub truth: GroundTruth,
}

/// Generates the cohort(s) described by `config`.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let schema = config.schema()?;
    let grid = Arc::new(config.time_grid()?);
    let mut data_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pred_rng = ChaCha8Rng::seed_from_u64(config.seed);
    pred_rng.set_stream(1);

    let curve = |eta: f64| -> Vec<f64> {
        grid.times().iter().map(|&t| config.baseline.survival(t, eta)).collect()
    };
    let linear = |x: &[f64]| -> f64 { x.iter().zip(&config.beta).map(|(a, b)| a * b).sum() };

    let total = config.n + config.n_test;
    let width = (total.max(1) as f64).log10() as usize + 1;
    let mut patients = Vec::with_capacity(total);
    let mut outcomes = Vec::with_capacity(total);
    let mut predictions = Vec::with_capacity(total);
    let mut subjects = Vec::with_capacity(total);
    for i in 0..total {
        let id = format!("S{:0width$}", i + 1);
        let mut x = Vec::with_capacity(config.beta.len());
        let values: Vec<FeatureValue> = config.features.iter().map(|f| f.sample(&mut data_rng, &mut x)).collect();
        let eta = linear(&x);

        let u: f64 = data_rng.sample(Open01);
        let event_time = config.baseline.scale * (-u.ln() / eta.exp()).powf(1.0 / config.baseline.shape);
        let mut censor_time = f64::INFINITY;
        if config.censoring.rate > 0.0 {
            let v: f64 = data_rng.sample(Open01);
            censor_time = -v.ln() / config.censoring.rate;
        }
        if let Some(cut) = config.censoring.admin_cutoff {
            censor_time = censor_time.min(cut);
        }
        let event = event_time <= censor_time;
        let time = event_time.min(censor_time);

        let aligned = pred_rng.random::<f64>() < config.alignment_fraction;
        let mut decoy_x = Vec::with_capacity(config.beta.len());
        for f in &config.features {
            f.sample(&mut pred_rng, &mut decoy_x);
        }
        let true_curve = curve(eta);
        let supplied = if aligned { true_curve.clone() } else { curve(linear(&decoy_x)) };

        patients.push(PatientRecord::new(id.clone(), values));
        outcomes.push(SurvivalOutcome::new(time, event, config.endpoint.clone()));
        predictions.push(Prediction::new(grid.clone(), supplied)?);
        subjects.push(SubjectTruth {
            id,
            test: i >= config.n,
            linear_predictor: eta,
            event_time,
            aligned,
            true_curve,
        });
    }

    let split = |lo: usize, hi: usize| Cohort {
        schema: schema.clone(),
        patients: patients[lo..hi].to_vec(),
        outcomes: outcomes[lo..hi].to_vec(),
        predictions: Some(predictions[lo..hi].to_vec()),
    };
    Ok(SynthOutput {
        train: split(0, config.n),
        test: (config.n_test > 0).then(|| split(config.n, total)),
        truth: GroundTruth {
            beta: config.beta.clone(),
            baseline: config.baseline,
            grid: grid.times().to_vec(),
            subjects,
        },
    })
}

/// Fraction of subjects whose event was not observed.
pub fn empirical_censoring_rate(cohort: &Cohort) -> Result<f64> {
    if cohort.outcomes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let censored = cohort.outcomes.iter().filter(|o| !o.event).count();
    Ok(censored as f64 / cohort.outcomes.len() as f64)
}
