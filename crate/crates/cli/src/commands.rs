use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use survuq::coxph::{fit, CoxModel, CoxOptions, Design};
use survuq::evaluation::{
    binarize, curve_to_risk, even_thresholds, format_pct, harrell_c_index, integrated_brier_score, model_uncertainty,
    roc_auc, uq_sweep as sweep_curve, SweepPoint,
};
use survuq::io::{
    create_file, format_f64, read_cohort, read_grid, read_json, read_predictions, read_schema, write_cohort,
    write_grid, write_json, write_predictions, PredictionTable,
};
use survuq::nomogram::NomogramSpec;
use survuq::synth::{generate, SynthConfig};
use survuq::uq::UqScorer;
use survuq::{validate_cohort, Cohort, FeatureSchema, Prediction, TimeGrid};

use crate::args::{FitCoxArgs, GenArgs, MetricsArgs, ReportArgs, ScoreArgs, ScoreInputs, SweepArgs, ThresholdArgs};

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn optional_grid(path: Option<&Path>) -> Result<Option<TimeGrid>> {
    path.map(|p| read_grid(p).with_context(|| format!("reading grid {}", p.display())))
        .transpose()
}

/// Reads a cohort, attaches its predictions when given, and rejects any
/// invariant violation.
fn load_cohort(data: &Path, preds: Option<&Path>, schema: &FeatureSchema, grid: Option<&TimeGrid>) -> Result<Cohort> {
    let mut cohort = read_cohort(data, schema)?;
    if let Some(p) = preds {
        let table = read_predictions(p, grid.cloned())?;
        cohort
            .attach_predictions(&table)
            .with_context(|| format!("matching {} to {}", p.display(), data.display()))?;
    }
    let violations = validate_cohort(&cohort);
    if !violations.is_empty() {
        let shown: Vec<String> = violations.iter().take(10).map(ToString::to_string).collect();
        bail!(
            "{}: {} violation(s):\n  {}",
            data.display(),
            violations.len(),
            shown.join("\n  ")
        );
    }
    Ok(cohort)
}

fn prediction_table(cohort: &Cohort, curves: Vec<Prediction>, grid: Arc<TimeGrid>) -> PredictionTable {
    PredictionTable::new(grid, cohort.patients.iter().map(|p| p.id.clone()).collect(), curves)
}

fn write_table(path: &Path, table: &PredictionTable) -> Result<()> {
    write_predictions(create_file(path)?, table).with_context(|| format!("writing {}", path.display()))
}

fn write_cohort_file(path: &Path, cohort: &Cohort) -> Result<()> {
    write_cohort(create_file(path)?, cohort).with_context(|| format!("writing {}", path.display()))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_json(path, value).with_context(|| format!("writing {}", path.display()))
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let config: SynthConfig = read_json(&args.config)?;
    let out = generate(&config)?;
    let grid = Arc::new(config.time_grid()?);
    let p = |s: &str| with_suffix(&args.out_prefix, s);

    let mut parts = vec![("train", &out.train)];
    if let Some(test) = &out.test {
        parts.push(("test", test));
    }
    for (name, cohort) in parts {
        write_cohort_file(&p(&format!("_{name}.csv")), cohort)?;
        let curves = cohort.predictions.clone().unwrap_or_default();
        write_table(&p(&format!("_{name}_pred.csv")), &prediction_table(cohort, curves, grid.clone()))?;
    }
    write_json_file(&p("_schema.json"), &out.train.schema)?;
    write_grid(&p("_grid.json"), &grid)?;
    write_json_file(&p("_truth.json"), &out.truth)?;
    Ok(())
}

#[derive(Serialize)]
struct CoxArtifact<'a> {
    config: &'a FitCoxArgs,
    design: &'a Design,
    model: &'a CoxModel,
}

fn predict_all(model: &CoxModel, design: &Design, cohort: &Cohort, grid: &Arc<TimeGrid>) -> Result<PredictionTable> {
    let curves = cohort
        .patients
        .iter()
        .map(|p| Ok(model.predict_survival(&design.encode(p)?, grid)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(prediction_table(cohort, curves, grid.clone()))
}

pub fn fit_cox(args: &FitCoxArgs) -> Result<()> {
    let schema = read_schema(&args.schema)?;
    let grid = optional_grid(args.grid.as_deref())?.map(Arc::new);
    let train = load_cohort(&args.train, None, &schema, None)?;
    let design = Design::from_records(&schema, &train.patients);
    let x = design.matrix(&train.patients)?;
    let options = CoxOptions {
        ties: args.ties,
        tol: args.tol,
        max_iter: args.max_iter,
        ridge: args.ridge,
        standardize: args.standardize,
    };
    let model = fit(&x, &train.times(), &train.events(), options)?;
    write_json_file(
        &args.out,
        &CoxArtifact {
            config: args,
            design: &design,
            model: &model,
        },
    )?;
    if let (Some(path), Some(grid)) = (&args.pred_out, &grid) {
        write_table(path, &predict_all(&model, &design, &train, grid)?)?;
    }
    if let (Some(test), Some(path), Some(grid)) = (&args.test, &args.test_pred_out, &grid) {
        let test = load_cohort(test, None, &schema, None)?;
        write_table(path, &predict_all(&model, &design, &test, grid)?)?;
    }
    Ok(())
}

struct Scored {
    train_len: usize,
    test: Cohort,
    scores: Vec<(String, f64)>,
}

fn score(inputs: &ScoreInputs) -> Result<Scored> {
    let schema = read_schema(&inputs.schema)?;
    let spec = match &inputs.nomogram {
        Some(p) => NomogramSpec::load(p)?,
        None => NomogramSpec::icp(),
    };
    let nomogram = spec.bind(&schema)?;
    let grid = optional_grid(inputs.grid.as_deref())?;
    let train = load_cohort(&inputs.train, Some(&inputs.pred_train), &schema, grid.as_ref())?;
    let test = load_cohort(&inputs.test, Some(&inputs.pred_test), &schema, grid.as_ref())?;
    let scorer = UqScorer::new(&train, &nomogram, inputs.groups, inputs.loss_scale)?;
    let scores = scorer.score_cohort(&test)?.into_iter().map(|s| (s.id, s.uq)).collect();
    Ok(Scored {
        train_len: train.len(),
        test,
        scores,
    })
}

fn write_scores(path: &Path, scores: &[(String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    w.write_record(["id", "uq"])?;
    for (id, uq) in scores {
        w.write_record([id.as_str(), &format_f64(*uq)])?;
    }
    w.flush()?;
    Ok(())
}

fn read_scores(path: &Path) -> Result<HashMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "uq"] {
        bail!("{}: expected header 'id,uq'", path.display());
    }
    let mut out = HashMap::new();
    for row in rdr.records() {
        let row = row.with_context(|| format!("reading {}", path.display()))?;
        let line = row.position().map_or(0, |p| p.line());
        let uq: f64 = row[1]
            .parse()
            .ok()
            .filter(|u: &f64| (0.0..=1.0).contains(u))
            .with_context(|| format!("{}: line {line}: uq '{}' is not a number in [0,1]", path.display(), &row[1]))?;
        if out.insert(row[0].to_string(), uq).is_some() {
            bail!("{}: line {line}: duplicate id '{}'", path.display(), &row[0]);
        }
    }
    Ok(out)
}

pub fn uq_score(args: &ScoreArgs) -> Result<()> {
    let scored = score(&args.inputs)?;
    write_scores(&args.out, &scored.scores)
}

#[derive(Serialize)]
struct SweepSummary {
    horizon: f64,
    n_test: usize,
    n_positive: usize,
    n_negative: usize,
    excluded_count: usize,
    base_auc: f64,
    max_constrained_auc: f64,
    best_threshold: f64,
    uncertainty_pct: f64,
    uncertainty_pct_text: String,
    uncertainty_ratio: f64,
    curve: Vec<SweepPoint>,
}

fn risks(test: &Cohort, horizon: f64) -> HashMap<String, f64> {
    let preds = test.predictions.as_deref().unwrap_or_default();
    test.patients
        .iter()
        .zip(preds)
        .map(|(p, c)| (p.id.clone(), curve_to_risk(c, horizon)))
        .collect()
}

fn sweep(test: &Cohort, uq: &HashMap<String, f64>, t: &ThresholdArgs) -> Result<SweepSummary> {
    let labels = binarize(test.patients.iter().map(|p| p.id.as_str()).zip(&test.outcomes), t.horizon)?;
    let risk = risks(test, t.horizon);
    let base_auc = roc_auc(&risk, &labels)?;
    let thresholds = match &t.threshold_values {
        Some(v) => v.clone(),
        None => even_thresholds(t.thresholds),
    };
    let curve = sweep_curve(&risk, &labels, uq, &thresholds, t.min_retained)?;
    let mu = model_uncertainty(&curve, base_auc)?;
    let (n_positive, n_negative) = labels.counts();
    Ok(SweepSummary {
        horizon: t.horizon,
        n_test: test.len(),
        n_positive,
        n_negative,
        excluded_count: labels.excluded.len(),
        base_auc,
        max_constrained_auc: mu.max_constrained_auc,
        best_threshold: mu.best_threshold,
        uncertainty_pct: mu.uncertainty_pct,
        uncertainty_pct_text: format_pct(mu.uncertainty_pct),
        uncertainty_ratio: mu.uncertainty_ratio,
        curve: curve.points,
    })
}

fn write_curve_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut w = create_file(path)?;
    writeln!(w, "uq_threshold,n_retained,n_positive,n_negative,auc")?;
    for p in points {
        let auc = p.auc.map(format_f64).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{auc}",
            format_f64(p.uq_threshold),
            p.n_retained,
            p.n_positive,
            p.n_negative
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SweepReport<'a> {
    config: &'a SweepArgs,
    #[serde(flatten)]
    sweep: SweepSummary,
}

pub fn uq_sweep(args: &SweepArgs) -> Result<()> {
    let schema = read_schema(&args.schema)?;
    let grid = optional_grid(args.grid.as_deref())?;
    let test = load_cohort(&args.test, Some(&args.pred_test), &schema, grid.as_ref())?;
    let uq = read_scores(&args.uq)?;
    let summary = sweep(&test, &uq, &args.thresholds)?;
    if let Some(path) = &args.curve_csv {
        write_curve_csv(path, &summary.curve)?;
    }
    write_json_file(
        &args.out,
        &SweepReport {
            config: args,
            sweep: summary,
        },
    )
}


#[derive(Serialize)]
struct Metrics {
    horizon: f64,
    n_test: usize,
    c_index: f64,
    ibs: f64,
    ibs_truncated_at: Option<f64>,
    base_auc: f64,
    excluded_count: usize,
}

fn compute_metrics(test: &Cohort, horizon: f64) -> Result<Metrics> {
    let preds = test.predictions.as_deref().unwrap_or_default();
    let (times, events) = (test.times(), test.events());
    let risk: Vec<f64> = preds.iter().map(|c| curve_to_risk(c, horizon)).collect();
    let c_index = harrell_c_index(&times, &events, &risk)?;
    let brier = integrated_brier_score(preds, &times, &events)?;
    let labels = binarize(test.patients.iter().map(|p| p.id.as_str()).zip(&test.outcomes), horizon)?;
    let base_auc = roc_auc(&risks(test, horizon), &labels)?;
    Ok(Metrics {
        horizon,
        n_test: test.len(),
        c_index,
        ibs: brier.ibs,
        ibs_truncated_at: brier.truncated_at,
        base_auc,
        excluded_count: labels.excluded.len(),
    })
}

#[derive(Serialize)]
struct MetricsReport<'a> {
    config: &'a MetricsArgs,
    #[serde(flatten)]
    metrics: Metrics,
}

pub fn metrics(args: &MetricsArgs) -> Result<()> {
    let schema = read_schema(&args.schema)?;
    let grid = optional_grid(args.grid.as_deref())?;
    let test = load_cohort(&args.test, Some(&args.pred_test), &schema, grid.as_ref())?;
    let metrics = compute_metrics(&test, args.horizon)?;
    write_json_file(&args.out, &MetricsReport { config: args, metrics })
}

#[derive(Serialize)]
struct FullReport<'a> {
    config: &'a ReportArgs,
    n_train: usize,
    mean_uq: f64,
    c_index: f64,
    ibs: f64,
    ibs_truncated_at: Option<f64>,
    #[serde(flatten)]
    sweep: SweepSummary,
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let scored = score(&args.inputs)?;
    if let Some(path) = &args.scores_out {
        write_scores(path, &scored.scores)?;
    }
    let uq: HashMap<String, f64> = scored.scores.iter().cloned().collect();
    let summary = sweep(&scored.test, &uq, &args.thresholds)?;
    let metrics = compute_metrics(&scored.test, args.thresholds.horizon)?;
    if let Some(path) = &args.curve_csv {
        write_curve_csv(path, &summary.curve)?;
    }
    let mean_uq = scored.scores.iter().map(|(_, u)| u).sum::<f64>() / scored.scores.len().max(1) as f64;
    write_json_file(
        &args.out,
        &FullReport {
            config: args,
            n_train: scored.train_len,
            mean_uq,
            c_index: metrics.c_index,
            ibs: metrics.ibs,
            ibs_truncated_at: metrics.ibs_truncated_at,
            sweep: summary,
        },
    )
}

