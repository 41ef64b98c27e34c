//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p survuq-cli --test acceptance`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use survuq::calibration::{group_prediction, LossScale};
use survuq::coxph::{fit, partial_likelihood, CoxOptions, Design, TieMethod};
use survuq::evaluation::*;
use survuq::grouping::partition_by_rank;
use survuq::model::{FeatureValue, PatientRecord};
use survuq::nomogram::NomogramSpec;
use survuq::similarity::SimilarityIndex;
use survuq::synth::{generate, SynthConfig};
use survuq::uq::{rank_concordance, UqScorer};
use survuq::{Cohort, Prediction, TimeGrid};

use common::scenarios::{cox_config, cox_eta_sd, COX_BETA, COX_SCALE, COX_SHAPE};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn concordance_oracle() -> Outcome {
    let gsr6: Vec<usize> = (1..=6).collect();
    let mut perms = 0;
    let mut mismatches = 0;
    permutations(&mut gsr6.clone(), 0, &mut |p| {
        perms += 1;
        if rank_concordance(&gsr6, p).unwrap() != common::concordance(&gsr6, p) {
            mismatches += 1;
        }
    });
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gsr10: Vec<usize> = (1..=10).collect();
    for _ in 0..1000 {
        let msr: Vec<usize> = (0..10).map(|_| rng.random_range(1..=10)).collect();
        if rank_concordance(&gsr10, &msr).unwrap() != common::concordance(&gsr10, &msr) {
            mismatches += 1;
        }
    }
    check(
        perms == 720 && mismatches == 0,
        format!("{perms} permutations at k=6 + 1000 tied sets at k=10, {mismatches} mismatches"),
    )
}

fn permutations(v: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
    if start == v.len() {
        f(v);
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permutations(v, start + 1, f);
        v.swap(start, i);
    }
}

fn nomogram_truth_table() -> Outcome {
    let schema = SynthConfig::icp_mixture(1, 0, 0, 1.0).schema().unwrap();
    let spec = NomogramSpec::icp();
    let nomogram = spec.bind(&schema).unwrap();
    let mut rows = 0;
    let mut wrong = Vec::new();
    for (melanoma, mets) in [(true, 2), (true, 3), (false, 1), (false, 2)] {
        for wbrt in [true, false] {
            for years in [3.0, 7.0] {
                let record = PatientRecord::new(
                    "p",
                    vec![
                        FeatureValue::Category(if melanoma { "melanoma" } else { "non-melanoma" }.into()),
                        FeatureValue::Int(mets),
                        FeatureValue::Bool(wbrt),
                        FeatureValue::Real(years),
                        FeatureValue::Real(60.0),
                        FeatureValue::Category("F".into()),
                        FeatureValue::Int(8),
                        FeatureValue::Bool(false),
                    ],
                );
                let want = common::icp_points(melanoma, mets, wbrt, years);
                let got = nomogram.score_points(&record).unwrap();
                let want_label = if want >= 86 { "High Risk" } else { "Low Risk" };
                rows += 1;
                if got != want || spec.risk_label(got) != want_label {
                    wrong.push(format!("({melanoma},{mets},{wbrt},{years}) -> {got}"));
                }
            }
        }
    }
    let edges = spec.risk_label(85) == "Low Risk" && spec.risk_label(86) == "High Risk";
    check(
        rows == 16 && wrong.is_empty() && edges,
        format!("{rows} combinations, {} wrong, 85/86 cutoff ok: {edges}", wrong.len()),
    )
}

fn cox_recovery() -> Outcome {
    let rate = common::censoring_rate_for(0.3, COX_SHAPE, COX_SCALE, cox_eta_sd());
    let mut abs_err = [0.0; 2];
    let mut worst: f64 = 0.0;
    let mut censored = 0.0;
    for seed in 0..20 {
        let out = generate(&cox_config(2000, seed, rate)).unwrap();
        censored += empirical(&out.train) / 20.0;
        let design = Design::from_records(&out.train.schema, &out.train.patients);
        let x = design.matrix(&out.train.patients).unwrap();
        let model = fit(&x, &out.train.times(), &out.train.events(), CoxOptions::default())
            .map_err(|e| format!("seed {seed}: {e}"))?;
        for k in 0..2 {
            let e = (model.coefficients[k] - COX_BETA[k]).abs();
            abs_err[k] += e / 20.0;
            worst = worst.max(e);
        }
    }

    // gradient against central differences at random coefficients
    let out = generate(&cox_config(300, 99, rate)).unwrap();
    let design = Design::from_records(&out.train.schema, &out.train.patients);
    let x = design.matrix(&out.train.patients).unwrap();
    let times: Vec<f64> = out.train.times().iter().map(|t| t.ceil()).collect();
    let events = out.train.events();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut max_rel: f64 = 0.0;
    let h = 1e-5;
    for _ in 0..50 {
        let beta = DVector::from_fn(2, |_, _| rng.random_range(-1.5..1.5));
        for ties in [TieMethod::Efron, TieMethod::Breslow] {
            let g = partial_likelihood(&x, &times, &events, &beta, ties).unwrap().gradient;
            for k in 0..2 {
                let mut up = beta.clone();
                up[k] += h;
                let mut down = beta.clone();
                down[k] -= h;
                let ll = |b: &DVector<f64>| partial_likelihood(&x, &times, &events, b, ties).unwrap().log_likelihood;
                let fd = (ll(&up) - ll(&down)) / (2.0 * h);
                max_rel = max_rel.max((fd - g[k]).abs() / g[k].abs().max(1.0));
            }
        }
    }
    check(
        abs_err.iter().all(|e| *e <= 0.05) && worst <= 0.1 && max_rel <= 1e-6,
        format!(
            "censored {:.1}%, mean |err| ({:.4}, {:.4}), worst {:.4}, gradient rel err {:.1e}",
            censored * 100.0,
            abs_err[0],
            abs_err[1],
            worst,
            max_rel
        ),
    )
}

fn empirical(c: &Cohort) -> f64 {
    c.outcomes.iter().filter(|o| !o.event).count() as f64 / c.len() as f64
}

fn km_ibs_oracles() -> Outcome {
    let mut errs: Vec<f64> = Vec::new();
    let s = km_estimator(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
    errs.extend([s.eval(1.0) - 2.0 / 3.0, s.eval(2.0) - 2.0 / 3.0, s.eval(3.0)]);
    let s = km_estimator(&[1.0, 2.0, 3.0, 4.0], &[true; 4]).unwrap();
    errs.extend([s.eval(1.0) - 0.75, s.eval(2.0) - 0.5, s.eval(3.0) - 0.25, s.eval(4.0)]);
    let km_err = errs.iter().fold(0.0f64, |m, e| m.max(e.abs()));

    let grid_t = vec![1.0, 2.5, 3.5, 4.5, 6.0];
    let grid = Arc::new(TimeGrid::new(grid_t.clone()).unwrap());
    let curves = |v: &[Vec<f64>]| -> Vec<Prediction> {
        v.iter().map(|c| Prediction::new(grid.clone(), c.clone()).unwrap()).collect()
    };
    let times = [2.0, 3.0, 4.0, 5.0, 7.0];
    let truth: Vec<Vec<f64>> = times
        .iter()
        .map(|&ti| grid_t.iter().map(|&t| if ti > t { 1.0 } else { 0.0 }).collect())
        .collect();
    let oracle_ibs = integrated_brier_score(&curves(&truth), &times, &[true; 5]).unwrap().ibs;
    let half_ibs = integrated_brier_score(&curves(&vec![vec![0.5; 5]; 5]), &times, &[true; 5]).unwrap().ibs;
    let events = [true, false, true, true, false];
    let values = vec![
        vec![0.9, 0.4, 0.3, 0.2, 0.1],
        vec![0.95, 0.8, 0.6, 0.5, 0.3],
        vec![0.8, 0.7, 0.5, 0.2, 0.2],
        vec![1.0, 0.9, 0.9, 0.6, 0.3],
        vec![0.99, 0.9, 0.85, 0.8, 0.7],
    ];
    let censored = integrated_brier_score(&curves(&values), &times, &events).unwrap().ibs;
    let direct = common::ipcw_ibs(&grid_t, &values, &times, &events);
    check(
        km_err <= 1e-12 && oracle_ibs == 0.0 && (half_ibs - 0.25).abs() <= 1e-12 && (censored - direct).abs() <= 1e-12,
        format!(
            "KM err {km_err:.1e}; oracle IBS {oracle_ibs}; constant-0.5 IBS {half_ibs}; censored IBS diff {:.1e}",
            (censored - direct).abs()
        ),
    )
}

fn random_curve(rng: &mut ChaCha8Rng, grid: &Arc<TimeGrid>) -> Prediction {
    let mut s = 1.0;
    let values = (0..grid.len())
        .map(|i| {
            if i > 0 {
                s *= rng.random_range(0.6..1.0);
            }
            s
        })
        .collect();
    Prediction::new(grid.clone(), values).unwrap()
}

fn uq_null() -> Outcome {
    let out = generate(&SynthConfig::icp_mixture(500, 1000, 2024, 1.0)).unwrap();
    let (mut train, mut test) = (out.train, out.test.unwrap());
    let grid = train.predictions.as_ref().unwrap()[0].grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    train.predictions = Some((0..train.len()).map(|_| random_curve(&mut rng, &grid)).collect());
    test.predictions = Some((0..test.len()).map(|_| random_curve(&mut rng, &grid)).collect());
    let nomogram = NomogramSpec::icp().bind(&train.schema).unwrap();
    let scores = UqScorer::new(&train, &nomogram, 10, LossScale::Raw)
        .unwrap()
        .score_cohort(&test)
        .unwrap();
    let mean = scores.iter().map(|s| s.uq).sum::<f64>() / scores.len() as f64;
    check(
        (0.45..=0.55).contains(&mean),
        format!("mean uq {mean:.4} over {} POIs", scores.len()),
    )
}

struct SweepRun {
    spearman: f64,
    uncertainty_pct: f64,
}

fn sweep_run(seed: u64, alignment: f64) -> SweepRun {
    let out = generate(&SynthConfig::icp_mixture(1000, 400, seed, alignment)).unwrap();
    let test = out.test.unwrap();
    let nomogram = NomogramSpec::icp().bind(&out.train.schema).unwrap();
    let uq: HashMap<String, f64> = UqScorer::new(&out.train, &nomogram, 10, LossScale::Raw)
        .unwrap()
        .score_cohort(&test)
        .unwrap()
        .into_iter()
        .map(|s| (s.id, s.uq))
        .collect();
    let horizon = 12.0;
    let preds = test.predictions.as_ref().unwrap();
    let risk: HashMap<String, f64> = test
        .patients
        .iter()
        .zip(preds)
        .map(|(p, c)| (p.id.clone(), curve_to_risk(c, horizon)))
        .collect();
    let labels = binarize(test.patients.iter().map(|p| p.id.as_str()).zip(&test.outcomes), horizon).unwrap();
    let base = roc_auc(&risk, &labels).unwrap();
    let curve = uq_sweep(&risk, &labels, &uq, &even_thresholds(101), DEFAULT_MIN_RETAINED).unwrap();
    let (tau, auc): (Vec<f64>, Vec<f64>) = curve.valid_points().map(|(p, a)| (p.uq_threshold, a)).unzip();
    SweepRun {
        spearman: common::spearman(&tau, &auc),
        uncertainty_pct: model_uncertainty(&curve, base).unwrap().uncertainty_pct,
    }
}

fn mean_pct(runs: &[SweepRun]) -> f64 {
    runs.iter().map(|r| r.uncertainty_pct).sum::<f64>() / runs.len() as f64
}

fn uq_monotonicity() -> Outcome {
    let runs: Vec<SweepRun> = (0..20).map(|s| sweep_run(s, 0.7)).collect();
    let positive = runs.iter().filter(|r| r.spearman > 0.0).count();
    let pct = mean_pct(&runs);
    check(
        positive >= 18 && pct > 0.0,
        format!("Spearman > 0 in {positive}/20 seeds, mean uncertainty {pct:.2}%"),
    )
}

fn uncertainty_ordering() -> Outcome {
    let aligned: Vec<SweepRun> = (0..20).map(|s| sweep_run(s, 1.0)).collect();
    let misaligned: Vec<SweepRun> = (0..20).map(|s| sweep_run(s, 0.3)).collect();
    let (a, m) = (mean_pct(&aligned), mean_pct(&misaligned));
    check(a < m, format!("aligned {a:.2}% < alignment 0.3 {m:.2}%"))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_survuq");
    let dir = std::env::temp_dir().join(format!("survuq-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/icp_mixture.json"))
        .map_err(|e| e.to_string())?;
    let cfg = dir.join("synth.json");
    std::fs::write(&cfg, text.replacen("\"n\": 1000", "\"n\": 300", 1).replacen("\"n_test\": 400", "\"n_test\": 150", 1))
        .map_err(|e| e.to_string())?;
    let d = |f: &str| dir.join(f).display().to_string();
    let p = d("c");
    let f = |s: &str| format!("{p}{s}");
    let steps: Vec<(Vec<String>, Vec<String>)> = vec![
        (
            vec!["gen".into(), "--config".into(), cfg.display().to_string(), "--out-prefix".into(), p.clone()],
            ["_train.csv", "_train_pred.csv", "_test.csv", "_test_pred.csv", "_schema.json", "_grid.json", "_truth.json"]
                .iter()
                .map(|s| f(s))
                .collect(),
        ),
        (
            args(&[
                "fit-cox", "--train", &f("_train.csv"), "--schema", &f("_schema.json"), "--out", &d("cox.json"),
                "--grid", &f("_grid.json"), "--pred-out", &d("cox_train.csv"), "--test", &f("_test.csv"),
                "--test-pred-out", &d("cox_test.csv"),
            ]),
            vec![d("cox.json"), d("cox_train.csv"), d("cox_test.csv")],
        ),
        (
            args(&[
                "uq", "score", "--train", &f("_train.csv"), "--test", &f("_test.csv"), "--pred-train",
                &f("_train_pred.csv"), "--pred-test", &f("_test_pred.csv"), "--schema", &f("_schema.json"),
                "--loss-scale", "std", "--out", &d("scores.csv"),
            ]),
            vec![d("scores.csv")],
        ),
        (
            args(&[
                "uq", "sweep", "--test", &f("_test.csv"), "--pred-test", &f("_test_pred.csv"), "--schema",
                &f("_schema.json"), "--uq", &d("scores.csv"), "--horizon", "12", "--out", &d("sweep.json"),
                "--curve-csv", &d("sweep.csv"),
            ]),
            vec![d("sweep.json"), d("sweep.csv")],
        ),
        (
            args(&[
                "metrics", "--test", &f("_test.csv"), "--pred-test", &d("cox_test.csv"), "--schema",
                &f("_schema.json"), "--horizon", "12", "--out", &d("metrics.json"),
            ]),
            vec![d("metrics.json")],
        ),
        (
            args(&[
                "report", "--train", &f("_train.csv"), "--test", &f("_test.csv"), "--pred-train",
                &d("cox_train.csv"), "--pred-test", &d("cox_test.csv"), "--schema", &f("_schema.json"),
                "--horizon", "12", "--out", &d("report.json"), "--curve-csv", &d("report.csv"),
                "--scores-out", &d("report_scores.csv"),
            ]),
            vec![d("report.json"), d("report.csv"), d("report_scores.csv")],
        ),
    ];
    let mut differing = Vec::new();
    for (argv, outputs) in &steps {
        let mut snapshots = Vec::new();
        for threads in ["1", "4"] {
            let status = Command::new(bin)
                .args(argv)
                .env("SURVUQ_THREADS", threads)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{} failed: {}", argv[0], String::from_utf8_lossy(&status.stderr)));
            }
            snapshots.push(outputs.iter().map(std::fs::read).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?);
        }
        if snapshots[0] != snapshots[1] {
            differing.push(argv[..2].join(" "));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    check(
        differing.is_empty(),
        format!("{} subcommands re-run (1 and 4 threads); differing: {differing:?}", steps.len()),
    )
}

fn args(a: &[&str]) -> Vec<String> {
    a.iter().map(|s| s.to_string()).collect()
}

fn fuzz_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let grid = Arc::new(TimeGrid::new((0..8).map(|i| 3.0 * f64::from(i)).collect()).unwrap());
    let mut violations: HashMap<&str, usize> = HashMap::new();
    let mut flag = |name: &'static str, ok: bool| {
        if !ok {
            *violations.entry(name).or_default() += 1;
        }
    };
    for case in 0..10_000u64 {
        let n = rng.random_range(4..30);
        let out = generate(&SynthConfig::icp_mixture(n, 1, case, 1.0)).unwrap();
        let (mut train, test) = (out.train, out.test.unwrap());
        train.predictions = Some((0..n).map(|_| random_curve(&mut rng, &grid)).collect());
        let nomogram = NomogramSpec::icp().bind(&train.schema).unwrap();
        let k = rng.random_range(2..=n.min(10));
        let scale = if rng.random_bool(0.5) { LossScale::Raw } else { LossScale::Std };
        let poi_curve = random_curve(&mut rng, &grid);

        let uq = UqScorer::new(&train, &nomogram, k, scale).unwrap().score(&test.patients[0], &poi_curve).unwrap();
        flag("uq in [0,1]", (0.0..=1.0).contains(&uq.uq));

        let ranked = SimilarityIndex::new(&train, &nomogram).unwrap().rank(&test.patients[0]).unwrap();
        let preds = train.predictions.as_deref().unwrap();
        for g in partition_by_rank(&ranked, k).unwrap() {
            let c = group_prediction(&g, preds, scale).unwrap();
            let v = c.pred_g.values();
            flag("calibrated curve non-increasing", v.windows(2).all(|w| w[1] <= w[0]));
            for (j, &x) in v.iter().enumerate() {
                let member = |m: &survuq::similarity::PatientSimilarity| preds[m.index].values()[j];
                let lo = g.members.iter().map(member).fold(f64::INFINITY, f64::min);
                let hi = g.members.iter().map(member).fold(f64::NEG_INFINITY, f64::max);
                flag("pred_g within member hull", x >= lo - 1e-12 && x <= hi + 1e-12);
            }
        }

        let m = rng.random_range(2..40);
        let scores: Vec<f64> = (0..m).map(|_| f64::from(rng.random_range(0..20u8)) / 19.0).collect();
        let mut positive: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
        positive[0] = true;
        positive[1] = false;
        positive.shuffle(&mut rng);
        let auc = mann_whitney_auc(&scores, &positive).unwrap();
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let flipped: Vec<bool> = positive.iter().map(|p| !p).collect();
        flag("AUC complement", (mann_whitney_auc(&negated, &positive).unwrap() - (1.0 - auc)).abs() < 1e-12);
        flag("AUC complement", (mann_whitney_auc(&scores, &flipped).unwrap() - (1.0 - auc)).abs() < 1e-12);
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s + 2.0 * s).collect();
        let exped: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        flag("AUC monotone invariance", mann_whitney_auc(&cubed, &positive).unwrap() == auc);
        flag("AUC monotone invariance", mann_whitney_auc(&exped, &positive).unwrap() == auc);

        let ids: Vec<String> = (0..m).map(|i| format!("q{i}")).collect();
        let outcomes: Vec<survuq::SurvivalOutcome> = positive
            .iter()
            .map(|&p| survuq::SurvivalOutcome::new(if p { 2.0 } else { 20.0 }, p, "ICP"))
            .collect();
        let labels = binarize(ids.iter().map(String::as_str).zip(&outcomes), 10.0).unwrap();
        let score_map: HashMap<String, f64> = ids.iter().cloned().zip(scores.iter().copied()).collect();
        let uq_map: HashMap<String, f64> = ids.iter().map(|id| (id.clone(), rng.random_range(0.0..=1.0))).collect();
        let curve = uq_sweep(&score_map, &labels, &uq_map, &even_thresholds(21), 2).unwrap();
        flag(
            "sweep n_retained non-increasing",
            curve.points.windows(2).all(|w| w[1].n_retained <= w[0].n_retained),
        );
    }
    check(violations.is_empty(), format!("10000 random cases, violations {violations:?}"))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("concordance oracle equivalence", Duration::from_secs(1), concordance_oracle),
        ("nomogram truth table", Duration::from_secs(1), nomogram_truth_table),
        ("CoxPH recovery and gradient", Duration::from_secs(30), cox_recovery),
        ("KM and IBS oracles", Duration::from_secs(1), km_ibs_oracles),
        ("UQ null behavior", Duration::from_secs(30), uq_null),
        ("UQ monotonicity", Duration::from_secs(300), uq_monotonicity),
        ("uncertainty ordering", Duration::from_secs(300), uncertainty_ordering),
        ("CLI determinism", Duration::from_secs(300), determinism),
        ("invariant fuzz suite", Duration::from_secs(300), fuzz_invariants),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) => (elapsed <= budget, d),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {name}: {detail} [{:.2}s, budget {}s]",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
