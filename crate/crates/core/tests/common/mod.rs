//! Brute-force reference implementations, written without reference to the
//! library code they check.
#![allow(dead_code)]

/// Pairwise concordance between similarity ranks and prediction ranks.
pub fn concordance(gsr: &[usize], msr: &[usize]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for a in 0..gsr.len() {
        for b in 0..gsr.len() {
            if gsr[a] < gsr[b] {
                pairs += 1.0;
                if msr[a] < msr[b] {
                    num += 1.0;
                } else if msr[a] == msr[b] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

/// Share of (positive, negative) pairs where the positive scores higher.
pub fn auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

/// Harrell's C by enumerating ordered pairs.
pub fn c_index(times: &[f64], events: &[bool], risks: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for i in 0..times.len() {
        for j in 0..times.len() {
            if events[i] && times[i] < times[j] {
                pairs += 1.0;
                if risks[i] > risks[j] {
                    num += 1.0;
                } else if risks[i] == risks[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

/// Product-limit estimate at `t`, recomputed from scratch; `left` evaluates
/// just before `t`.
pub fn product_limit(times: &[f64], events: &[bool], t: f64, left: bool) -> f64 {
    let mut distinct: Vec<f64> = times.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut s = 1.0;
    for &u in &distinct {
        let included = if left { u < t } else { u <= t };
        if !included {
            break;
        }
        let at_risk = times.iter().filter(|&&x| x >= u).count() as f64;
        let deaths = times.iter().zip(events).filter(|(&x, &e)| x == u && e).count() as f64;
        s *= 1.0 - deaths / at_risk;
    }
    s
}

/// IPCW Brier score at each grid time followed by trapezoid integration over
/// the grid span; `curves[i][j]` is subject i's survival at `grid[j]`.
pub fn ipcw_ibs(grid: &[f64], curves: &[Vec<f64>], times: &[f64], events: &[bool]) -> f64 {
    let flipped: Vec<bool> = events.iter().map(|e| !e).collect();
    let n = times.len() as f64;
    let bs: Vec<f64> = grid
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let mut sum = 0.0;
            for i in 0..times.len() {
                let s = curves[i][j];
                if times[i] <= t && events[i] {
                    sum += s.powi(2) / product_limit(times, &flipped, times[i], true);
                } else if times[i] > t {
                    sum += (1.0 - s).powi(2) / product_limit(times, &flipped, t, false);
                }
            }
            sum / n
        })
        .collect();
    let mut area = 0.0;
    for j in 1..grid.len() {
        area += 0.5 * (bs[j] + bs[j - 1]) * (grid[j] - grid[j - 1]);
    }
    area / (grid[grid.len() - 1] - grid[0])
}

/// Efron log partial likelihood from explicit risk sets.
pub fn efron_loglik(x: &[Vec<f64>], times: &[f64], events: &[bool], beta: &[f64], breslow: bool) -> f64 {
    let eta: Vec<f64> = x.iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let mut distinct: Vec<f64> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut ll = 0.0;
    for &u in &distinct {
        let dying: Vec<usize> = (0..times.len()).filter(|&i| times[i] == u && events[i]).collect();
        let risk: f64 = (0..times.len()).filter(|&i| times[i] >= u).map(|i| eta[i].exp()).sum();
        let tied: f64 = dying.iter().map(|&i| eta[i].exp()).sum();
        let m = dying.len() as f64;
        for (l, &i) in dying.iter().enumerate() {
            let frac = if breslow { 0.0 } else { l as f64 / m };
            ll += eta[i] - (risk - frac * tied).ln();
        }
    }
    ll
}

/// Golden-section search for the maximum of a unimodal function on [lo, hi].
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-12 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }
    let (a, b) = (ranks(x), ranks(y));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(&b).map(|(p, q)| (p - ma) * (q - mb)).sum();
    let va: f64 = a.iter().map(|p| (p - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|q| (q - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Intracranial-progression nomogram points for (melanoma, metastases, prior
/// WBRT, years from diagnosis).
pub fn icp_points(melanoma: bool, mets: i64, wbrt: bool, years: f64) -> u32 {
    let histology_mets = match (melanoma, mets) {
        (true, 1..=2) => 35,
        (true, _) => 100,
        (false, 1) => 0,
        (false, _) => 45,
    };
    let wbrt = if wbrt { 0 } else { 15 };
    let years = if years > 5.0 { 0 } else { 45 };
    histology_mets + wbrt + years
}

/// Censored fraction under exponential censoring at `rate` for Weibull(shape,
/// scale) event times with proportional-hazards factor `exp(eta)`,
/// `eta ~ N(0, eta_sd^2)`, by nested trapezoid quadrature.
pub fn censored_fraction(rate: f64, shape: f64, scale: f64, eta_sd: f64) -> f64 {
    let (m_eta, m_c) = (200, 2000);
    let c_max = 40.0 / rate;
    let mut total = 0.0;
    let mut mass = 0.0;
    for a in 0..=m_eta {
        let z = -8.0 + 16.0 * a as f64 / m_eta as f64;
        let density = (-0.5 * z * z).exp() * if a == 0 || a == m_eta { 0.5 } else { 1.0 };
        let hr = (eta_sd * z).exp();
        let mut inner = 0.0;
        for b in 0..=m_c {
            let c = c_max * b as f64 / m_c as f64;
            let f = rate * (-rate * c).exp() * (-(c / scale).powf(shape) * hr).exp();
            inner += if b == 0 || b == m_c { 0.5 * f } else { f };
        }
        total += density * inner * c_max / m_c as f64;
        mass += density;
    }
    total / mass
}

/// Bisects the censoring rate giving `target` censored fraction.
pub fn censoring_rate_for(target: f64, shape: f64, scale: f64, eta_sd: f64) -> f64 {
    let (mut lo, mut hi) = (1e-4f64, 10.0f64);
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        if censored_fraction(mid, shape, scale, eta_sd) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

pub mod scenarios {
    use survuq::synth::{Censoring, ContinuousDist, FeatureGen, SynthConfig, WeibullBaseline};

    pub const COX_BETA: [f64; 2] = [0.5, -0.3];
    pub const COX_SHAPE: f64 = 1.5;
    pub const COX_SCALE: f64 = 10.0;

    /// Two standard-normal covariates, Weibull baseline, exponential
    /// censoring at `rate`.
    pub fn cox_config(n: usize, seed: u64, rate: f64) -> SynthConfig {
        let normal = |name: &str| FeatureGen::Continuous {
            name: name.into(),
            dist: ContinuousDist::Normal { mean: 0.0, sd: 1.0 },
            comparator: None,
        };
        SynthConfig {
            n,
            n_test: 0,
            seed,
            features: vec![normal("x1"), normal("x2")],
            beta: COX_BETA.to_vec(),
            baseline: WeibullBaseline {
                shape: COX_SHAPE,
                scale: COX_SCALE,
            },
            censoring: Censoring {
                rate,
                admin_cutoff: None,
            },
            alignment_fraction: 1.0,
            grid: None,
            endpoint: "ICP".into(),
        }
    }

    pub fn cox_eta_sd() -> f64 {
        COX_BETA.iter().map(|b| b * b).sum::<f64>().sqrt()
    }
}
