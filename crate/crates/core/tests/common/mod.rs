//! Shared helpers for the integration suites: brute-force oracles written
//! straight from the defining formulas, peak matching, a tiny k-means, and
//! dataset builders.

#![allow(dead_code)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ceabench::domain::{FeatureRow, FeatureSchema, FeatureTable, EVENT_VOCABULARY};
use ceabench::rng::seeded_rng;
use ceabench::synth::{ClusterSpec, CohortSpec, PhaseSpec};
use rand::seq::SliceRandom;
use rand::Rng;

/// Runs one acceptance criterion and prints a single machine-scannable
/// pass/fail line either way.
pub fn criterion(number: u32, name: &str, limit_s: Option<f64>, body: impl FnOnce()) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed().as_secs_f64();
    let mut verdict = if outcome.is_ok() { "PASS" } else { "FAIL" };
    if let Some(limit) = limit_s {
        if elapsed >= limit {
            verdict = "FAIL";
        }
    }
    println!("criterion {number:02} {verdict} {name} ({elapsed:.2} s)");
    if let Err(panic) = outcome {
        std::panic::resume_unwind(panic);
    }
    if let Some(limit) = limit_s {
        assert!(elapsed < limit, "{name}: took {elapsed:.2} s, limit {limit} s");
    }
}

/// The twelve NN statistics, recomputed with straight-line formulas.
#[derive(Debug, Clone, Copy)]
pub struct BruteHrv {
    pub ibi_mean: f64,
    pub bpm: f64,
    pub sdnn: f64,
    pub sdsd: f64,
    pub rmssd: f64,
    pub pnn50: f64,
    pub pnn20: f64,
    pub hr_mad: f64,
    pub sd1: f64,
    pub sd2: f64,
    pub s: f64,
    pub sd1_sd2: f64,
}

pub fn brute_hrv(x: &[f64]) -> BruteHrv {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let popvar = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64
    };
    let median = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if s.len() % 2 == 1 {
            s[s.len() / 2]
        } else {
            0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
        }
    };
    let d: Vec<f64> = (1..x.len()).map(|i| x[i] - x[i - 1]).collect();
    let sdnn = popvar(x).sqrt();
    let sdsd = popvar(&d).sqrt();
    let rmssd = (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt();
    let med = median(x);
    let abs_dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    let sd1 = (popvar(&d) / 2.0).sqrt();
    let sd2 = (2.0 * sdnn * sdnn - popvar(&d) / 2.0).max(0.0).sqrt();
    BruteHrv {
        ibi_mean: mean,
        bpm: 60000.0 / mean,
        sdnn,
        sdsd,
        rmssd,
        pnn50: d.iter().filter(|v| v.abs() > 50.0).count() as f64 / n,
        pnn20: d.iter().filter(|v| v.abs() > 20.0).count() as f64 / n,
        hr_mad: median(&abs_dev),
        sd1,
        sd2,
        s: std::f64::consts::PI * sd1 * sd2,
        sd1_sd2: if sd2 == 0.0 { 0.0 } else { sd1 / sd2 },
    }
}

/// Relative closeness suited to oracle comparison: exact zeros must agree
/// exactly, everything else within `rel`.
pub fn assert_close(actual: f64, expected: f64, rel: f64, what: &str) {
    if expected == 0.0 {
        assert_eq!(actual, 0.0, "{what}: expected exact 0, got {actual}");
    } else {
        let err = ((actual - expected) / expected).abs();
        assert!(err <= rel, "{what}: {actual} vs {expected} (rel err {err:.3e})");
    }
}

/// One-to-one nearest matching of detected against true peak times within
/// `tol_s`. Returns (hits, misses, false alarms).
pub fn match_peaks(truth: &[f64], detected: &[f64], tol_s: f64) -> (usize, usize, usize) {
    let mut hits = 0usize;
    let mut i = 0usize;
    let mut j = 0usize;
    while i < truth.len() && j < detected.len() {
        let dt = detected[j] - truth[i];
        if dt.abs() <= tol_s {
            hits += 1;
            i += 1;
            j += 1;
        } else if dt < 0.0 {
            j += 1;
        } else {
            i += 1;
        }
    }
    (hits, truth.len() - hits, detected.len() - hits)
}

/// Trapezoidal integral of y over x.
pub fn trapz(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) * (ys[0] + ys[1]) / 2.0)
        .sum()
}

/// Lloyd 2-means on 2-D points with deterministic farthest-point seeding.
pub fn two_means(points: &[[f64; 2]]) -> Vec<usize> {
    let mut c0 = points[0];
    let far = points
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            let da = (a[0] - c0[0]).powi(2) + (a[1] - c0[1]).powi(2);
            let db = (b[0] - c0[0]).powi(2) + (b[1] - c0[1]).powi(2);
            da.total_cmp(&db)
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut c1 = points[far];
    let mut assign = vec![0usize; points.len()];
    for _ in 0..100 {
        for (i, p) in points.iter().enumerate() {
            let d0 = (p[0] - c0[0]).powi(2) + (p[1] - c0[1]).powi(2);
            let d1 = (p[0] - c1[0]).powi(2) + (p[1] - c1[1]).powi(2);
            assign[i] = usize::from(d1 < d0);
        }
        let mut sums = [[0.0f64; 2]; 2];
        let mut counts = [0usize; 2];
        for (i, p) in points.iter().enumerate() {
            sums[assign[i]][0] += p[0];
            sums[assign[i]][1] += p[1];
            counts[assign[i]] += 1;
        }
        if counts[0] == 0 || counts[1] == 0 {
            break;
        }
        c0 = [sums[0][0] / counts[0] as f64, sums[0][1] / counts[0] as f64];
        c1 = [sums[1][0] / counts[1] as f64, sums[1][1] / counts[1] as f64];
    }
    assign
}

/// Fraction of points whose cluster assignment matches the labels up to
/// cluster renaming.
pub fn cluster_agreement(assign: &[usize], truth: &[usize]) -> f64 {
    let agree = assign.iter().zip(truth).filter(|(a, t)| a == t).count();
    agree.max(assign.len() - agree) as f64 / assign.len() as f64
}

/// Gaussian blob table: `informative` columns carry class-dependent means,
/// all other columns are pure noise. Labels use the canonical vocabulary.
pub fn blob_table(
    n_rows: usize,
    n_features: usize,
    n_classes: usize,
    informative: &[usize],
    spread: f64,
    seed: u64,
) -> FeatureTable {
    assert!(n_classes <= EVENT_VOCABULARY.len());
    let mut rng = seeded_rng(seed, 0);
    let centers: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..informative.len()).map(|_| rng.gen_range(-spread..spread)).collect())
        .collect();
    let schema = FeatureSchema {
        version: 1,
        names: (0..n_features).map(|i| format!("f{i:02}")).collect(),
    };
    let mut table = FeatureTable::new(schema);
    for row in 0..n_rows {
        let class = row % n_classes;
        let mut values: Vec<f64> = (0..n_features).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for (k, &col) in informative.iter().enumerate() {
            values[col] = centers[class][k] + rng.gen_range(-1.0..1.0);
        }
        table
            .push(FeatureRow {
                patient_id: format!("C{:03}", row % 5 + 1),
                window_start_s: (row / 5) as f64 * 60.0,
                values,
                label: EVENT_VOCABULARY[class].to_string(),
            })
            .unwrap();
    }
    table
}

/// Random feature table with several patients and labels; finite values.
pub fn random_table(n_rows: usize, n_features: usize, seed: u64) -> FeatureTable {
    let mut rng = seeded_rng(seed, 0);
    let schema = FeatureSchema {
        version: 1,
        names: (0..n_features).map(|i| format!("f{i:02}")).collect(),
    };
    let mut table = FeatureTable::new(schema);
    for row in 0..n_rows {
        table
            .push(FeatureRow {
                patient_id: format!("C{:03}", rng.gen_range(1..7)),
                window_start_s: row as f64 * 60.0,
                values: (0..n_features).map(|_| rng.gen_range(-1e6..1e6)).collect(),
                label: EVENT_VOCABULARY.choose(&mut rng).unwrap().to_string(),
            })
            .unwrap();
    }
    table
}

/// Small 3-patient cohort spec for pipeline and determinism tests: three
/// phases of 4 minutes each, both demographic clusters.
pub fn tiny_cohort_spec() -> CohortSpec {
    let example = CohortSpec::two_cluster_example(3);
    let phases = vec![
        PhaseSpec { label: "pre_clamp_anaesthesia".into(), duration_s: 360.0 },
        PhaseSpec { label: "clamped_artery".into(), duration_s: 360.0 },
        PhaseSpec { label: "shunt".into(), duration_s: 360.0 },
    ];
    let clusters: Vec<ClusterSpec> = example
        .clusters
        .into_iter()
        .map(|mut c| {
            c.abp_by_phase = c.abp_by_phase[..3].to_vec();
            c
        })
        .collect();
    CohortSpec { n_patients: 3, phases, clusters, master_seed: 11 }
}
