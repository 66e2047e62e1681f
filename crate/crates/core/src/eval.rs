//! Evaluation protocols: pooled split, pairwise cross-patient,
//! leave-one-patient-out, within-patient, plus classification metrics and
//! the demographic-similarity score.

use rayon::prelude::*;

use crate::domain::{Demographics, FeatureTable, EVENT_VOCABULARY};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, predict_table, ForestParams};
use crate::rng::{seeded_rng, stream_id, NS_SPLIT};

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    /// True when the 0/0 convention fired (class never predicted or never
    /// present).
    pub undefined_precision: bool,
    pub undefined_recall: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricsCore {
    pub accuracy: f64,
    /// Rows are true classes, columns predicted, both in vocabulary order.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EvalReport {
    pub protocol: String,
    pub seed: u64,
    pub classes: Vec<String>,
    pub accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    pub importances: Vec<f64>,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Input rows discarded for containing not-a-value.
    pub dropped_rows: usize,
    /// True when the underlying model is a single-class constant predictor.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PairwiseMatrix {
    pub patient_ids: Vec<String>,
    /// accuracy[i][j] for train patient i, test patient j; diagonal absent.
    pub accuracy: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PairwiseEval {
    pub matrix: PairwiseMatrix,
    /// One report per ordered pair, row-major with the diagonal skipped.
    pub cells: Vec<EvalReport>,
}

impl PairwiseEval {
    pub fn cell(&self, train: usize, test: usize) -> Option<&EvalReport> {
        if train == test || train >= self.matrix.patient_ids.len() {
            return None;
        }
        let row_base = train * (self.matrix.patient_ids.len() - 1);
        let offset = if test < train { test } else { test - 1 };
        self.cells.get(row_base + offset)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WithinPatientEval {
    pub reports: Vec<EvalReport>,
    /// Patients skipped for having a single class.
    pub skipped: Vec<String>,
}

/// Confusion counts, accuracy, and per-class precision/recall over an
/// explicit class vocabulary. 0/0 ratios are defined as 0 and flagged.
pub fn metrics(truth: &[String], predicted: &[String], vocabulary: &[String]) -> Result<MetricsCore> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::param(
            "labels",
            format!("need equal non-empty label lists, got {} and {}", truth.len(), predicted.len()),
        ));
    }
    let index_of = |label: &String| {
        vocabulary
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::Vocabulary(label.clone()))
    };
    let k = vocabulary.len();
    let mut confusion = vec![vec![0u64; k]; k];
    for (t, p) in truth.iter().zip(predicted) {
        confusion[index_of(t)?][index_of(p)?] += 1;
    }
    let total: u64 = confusion.iter().flatten().sum();
    let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let accuracy = trace as f64 / total as f64;

    let per_class = (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let actual: u64 = confusion[c].iter().sum();
            let called: u64 = confusion.iter().map(|row| row[c]).sum();
            ClassMetrics {
                precision: if called > 0 { tp as f64 / called as f64 } else { 0.0 },
                recall: if actual > 0 { tp as f64 / actual as f64 } else { 0.0 },
                undefined_precision: called == 0,
                undefined_recall: actual == 0,
            }
        })
        .collect();

    Ok(MetricsCore { accuracy, confusion, per_class })
}

/// Classes present in any of the tables, in canonical vocabulary order.
fn classes_in_vocab_order(tables: &[&FeatureTable]) -> Vec<String> {
    EVENT_VOCABULARY
        .iter()
        .filter(|c| tables.iter().any(|t| t.rows.iter().any(|r| r.label == **c)))
        .map(|c| c.to_string())
        .collect()
}

/// Stratified split: per class, a seeded shuffle sends about `test_frac`
/// of the rows to the test side. Single-row classes stay in train and are
/// reported in the warnings.
pub fn stratified_split(
    table: &FeatureTable,
    test_frac: f64,
    seed: u64,
    stream: u64,
) -> Result<(FeatureTable, FeatureTable, Vec<String>)> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::param("test_frac", format!("must be in (0, 1), got {test_frac}")));
    }
    let classes = classes_in_vocab_order(&[table]);
    let mut rng = seeded_rng(seed, stream_id(NS_SPLIT, stream));
    let mut warnings = Vec::new();
    let mut test_indices: Vec<usize> = Vec::new();
    for class in &classes {
        let mut indices: Vec<usize> = table
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| &r.label == class)
            .map(|(i, _)| i)
            .collect();
        if indices.len() == 1 {
            warnings.push(format!("class {class} has a single row; kept in train"));
            continue;
        }
        rand::seq::SliceRandom::shuffle(indices.as_mut_slice(), &mut rng);
        let n_test = ((indices.len() as f64 * test_frac).round() as usize)
            .min(indices.len() - 1)
            .max(1);
        test_indices.extend(indices.into_iter().take(n_test));
    }
    if test_indices.is_empty() {
        return Err(Error::InsufficientData("stratified split produced an empty test set".into()));
    }
    test_indices.sort_unstable();
    let mut in_test = vec![false; table.rows.len()];
    for &i in &test_indices {
        in_test[i] = true;
    }
    let mut train = FeatureTable::new(table.schema.clone());
    let mut test = FeatureTable::new(table.schema.clone());
    for (i, row) in table.rows.iter().enumerate() {
        if in_test[i] {
            test.rows.push(row.clone());
        } else {
            train.rows.push(row.clone());
        }
    }
    Ok((train, test, warnings))
}

/// Fits on train, scores on test, assembles the full report.
fn run_fold(
    protocol: String,
    seed: u64,
    train: &FeatureTable,
    test: &FeatureTable,
    params: &ForestParams,
    dropped_rows: usize,
    mut warnings: Vec<String>,
) -> Result<EvalReport> {
    let model = fit_forest(train, params)?;
    if model.degenerate {
        warnings.push("trained on a single class; constant predictor".to_string());
    }
    let vocabulary = {
        // Union of model classes and test labels covers classes the model
        // has never seen; predicting them is impossible, so such rows
        // count as errors.
        let mut all = classes_in_vocab_order(&[test]);
        for c in &model.classes {
            if !all.contains(c) {
                all.push(c.clone());
            }
        }
        EVENT_VOCABULARY
            .iter()
            .filter(|c| all.iter().any(|a| a == *c))
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
    };
    let predictions = predict_table(&model, test)?;
    let truth: Vec<String> = test.rows.iter().map(|r| r.label.clone()).collect();
    let predicted: Vec<String> = predictions.into_iter().map(|(label, _)| label).collect();
    let core = metrics(&truth, &predicted, &vocabulary)?;
    Ok(EvalReport {
        protocol,
        seed,
        classes: vocabulary,
        accuracy: core.accuracy,
        confusion: core.confusion,
        per_class: core.per_class,
        importances: model.importances.clone(),
        train_rows: model.trained_rows,
        test_rows: test.rows.len(),
        dropped_rows,
        degenerate: model.degenerate,
        warnings,
    })
}

/// Pools every patient, splits stratified by class, trains once.
pub fn pooled_eval(
    per_patient: &[FeatureTable],
    params: &ForestParams,
    test_frac: f64,
    seed: u64,
) -> Result<EvalReport> {
    let refs: Vec<&FeatureTable> = per_patient.iter().collect();
    let pooled = FeatureTable::concat(&refs)?;
    let complete = pooled.complete_rows();
    let dropped = pooled.rows.len() - complete.rows.len();
    if classes_in_vocab_order(&[&complete]).len() < 2 {
        return Err(Error::InsufficientData(
            "pooled evaluation needs at least 2 classes".into(),
        ));
    }
    let (train, test, warnings) = stratified_split(&complete, test_frac, seed, 0)?;
    run_fold("pooled".to_string(), seed, &train, &test, params, dropped, warnings)
}

/// Trains on each patient alone and tests on every other patient.
pub fn pairwise_eval(
    per_patient: &[(String, FeatureTable)],
    params: &ForestParams,
) -> Result<PairwiseEval> {
    if per_patient.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "pairwise evaluation needs >= 2 patients, got {}",
            per_patient.len()
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..per_patient.len())
        .flat_map(|i| (0..per_patient.len()).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let cells: Vec<EvalReport> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (train_id, train_table) = &per_patient[i];
            let (test_id, test_table) = &per_patient[j];
            let train = train_table.complete_rows();
            let test = test_table.complete_rows();
            if test.rows.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "patient {test_id} has no complete rows to test on"
                )));
            }
            let dropped = train_table.rows.len() - train.rows.len() + test_table.rows.len()
                - test.rows.len();
            run_fold(
                format!("pairwise train={train_id} test={test_id}"),
                params.seed,
                &train,
                &test,
                params,
                dropped,
                Vec::new(),
            )
        })
        .collect::<Result<_>>()?;

    let n = per_patient.len();
    let mut accuracy = vec![vec![None; n]; n];
    for (cell, &(i, j)) in cells.iter().zip(&pairs) {
        accuracy[i][j] = Some(cell.accuracy);
    }
    Ok(PairwiseEval {
        matrix: PairwiseMatrix {
            patient_ids: per_patient.iter().map(|(id, _)| id.clone()).collect(),
            accuracy,
        },
        cells,
    })
}

/// Leave-one-patient-out: each patient is tested against a model trained
/// on all the others pooled.
pub fn lopo_eval(
    per_patient: &[(String, FeatureTable)],
    params: &ForestParams,
) -> Result<Vec<EvalReport>> {
    if per_patient.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "leave-one-patient-out needs >= 3 patients, got {}",
            per_patient.len()
        )));
    }
    (0..per_patient.len())
        .into_par_iter()
        .map(|held_out| {
            let (test_id, test_table) = &per_patient[held_out];
            let train_tables: Vec<&FeatureTable> = per_patient
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != held_out)
                .map(|(_, (_, t))| t)
                .collect();
            let pooled = FeatureTable::concat(&train_tables)?;
            let train = pooled.complete_rows();
            let test = test_table.complete_rows();
            if test.rows.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "patient {test_id} has no complete rows to test on"
                )));
            }
            let dropped = pooled.rows.len() - train.rows.len() + test_table.rows.len()
                - test.rows.len();
            run_fold(
                format!("lopo test={test_id}"),
                params.seed,
                &train,
                &test,
                params,
                dropped,
                Vec::new(),
            )
        })
        .collect()
}

/// Stratified split inside each patient; single-class patients are
/// skipped and listed.
pub fn within_patient_eval(
    per_patient: &[(String, FeatureTable)],
    params: &ForestParams,
    train_frac: f64,
    seed: u64,
) -> Result<WithinPatientEval> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::param("train_frac", format!("must be in (0, 1), got {train_frac}")));
    }
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    let folds: Vec<(usize, &(String, FeatureTable))> = per_patient.iter().enumerate().collect();
    let results: Vec<Result<Option<EvalReport>>> = folds
        .par_iter()
        .map(|&(idx, (id, table))| {
            let complete = table.complete_rows();
            if classes_in_vocab_order(&[&complete]).len() < 2 {
                return Ok(None);
            }
            let dropped = table.rows.len() - complete.rows.len();
            let (train, test, warnings) =
                stratified_split(&complete, 1.0 - train_frac, seed, idx as u64)?;
            run_fold(format!("within patient={id}"), seed, &train, &test, params, dropped, warnings)
                .map(Some)
        })
        .collect();
    for (result, (_, (id, _))) in results.into_iter().zip(folds) {
        match result? {
            Some(report) => reports.push(report),
            None => skipped.push(id.clone()),
        }
    }
    Ok(WithinPatientEval { reports, skipped })
}

/// Demographic likeness in {0, 1, 2, 3}: same sex, same operated side,
/// age gap of at most ten years.
pub fn demographic_similarity(a: &Demographics, b: &Demographics) -> u32 {
    let mut score = 0;
    if a.sex == b.sex {
        score += 1;
    }
    if a.operated_side == b.operated_side {
        score += 1;
    }
    if a.age_years.abs_diff(b.age_years) <= 10 {
        score += 1;
    }
    score
}

/// Average ranks with ties sharing the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-rank tie handling. Zero when
/// either side has no rank variance.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::param(
            "samples",
            format!("need two equal-length series of >= 2 values, got {} and {}", x.len(), y.len()),
        ));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mean) * (b - mean);
        var_x += (a - mean) * (a - mean);
        var_y += (b - mean) * (b - mean);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (var_x * var_y).sqrt())
}
