//! Report artifacts: CSV tables, SVG charts, and the run manifest written
//! beside every command's outputs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::charts::{confusion_heatmap_svg, embedding_scatter_svg, importance_bars_svg};
use crate::error::{Error, Result};
use crate::eval::{EvalReport, PairwiseEval, WithinPatientEval};

/// Bars shown in importance charts, after the paper's top-15 layout.
pub const IMPORTANCE_CHART_TOP: usize = 15;

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Fold key for per-fold artifact directories; the protocol strings place
/// the distinguishing id after the final `=`.
fn fold_key(report: &EvalReport) -> String {
    let raw = report.protocol.rsplit('=').next().unwrap_or(&report.protocol);
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes one evaluation's artifact set into `dir`: summary, per-class
/// metrics, confusion matrix, importances, and the two charts.
pub fn write_eval_report(dir: &Path, report: &EvalReport, feature_names: &[String]) -> Result<()> {
    if feature_names.len() != report.importances.len() {
        return Err(Error::Schema(format!(
            "importances length {} does not match {} feature names",
            report.importances.len(),
            feature_names.len()
        )));
    }
    fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("summary.csv"))?));
    w.write_record(["key", "value"]).map_err(csv_error)?;
    for (key, value) in [
        ("protocol", report.protocol.clone()),
        ("seed", report.seed.to_string()),
        ("accuracy", report.accuracy.to_string()),
        ("train_rows", report.train_rows.to_string()),
        ("test_rows", report.test_rows.to_string()),
        ("dropped_rows", report.dropped_rows.to_string()),
        ("degenerate", report.degenerate.to_string()),
        ("warnings", report.warnings.join("; ")),
    ] {
        w.write_record([key, &value]).map_err(csv_error)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("per_class.csv"))?));
    w.write_record(["class", "precision", "recall", "undefined_precision", "undefined_recall"])
        .map_err(csv_error)?;
    for (class, m) in report.classes.iter().zip(&report.per_class) {
        w.write_record([
            class.as_str(),
            &m.precision.to_string(),
            &m.recall.to_string(),
            &m.undefined_precision.to_string(),
            &m.undefined_recall.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("confusion.csv"))?));
    let mut header = vec!["true_class".to_string()];
    header.extend(report.classes.iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    for (class, row) in report.classes.iter().zip(&report.confusion) {
        let mut record = vec![class.clone()];
        record.extend(row.iter().map(u64::to_string));
        w.write_record(&record).map_err(csv_error)?;
    }
    w.flush()?;

    let mut order: Vec<usize> = (0..feature_names.len()).collect();
    order.sort_by(|&a, &b| report.importances[b].total_cmp(&report.importances[a]));
    let mut w =
        csv::Writer::from_writer(BufWriter::new(File::create(dir.join("importances.csv"))?));
    w.write_record(["feature", "importance"]).map_err(csv_error)?;
    for &i in &order {
        w.write_record([feature_names[i].as_str(), &report.importances[i].to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;

    write_text(
        &dir.join("importances.svg"),
        &importance_bars_svg(feature_names, &report.importances, IMPORTANCE_CHART_TOP),
    )?;
    write_text(
        &dir.join("confusion.svg"),
        &confusion_heatmap_svg(&report.classes, &report.confusion),
    )?;
    Ok(())
}

/// Pairwise artifacts: the accuracy matrix (rows train, columns test, blank
/// diagonal) and one summary line per ordered cell.
pub fn write_pairwise_report(dir: &Path, eval: &PairwiseEval) -> Result<()> {
    fs::create_dir_all(dir)?;
    let ids = &eval.matrix.patient_ids;

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("matrix.csv"))?));
    let mut header = vec!["train".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    for (i, train) in ids.iter().enumerate() {
        let mut record = vec![train.clone()];
        for j in 0..ids.len() {
            record.push(match eval.matrix.accuracy[i][j] {
                Some(a) => a.to_string(),
                None => String::new(),
            });
        }
        w.write_record(&record).map_err(csv_error)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("cells.csv"))?));
    w.write_record(["train", "test", "accuracy", "train_rows", "test_rows", "degenerate"])
        .map_err(csv_error)?;
    let mut cell_iter = eval.cells.iter();
    for (i, train) in ids.iter().enumerate() {
        for (j, test) in ids.iter().enumerate() {
            if i == j {
                continue;
            }
            let cell = cell_iter.next().ok_or_else(|| {
                Error::Schema("pairwise cell list shorter than the matrix".to_string())
            })?;
            w.write_record([
                train.as_str(),
                test.as_str(),
                &cell.accuracy.to_string(),
                &cell.train_rows.to_string(),
                &cell.test_rows.to_string(),
                &cell.degenerate.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_fold_index(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("accuracy.csv"))?));
    w.write_record(["fold", "accuracy", "train_rows", "test_rows", "degenerate"])
        .map_err(csv_error)?;
    for report in reports {
        w.write_record([
            fold_key(report).as_str(),
            &report.accuracy.to_string(),
            &report.train_rows.to_string(),
            &report.test_rows.to_string(),
            &report.degenerate.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Leave-one-patient-out artifacts: a fold index plus one full report
/// directory per held-out patient.
pub fn write_lopo_report(dir: &Path, reports: &[EvalReport], feature_names: &[String]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_fold_index(dir, reports)?;
    for report in reports {
        write_eval_report(&dir.join(fold_key(report)), report, feature_names)?;
    }
    Ok(())
}

/// Within-patient artifacts: fold index, per-patient reports, and the
/// single-class patients that were skipped.
pub fn write_within_report(
    dir: &Path,
    eval: &WithinPatientEval,
    feature_names: &[String],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_fold_index(dir, &eval.reports)?;
    for report in &eval.reports {
        write_eval_report(&dir.join(fold_key(report)), report, feature_names)?;
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("skipped.csv"))?));
    w.write_record(["patient_id"]).map_err(csv_error)?;
    for id in &eval.skipped {
        w.write_record([id.as_str()]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub patient_id: String,
    pub window_start_s: f64,
    pub x: f64,
    pub y: f64,
    pub label: String,
}

pub fn write_embedding_csv(path: &Path, rows: &[EmbeddingRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["patient_id", "window_start_s", "x", "y", "label"]).map_err(csv_error)?;
    for row in rows {
        w.write_record([
            row.patient_id.as_str(),
            &row.window_start_s.to_string(),
            &row.x.to_string(),
            &row.y.to_string(),
            row.label.as_str(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_embedding_svg(path: &Path, rows: &[EmbeddingRow]) -> Result<()> {
    let points: Vec<[f64; 2]> = rows.iter().map(|r| [r.x, r.y]).collect();
    let labels: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
    write_text(path, &embedding_scatter_svg(&points, &labels))
}

/// What a command ran with; written beside its outputs so any run can be
/// replayed exactly. Contains no wall-clock fields on purpose.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub schema_version: u32,
    pub command: String,
    pub inputs: Vec<String>,
    pub seed: Option<u64>,
    pub params: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, inputs: Vec<String>, seed: Option<u64>, params: serde_json::Value) -> Self {
        RunManifest {
            tool: "ceabench".to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: crate::domain::FeatureSchema::v1().version,
            command: command.to_string(),
            inputs,
            seed,
            params,
        }
    }
}

pub const MANIFEST_FILE: &str = "run_manifest.json";

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;
    write_text(&dir.join(MANIFEST_FILE), &format!("{json}\n"))
}
