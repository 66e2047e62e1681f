//! Patient records, annotations, and the feature-table model.

use crate::error::{Error, Result};

/// Phase labels accepted in event annotations and feature tables.
///
/// Anything outside this list is rejected at parse and validation time.
pub const EVENT_VOCABULARY: [&str; 9] = [
    "pre_induction",
    "pre_clamp_anaesthesia",
    "pre_clamp_surgery",
    "clamped_artery",
    "shunt",
    "hrv_window_pre_clamp",
    "hrv_window_post_clamp",
    "post_op_anaesthesia",
    "post_op_care",
];

/// Montage used for EEG recordings, in canonical column order.
pub const EEG_CHANNELS: [&str; 6] = ["F3_Cz", "F4_Cz", "C3_Cz", "C4_Cz", "P3_Cz", "P4_Cz"];

/// Frequency bands integrated from EEG spectra, in canonical order.
pub const EEG_BANDS: [(&str, f64, f64); 5] = [
    ("delta", 0.5, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha", 8.0, 13.0),
    ("beta", 13.0, 30.0),
    ("gamma", 30.0, 45.0),
];

pub fn is_canonical_label(label: &str) -> bool {
    EVENT_VOCABULARY.contains(&label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

impl std::fmt::Display for Sex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sex::Female => "female",
            Sex::Male => "male",
        })
    }
}

impl std::str::FromStr for Sex {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "female" => Ok(Sex::Female),
            "male" => Ok(Sex::Male),
            other => Err(Error::Format(format!("unknown sex `{other}`"))),
        }
    }
}

/// Side of the operated carotid artery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(Error::Format(format!("unknown side `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Demographics {
    pub age_years: u32,
    pub sex: Sex,
    pub operated_side: Side,
}

/// Uniformly sampled single-channel signal. Sample `i` sits at
/// `start_s + i / rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries {
    pub rate_hz: f64,
    pub start_s: f64,
    pub values: Vec<f64>,
}

impl SampleSeries {
    pub fn new(rate_hz: f64, start_s: f64, values: Vec<f64>) -> Self {
        SampleSeries { rate_hz, start_s, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.rate_hz
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.start_s + index as f64 / self.rate_hz
    }

    /// Samples whose timestamps fall in `[t0, t1)`.
    pub fn slice_time(&self, t0: f64, t1: f64) -> &[f64] {
        let (lo, hi) = self.index_range(t0, t1);
        &self.values[lo..hi]
    }

    /// Half-open index range covering `[t0, t1)`, clamped to the signal.
    pub fn index_range(&self, t0: f64, t1: f64) -> (usize, usize) {
        let lo = ((t0 - self.start_s) * self.rate_hz).ceil().max(0.0) as usize;
        let hi = ((t1 - self.start_s) * self.rate_hz).ceil().max(0.0) as usize;
        let lo = lo.min(self.values.len());
        let hi = hi.min(self.values.len()).max(lo);
        (lo, hi)
    }
}

/// Uniformly sampled multi-channel signal with named channels of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelSeries {
    pub rate_hz: f64,
    pub start_s: f64,
    pub channel_names: Vec<String>,
    /// `channels[c][i]` is channel `c` at sample `i`.
    pub channels: Vec<Vec<f64>>,
}

impl MultiChannelSeries {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        let idx = self.channel_names.iter().position(|n| n == name)?;
        Some(&self.channels[idx])
    }

    /// Single channel restricted to `[t0, t1)`, as a SampleSeries.
    pub fn channel_slice(&self, name: &str, t0: f64, t1: f64) -> Option<SampleSeries> {
        let data = self.channel(name)?;
        let probe = SampleSeries::new(self.rate_hz, self.start_s, Vec::new());
        let lo = ((t0 - probe.start_s) * probe.rate_hz).ceil().max(0.0) as usize;
        let hi = ((t1 - probe.start_s) * probe.rate_hz).ceil().max(0.0) as usize;
        let lo = lo.min(data.len());
        let hi = hi.min(data.len()).max(lo);
        Some(SampleSeries::new(
            self.rate_hz,
            self.start_s + lo as f64 / self.rate_hz,
            data[lo..hi].to_vec(),
        ))
    }
}

/// One annotated interval `[start_s, end_s)` with a vocabulary label.
#[derive(Debug, Clone, PartialEq)]
pub struct EventAnnotation {
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
}

/// Everything recorded for one patient during one procedure.
#[derive(Debug, Clone)]
pub struct PatientRecord {
    pub id: String,
    pub demographics: Demographics,
    pub ecg: SampleSeries,
    pub eeg: MultiChannelSeries,
    pub abp: SampleSeries,
    pub nirs_left: SampleSeries,
    pub nirs_right: SampleSeries,
    pub spo2: SampleSeries,
    pub events: Vec<EventAnnotation>,
}

/// One problem found by [`validate_record`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn check_series(name: &str, s: &SampleSeries, out: &mut Vec<Violation>) {
    if !(s.rate_hz.is_finite() && s.rate_hz > 0.0) {
        out.push(Violation {
            field: name.to_string(),
            message: format!("sample rate must be positive, got {}", s.rate_hz),
        });
    }
    if let Some(i) = s.values.iter().position(|v| !v.is_finite()) {
        out.push(Violation {
            field: name.to_string(),
            message: format!("non-finite sample at index {i}"),
        });
    }
}

/// Structural checks for a patient record. An empty result means the record
/// is usable by the feature extractor.
pub fn validate_record(record: &PatientRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.id.is_empty() {
        out.push(Violation {
            field: "id".into(),
            message: "patient id must not be empty".into(),
        });
    }
    check_series("ecg", &record.ecg, &mut out);
    check_series("abp", &record.abp, &mut out);
    check_series("nirs_left", &record.nirs_left, &mut out);
    check_series("nirs_right", &record.nirs_right, &mut out);
    check_series("spo2", &record.spo2, &mut out);

    if !(record.eeg.rate_hz.is_finite() && record.eeg.rate_hz > 0.0) {
        out.push(Violation {
            field: "eeg".into(),
            message: format!("sample rate must be positive, got {}", record.eeg.rate_hz),
        });
    }
    if record.eeg.channel_names.len() != record.eeg.channels.len() {
        out.push(Violation {
            field: "eeg".into(),
            message: format!(
                "{} channel names but {} channels",
                record.eeg.channel_names.len(),
                record.eeg.channels.len()
            ),
        });
    } else {
        let n = record.eeg.len();
        for (name, ch) in record.eeg.channel_names.iter().zip(&record.eeg.channels) {
            if ch.len() != n {
                out.push(Violation {
                    field: format!("eeg.{name}"),
                    message: format!("channel length {} differs from {}", ch.len(), n),
                });
            }
            if let Some(i) = ch.iter().position(|v| !v.is_finite()) {
                out.push(Violation {
                    field: format!("eeg.{name}"),
                    message: format!("non-finite sample at index {i}"),
                });
            }
        }
        for required in EEG_CHANNELS {
            if !record.eeg.channel_names.iter().any(|n| n == required) {
                out.push(Violation {
                    field: "eeg".into(),
                    message: format!("missing channel {required}"),
                });
            }
        }
    }

    for (i, ev) in record.events.iter().enumerate() {
        if !(ev.end_s > ev.start_s) {
            out.push(Violation {
                field: format!("events[{i}]"),
                message: format!("interval [{}, {}) is empty or reversed", ev.start_s, ev.end_s),
            });
        }
        if !is_canonical_label(&ev.label) {
            out.push(Violation {
                field: format!("events[{i}]"),
                message: format!("label `{}` is not in the vocabulary", ev.label),
            });
        }
    }
    out
}

/// Versioned, ordered list of feature column names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    pub version: u32,
    pub names: Vec<String>,
}

impl FeatureSchema {
    /// Schema v1: 30 EEG band powers (band-major over the montage), 13 heart
    /// features, then the four slow hemodynamic means. 47 columns total.
    pub fn v1() -> Self {
        let mut names = Vec::with_capacity(47);
        for (band, _, _) in EEG_BANDS {
            for ch in EEG_CHANNELS {
                names.push(format!("{band}_{ch}"));
            }
        }
        for f in [
            "ibi_mean",
            "bpm",
            "sdnn",
            "sdsd",
            "rmssd",
            "pnn50",
            "pnn20",
            "hr_mad",
            "sd1",
            "sd2",
            "s",
            "sd1_sd2",
            "breathing_rate",
        ] {
            names.push(f.to_string());
        }
        for f in ["abp_mean", "rso2_left", "rso2_right", "spo2_mean"] {
            names.push(f.to_string());
        }
        FeatureSchema { version: 1, names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// One labelled feature vector for one analysis window.
#[derive(Debug, Clone)]
pub struct FeatureRow {
    pub patient_id: String,
    pub window_start_s: f64,
    /// Aligned with the table schema; NaN marks a feature that could not be
    /// computed for this window.
    pub values: Vec<f64>,
    pub label: String,
}

/// Equality treats NaN cells as equal to each other, so round-tripped
/// tables with missing values still compare equal.
impl PartialEq for FeatureRow {
    fn eq(&self, other: &Self) -> bool {
        self.patient_id == other.patient_id
            && self.window_start_s == other.window_start_s
            && self.label == other.label
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

/// Feature rows plus the schema that gives their columns meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub schema: FeatureSchema,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(schema: FeatureSchema) -> Self {
        FeatureTable { schema, rows: Vec::new() }
    }

    pub fn push(&mut self, row: FeatureRow) -> Result<()> {
        if row.values.len() != self.schema.len() {
            return Err(Error::Schema(format!(
                "row has {} values, schema has {} columns",
                row.values.len(),
                self.schema.len()
            )));
        }
        if !is_canonical_label(&row.label) {
            return Err(Error::Vocabulary(row.label.clone()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct labels in first-appearance order.
    pub fn classes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for row in &self.rows {
            if !out.iter().any(|c| c == &row.label) {
                out.push(row.label.clone());
            }
        }
        out
    }

    /// Distinct patient ids in first-appearance order.
    pub fn patient_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for row in &self.rows {
            if !out.iter().any(|p| p == &row.patient_id) {
                out.push(row.patient_id.clone());
            }
        }
        out
    }

    /// New table holding the rows of the given patients, in original order.
    pub fn filter_patients(&self, ids: &[&str]) -> FeatureTable {
        FeatureTable {
            schema: self.schema.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| ids.contains(&r.patient_id.as_str()))
                .cloned()
                .collect(),
        }
    }

    /// New table keeping only rows where every feature is finite.
    pub fn complete_rows(&self) -> FeatureTable {
        FeatureTable {
            schema: self.schema.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| r.values.iter().all(|v| v.is_finite()))
                .cloned()
                .collect(),
        }
    }

    /// Concatenates tables that share a schema.
    pub fn concat(parts: &[&FeatureTable]) -> Result<FeatureTable> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InsufficientData("no tables to concatenate".into()))?;
        let mut out = FeatureTable::new(first.schema.clone());
        for part in parts {
            if part.schema != first.schema {
                return Err(Error::Schema("tables have different schemas".into()));
            }
            out.rows.extend(part.rows.iter().cloned());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_v1_has_47_unique_names() {
        let schema = FeatureSchema::v1();
        assert_eq!(schema.len(), 47);
        let mut names = schema.names.clone();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 47);
    }

    #[test]
    fn schema_v1_order_is_band_major_then_heart_then_hemo() {
        let schema = FeatureSchema::v1();
        assert_eq!(schema.names[0], "delta_F3_Cz");
        assert_eq!(schema.names[1], "delta_F4_Cz");
        assert_eq!(schema.names[6], "theta_F3_Cz");
        assert_eq!(schema.names[29], "gamma_P4_Cz");
        assert_eq!(schema.names[30], "ibi_mean");
        assert_eq!(schema.names[42], "breathing_rate");
        assert_eq!(schema.names[43], "abp_mean");
        assert_eq!(schema.names[46], "spo2_mean");
    }

    #[test]
    fn vocabulary_has_nine_labels() {
        assert_eq!(EVENT_VOCABULARY.len(), 9);
        assert!(is_canonical_label("clamped_artery"));
        assert!(!is_canonical_label("Clamped_Artery"));
    }

    #[test]
    fn slice_time_half_open() {
        let s = SampleSeries::new(2.0, 0.0, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.slice_time(0.0, 1.0), &[0.0, 1.0]);
        assert_eq!(s.slice_time(1.0, 2.0), &[2.0, 3.0]);
        assert_eq!(s.slice_time(2.5, 100.0), &[5.0]);
        assert!(s.slice_time(100.0, 200.0).is_empty());
    }

    #[test]
    fn validate_flags_bad_events_and_nan() {
        let demo = Demographics { age_years: 60, sex: Sex::Female, operated_side: Side::Left };
        let mk = |vals: Vec<f64>| SampleSeries::new(1.0, 0.0, vals);
        let eeg = MultiChannelSeries {
            rate_hz: 128.0,
            start_s: 0.0,
            channel_names: EEG_CHANNELS.iter().map(|s| s.to_string()).collect(),
            channels: vec![vec![0.0; 4]; 6],
        };
        let rec = PatientRecord {
            id: "p1".into(),
            demographics: demo,
            ecg: mk(vec![0.0, f64::NAN]),
            eeg,
            abp: mk(vec![80.0]),
            nirs_left: mk(vec![70.0]),
            nirs_right: mk(vec![70.0]),
            spo2: mk(vec![98.0]),
            events: vec![
                EventAnnotation { start_s: 5.0, end_s: 5.0, label: "shunt".into() },
                EventAnnotation { start_s: 0.0, end_s: 1.0, label: "coffee_break".into() },
            ],
        };
        let violations = validate_record(&rec);
        assert_eq!(violations.len(), 3);
        assert!(violations.iter().any(|v| v.field == "ecg"));
        assert!(violations.iter().any(|v| v.field == "events[0]"));
        assert!(violations.iter().any(|v| v.message.contains("coffee_break")));
    }

    #[test]
    fn table_rejects_wrong_width_and_bad_label() {
        let mut t = FeatureTable::new(FeatureSchema::v1());
        let row = FeatureRow {
            patient_id: "p".into(),
            window_start_s: 0.0,
            values: vec![0.0; 3],
            label: "shunt".into(),
        };
        assert!(t.push(row.clone()).is_err());
        let mut row47 = row;
        row47.values = vec![0.0; 47];
        row47.label = "lunch".into();
        assert!(matches!(t.push(row47.clone()), Err(Error::Vocabulary(_))));
        row47.label = "shunt".into();
        assert!(t.push(row47).is_ok());
        assert_eq!(t.len(), 1);
    }
}
