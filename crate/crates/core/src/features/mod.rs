//! Window segmentation, labeling, and feature-table assembly.

pub mod record_io;
pub mod table_io;

use rayon::prelude::*;

use crate::domain::{
    EventAnnotation, FeatureRow, FeatureSchema, FeatureTable, PatientRecord, SampleSeries,
};
use crate::eeg::eeg_window_features;
use crate::error::{Error, Result};
use crate::hemo::window_mean;
use crate::hrv::{breathing_rate, compute_nn_intervals, detect_r_peaks, hrv_features, NnSeries};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub length_s: f64,
    pub stride_s: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { length_s: 60.0, stride_s: 60.0 }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.stride_s > 0.0 && self.stride_s <= self.length_s) {
            return Err(Error::param(
                "stride_s",
                format!("need 0 < stride <= length, got stride {} length {}", self.stride_s, self.length_s),
            ));
        }
        Ok(())
    }
}

/// Overlap length between `[a0, a1)` and `[b0, b1)`.
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

fn recording_span(record: &PatientRecord) -> (f64, f64) {
    let mut t0 = f64::INFINITY;
    let mut t1 = f64::NEG_INFINITY;
    let mut take = |start: f64, dur: f64, n: usize| {
        if n > 0 {
            t0 = t0.min(start);
            t1 = t1.max(start + dur);
        }
    };
    for s in [&record.ecg, &record.abp, &record.nirs_left, &record.nirs_right, &record.spo2] {
        take(s.start_s, s.duration_s(), s.len());
    }
    take(record.eeg.start_s, record.eeg.len() as f64 / record.eeg.rate_hz, record.eeg.len());
    if t0.is_finite() {
        (t0, t1)
    } else {
        (0.0, 0.0)
    }
}

/// Label of the event with maximal overlap against `[start, start + length)`.
/// Ties go to the earliest event start, then to annotation order. `None` when
/// nothing overlaps.
fn majority_label(events: &[EventAnnotation], start: f64, length: f64) -> Option<&str> {
    let mut best: Option<(f64, f64, usize)> = None;
    for (idx, ev) in events.iter().enumerate() {
        let ov = overlap(start, start + length, ev.start_s, ev.end_s);
        if ov <= 0.0 {
            continue;
        }
        let candidate = (ov, ev.start_s, idx);
        best = match best {
            None => Some(candidate),
            Some(cur) => {
                if ov > cur.0 || (ov == cur.0 && (ev.start_s < cur.1 || (ev.start_s == cur.1 && idx < cur.2)))
                {
                    Some(candidate)
                } else {
                    Some(cur)
                }
            }
        };
    }
    best.map(|(_, _, idx)| events[idx].label.as_str())
}

/// Tiles the recording with stride-aligned windows and labels each by the
/// event with the largest temporal overlap. Windows touching no event are
/// dropped. Window starts are integer multiples of the stride.
pub fn segment_and_label(record: &PatientRecord, spec: &WindowSpec) -> Result<Vec<(f64, String)>> {
    spec.validate()?;
    let (t0, t1) = recording_span(record);
    let mut out = Vec::new();
    let mut k = (t0 / spec.stride_s).ceil() as i64;
    loop {
        let start = k as f64 * spec.stride_s;
        if start + spec.length_s > t1 + 1e-9 {
            break;
        }
        if let Some(label) = majority_label(&record.events, start, spec.length_s) {
            out.push((start, label.to_string()));
        }
        k += 1;
    }
    Ok(out)
}

fn whole_record_nn(record: &PatientRecord) -> Option<NnSeries> {
    let peaks = detect_r_peaks(&record.ecg).ok()?;
    compute_nn_intervals(&peaks).ok()
}

/// The 13 heart features for one window, NaN-filled when undercomputable.
fn heart_features(nn: Option<&NnSeries>, start: f64, length: f64) -> [f64; 13] {
    let mut out = [f64::NAN; 13];
    let Some(nn) = nn else { return out };
    let window_nn = nn.slice_onsets(start, start + length);
    if let Ok(h) = hrv_features(&window_nn) {
        out[..12].copy_from_slice(&[
            h.ibi_mean, h.bpm, h.sdnn, h.sdsd, h.rmssd, h.pnn50, h.pnn20, h.hr_mad, h.sd1, h.sd2,
            h.s, h.sd1_sd2,
        ]);
    }
    if let Ok(br) = breathing_rate(&window_nn) {
        out[12] = br.breaths_per_min;
    }
    out
}

fn eeg_window(record: &PatientRecord, start: f64, length: f64) -> crate::domain::MultiChannelSeries {
    let eeg = &record.eeg;
    let probe = SampleSeries::new(eeg.rate_hz, eeg.start_s, Vec::new());
    let lo = ((start - probe.start_s) * probe.rate_hz).ceil().max(0.0) as usize;
    let hi = ((start + length - probe.start_s) * probe.rate_hz).ceil().max(0.0) as usize;
    let n = eeg.len();
    let (lo, hi) = (lo.min(n), hi.min(n).max(lo.min(n)));
    crate::domain::MultiChannelSeries {
        rate_hz: eeg.rate_hz,
        start_s: eeg.start_s + lo as f64 / eeg.rate_hz,
        channel_names: eeg.channel_names.clone(),
        channels: eeg.channels.iter().map(|c| c[lo..hi].to_vec()).collect(),
    }
}

/// One row per labeled window: 30 EEG band powers, 13 heart features, and
/// the four hemodynamic means. Failures inside a window produce NaN fields,
/// never abort the table. Row order follows window start.
pub fn extract_features(record: &PatientRecord, spec: &WindowSpec) -> Result<FeatureTable> {
    let windows = segment_and_label(record, spec)?;
    let nn = whole_record_nn(record);

    let rows: Vec<FeatureRow> = windows
        .par_iter()
        .map(|(start, label)| {
            let mut values = Vec::with_capacity(47);
            match eeg_window_features(&eeg_window(record, *start, spec.length_s)) {
                Ok(eeg) => values.extend(eeg),
                Err(_) => values.extend(std::iter::repeat_n(f64::NAN, 30)),
            }
            values.extend(heart_features(nn.as_ref(), *start, spec.length_s));
            for series in [&record.abp, &record.nirs_left, &record.nirs_right, &record.spo2] {
                values.push(window_mean(series, *start, spec.length_s).unwrap_or(f64::NAN));
            }
            FeatureRow {
                patient_id: record.id.clone(),
                window_start_s: *start,
                values,
                label: label.clone(),
            }
        })
        .collect();

    let mut table = FeatureTable::new(FeatureSchema::v1());
    for row in rows {
        table.push(row)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Demographics, MultiChannelSeries, Sex, Side, EEG_CHANNELS};

    fn record_with_events(events: Vec<EventAnnotation>, seconds: usize) -> PatientRecord {
        let rate = 128.0;
        let n = seconds * rate as usize;
        PatientRecord {
            id: "p1".into(),
            demographics: Demographics { age_years: 60, sex: Sex::Female, operated_side: Side::Left },
            ecg: SampleSeries::new(rate, 0.0, vec![0.0; n]),
            eeg: MultiChannelSeries {
                rate_hz: rate,
                start_s: 0.0,
                channel_names: EEG_CHANNELS.iter().map(|s| s.to_string()).collect(),
                channels: vec![vec![0.0; n]; 6],
            },
            abp: SampleSeries::new(10.0, 0.0, vec![80.0; seconds * 10]),
            nirs_left: SampleSeries::new(1.0, 0.0, vec![70.0; seconds]),
            nirs_right: SampleSeries::new(1.0, 0.0, vec![70.0; seconds]),
            spo2: SampleSeries::new(1.0, 0.0, vec![98.0; seconds]),
            events,
        }
    }

    #[test]
    fn single_event_labels_every_window() {
        let rec = record_with_events(
            vec![EventAnnotation { start_s: 0.0, end_s: 300.0, label: "pre_induction".into() }],
            300,
        );
        let windows = segment_and_label(&rec, &WindowSpec::default()).unwrap();
        assert_eq!(windows.len(), 5);
        assert!(windows.iter().all(|(_, l)| l == "pre_induction"));
        assert!(windows.iter().all(|(s, _)| s % 60.0 == 0.0));
    }

    #[test]
    fn majority_rule_picks_larger_overlap() {
        let rec = record_with_events(
            vec![
                EventAnnotation { start_s: 0.0, end_s: 31.0, label: "clamped_artery".into() },
                EventAnnotation { start_s: 31.0, end_s: 60.0, label: "shunt".into() },
            ],
            60,
        );
        let windows = segment_and_label(&rec, &WindowSpec::default()).unwrap();
        assert_eq!(windows, vec![(0.0, "clamped_artery".to_string())]);
    }

    #[test]
    fn unlabeled_windows_are_dropped() {
        let rec = record_with_events(
            vec![EventAnnotation { start_s: 120.0, end_s: 180.0, label: "shunt".into() }],
            300,
        );
        let windows = segment_and_label(&rec, &WindowSpec::default()).unwrap();
        assert_eq!(windows, vec![(120.0, "shunt".to_string())]);
    }

    #[test]
    fn tie_goes_to_earlier_event() {
        let rec = record_with_events(
            vec![
                EventAnnotation { start_s: 30.0, end_s: 60.0, label: "shunt".into() },
                EventAnnotation { start_s: 0.0, end_s: 30.0, label: "pre_induction".into() },
            ],
            60,
        );
        let windows = segment_and_label(&rec, &WindowSpec::default()).unwrap();
        assert_eq!(windows, vec![(0.0, "pre_induction".to_string())]);
    }

    #[test]
    fn extract_fills_hemo_and_marks_missing_ecg() {
        let rec = record_with_events(
            vec![EventAnnotation { start_s: 0.0, end_s: 120.0, label: "pre_induction".into() }],
            120,
        );
        let table = extract_features(&rec, &WindowSpec::default()).unwrap();
        assert_eq!(table.len(), 2);
        let schema = &table.schema;
        for row in &table.rows {
            assert_eq!(row.values[schema.index_of("abp_mean").unwrap()], 80.0);
            assert_eq!(row.values[schema.index_of("spo2_mean").unwrap()], 98.0);
            // Flat zero ECG has no beats; heart features must be NaN.
            assert!(row.values[schema.index_of("sdnn").unwrap()].is_nan());
            assert!(row.values[schema.index_of("breathing_rate").unwrap()].is_nan());
            // Zero EEG still yields zero band powers, not NaN.
            assert_eq!(row.values[schema.index_of("alpha_F3_Cz").unwrap()], 0.0);
        }
    }

    #[test]
    fn row_count_bounded_by_span_over_stride() {
        let rec = record_with_events(
            vec![EventAnnotation { start_s: 0.0, end_s: 3000.0, label: "post_op_care".into() }],
            601,
        );
        let spec = WindowSpec { length_s: 60.0, stride_s: 30.0 };
        let windows = segment_and_label(&rec, &spec).unwrap();
        assert!(windows.len() as f64 <= (601.0f64 / 30.0).floor());
        for (start, _) in &windows {
            assert_eq!(start % 30.0, 0.0);
        }
    }
}
