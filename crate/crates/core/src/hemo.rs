//! Windowed means for the slow hemodynamic channels (ABP, NIRS, SpO2).

use crate::domain::SampleSeries;

/// Fraction of expected samples a window must contain to produce a value.
const MIN_COVERAGE: f64 = 0.5;

/// Mean of the samples inside `[start_s, start_s + duration_s)`, or `None`
/// when fewer than half the expected samples are present.
pub fn window_mean(series: &SampleSeries, start_s: f64, duration_s: f64) -> Option<f64> {
    if duration_s <= 0.0 {
        return None;
    }
    let samples = series.slice_time(start_s, start_s + duration_s);
    let expected = (duration_s * series.rate_hz).round().max(1.0);
    if (samples.len() as f64) < MIN_COVERAGE * expected {
        return None;
    }
    Some(samples.iter().sum::<f64>() / samples.len() as f64)
}
