//! R-peak detection on single-lead ECG.
//!
//! Pan-Tompkins style chain: 5..15 Hz zero-phase band-pass, derivative,
//! squaring, 150 ms moving-window integration, then an adaptive two-level
//! threshold with a 200 ms refractory period and a missed-beat search-back.
//! Accepted candidates are snapped to the raw-signal maximum within 50 ms.

use crate::domain::SampleSeries;
use crate::dsp::{butter_bandpass, filtfilt};
use crate::error::{Error, Result};

/// Refractory period between accepted beats.
const REFRACTORY_S: f64 = 0.2;
/// Integration window of the energy envelope.
const INTEGRATION_S: f64 = 0.15;
/// Sweep radius when snapping a candidate to the raw maximum.
const REFINE_S: f64 = 0.05;

/// Detects R-peak times (seconds, strictly increasing).
pub fn detect_r_peaks(ecg: &SampleSeries) -> Result<Vec<f64>> {
    if ecg.rate_hz < 100.0 {
        return Err(Error::param(
            "rate_hz",
            format!("detector needs >= 100 Hz, got {}", ecg.rate_hz),
        ));
    }
    if ecg.duration_s() < 10.0 {
        return Err(Error::InsufficientData(format!(
            "detector needs >= 10 s of ECG, got {:.2} s",
            ecg.duration_s()
        )));
    }

    let rate = ecg.rate_hz;
    let band = butter_bandpass(5.0, 15.0, rate)?;
    let filtered = filtfilt(&band, &ecg.values);

    // Central-difference derivative keeps the envelope aligned with the QRS.
    let n = filtered.len();
    let mut energy = vec![0.0f64; n];
    for i in 1..n - 1 {
        let d = (filtered[i + 1] - filtered[i - 1]) * rate / 2.0;
        energy[i] = d * d;
    }

    let integrated = centered_mean(&energy, (INTEGRATION_S * rate).round().max(1.0) as usize);

    let candidates = dominant_maxima(&integrated, (REFRACTORY_S * rate).round() as usize);
    if candidates.is_empty() {
        return Ok(Vec::new());
    }

    let accepted = threshold_candidates(&integrated, &candidates, rate);

    // Snap to the raw maximum, then drop refined peaks that collapsed into
    // the refractory span of a taller neighbor.
    let refine_radius = (REFINE_S * rate).round() as usize;
    let mut refined: Vec<usize> = accepted
        .iter()
        .map(|&idx| {
            let lo = idx.saturating_sub(refine_radius);
            let hi = (idx + refine_radius + 1).min(ecg.values.len());
            (lo..hi)
                .max_by(|&a, &b| ecg.values[a].partial_cmp(&ecg.values[b]).unwrap())
                .unwrap()
        })
        .collect();
    refined.dedup();

    let min_gap = (REFRACTORY_S * rate).round() as usize;
    let mut kept: Vec<usize> = Vec::with_capacity(refined.len());
    for idx in refined {
        match kept.last() {
            Some(&prev) if idx - prev < min_gap => {
                if ecg.values[idx] > ecg.values[prev] {
                    *kept.last_mut().unwrap() = idx;
                }
            }
            _ => kept.push(idx),
        }
    }

    Ok(kept.into_iter().map(|i| ecg.time_at(i)).collect())
}

/// Mean over a centered window of `width` samples (clamped at the edges).
fn centered_mean(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut prefix = vec![0.0f64; x.len() + 1];
    for (i, &v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Local maxima that also dominate every other local maximum within
/// `min_gap` samples, so envelope ripples inside one QRS collapse to the
/// burst's tallest point. Ties go to the earlier index.
fn dominant_maxima(x: &[f64], min_gap: usize) -> Vec<usize> {
    let mut maxima = Vec::new();
    for i in 1..x.len().saturating_sub(1) {
        if x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] > 0.0 {
            maxima.push(i);
        }
    }
    let dominated = |i: usize, j: usize| -> bool {
        x[maxima[j]] > x[maxima[i]] || (x[maxima[j]] == x[maxima[i]] && maxima[j] < maxima[i])
    };
    let mut out = Vec::with_capacity(maxima.len());
    'outer: for i in 0..maxima.len() {
        for j in (0..i).rev() {
            if maxima[i] - maxima[j] >= min_gap {
                break;
            }
            if dominated(i, j) {
                continue 'outer;
            }
        }
        for j in i + 1..maxima.len() {
            if maxima[j] - maxima[i] >= min_gap {
                break;
            }
            if dominated(i, j) {
                continue 'outer;
            }
        }
        out.push(maxima[i]);
    }
    out
}

/// Adaptive signal/noise threshold over envelope candidates, with the
/// classic 1.66 * mean-RR search-back for missed beats.
fn threshold_candidates(integrated: &[f64], candidates: &[usize], rate: f64) -> Vec<usize> {
    let warmup = ((2.0 * rate) as usize).min(integrated.len());
    let mut spki = integrated[..warmup].iter().cloned().fold(f64::MIN, f64::max).max(0.0);
    let mut npki = integrated[..warmup].iter().sum::<f64>() / warmup as f64;
    let mut threshold = npki + 0.25 * (spki - npki);

    let refractory = (REFRACTORY_S * rate).round() as usize;
    let mut accepted: Vec<usize> = Vec::new();
    let mut rejected: Vec<usize> = Vec::new();
    let mut recent_rr: Vec<f64> = Vec::new();

    for &idx in candidates {
        let value = integrated[idx];
        let last = accepted.last().copied();

        if last.is_none_or(|p| idx - p >= refractory) && value > threshold {
            if let Some(p) = last {
                recent_rr.push((idx - p) as f64 / rate);
                if recent_rr.len() > 8 {
                    recent_rr.remove(0);
                }
            }
            accepted.push(idx);
            spki = 0.125 * value + 0.875 * spki;
        } else if last.is_none_or(|p| idx - p >= refractory) {
            rejected.push(idx);
            npki = 0.125 * value + 0.875 * npki;

            // Search-back: a gap much longer than the running RR mean means
            // a beat slipped under the threshold; take the tallest rejected
            // candidate in the gap if it clears half the threshold.
            if let (Some(p), false) = (last, recent_rr.is_empty()) {
                let rr_mean = recent_rr.iter().sum::<f64>() / recent_rr.len() as f64;
                if (idx - p) as f64 / rate > 1.66 * rr_mean {
                    let found = rejected
                        .iter()
                        .filter(|&&r| r > p + refractory && r + refractory <= idx)
                        .filter(|&&r| integrated[r] > 0.5 * threshold)
                        .max_by(|&&a, &&b| integrated[a].partial_cmp(&integrated[b]).unwrap())
                        .copied();
                    if let Some(r) = found {
                        recent_rr.push((r - p) as f64 / rate);
                        if recent_rr.len() > 8 {
                            recent_rr.remove(0);
                        }
                        accepted.push(r);
                        spki = 0.25 * integrated[r] + 0.75 * spki;
                    }
                }
            }
        }
        threshold = npki + 0.25 * (spki - npki);
    }
    accepted.sort_unstable();
    accepted
}
