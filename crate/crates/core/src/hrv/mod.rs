//! NN-interval statistics and ECG-derived breathing rate.

pub mod detect;

pub use detect::detect_r_peaks;

use crate::domain::SampleSeries;
use crate::dsp::welch_psd_padded;
use crate::error::{Error, Result};

/// Physiological NN bounds; intervals outside are dropped.
pub const NN_MIN_MS: f64 = 300.0;
pub const NN_MAX_MS: f64 = 2000.0;

/// Tachogram resampling rate for spectral breathing-rate estimation.
const TACHO_RATE_HZ: f64 = 4.0;
/// Respiration search band.
const RESP_BAND_HZ: (f64, f64) = (0.1, 0.5);

/// Cleaned NN intervals with their onset times.
#[derive(Debug, Clone, PartialEq)]
pub struct NnSeries {
    /// Interval lengths in milliseconds, all within [300, 2000].
    pub values_ms: Vec<f64>,
    /// Onset of each interval = time of its opening peak, seconds.
    pub onsets_s: Vec<f64>,
}

impl NnSeries {
    pub fn len(&self) -> usize {
        self.values_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_ms.is_empty()
    }

    /// Time between first and last onset.
    pub fn span_s(&self) -> f64 {
        match (self.onsets_s.first(), self.onsets_s.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Intervals whose onsets fall in `[t0, t1)`.
    pub fn slice_onsets(&self, t0: f64, t1: f64) -> NnSeries {
        let mut values_ms = Vec::new();
        let mut onsets_s = Vec::new();
        for (&v, &t) in self.values_ms.iter().zip(&self.onsets_s) {
            if t >= t0 && t < t1 {
                values_ms.push(v);
                onsets_s.push(t);
            }
        }
        NnSeries { values_ms, onsets_s }
    }
}

/// Successive peak-to-peak intervals, cleaned to [300, 2000] ms.
pub fn compute_nn_intervals(peak_times_s: &[f64]) -> Result<NnSeries> {
    if peak_times_s.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need >= 2 peaks for intervals, got {}",
            peak_times_s.len()
        )));
    }
    let mut values_ms = Vec::with_capacity(peak_times_s.len() - 1);
    let mut onsets_s = Vec::with_capacity(peak_times_s.len() - 1);
    for pair in peak_times_s.windows(2) {
        let ms = (pair[1] - pair[0]) * 1000.0;
        if (NN_MIN_MS..=NN_MAX_MS).contains(&ms) {
            values_ms.push(ms);
            onsets_s.push(pair[0]);
        }
    }
    Ok(NnSeries { values_ms, onsets_s })
}

/// The 12 NN-interval statistics. Breathing rate is estimated separately
/// from the tachogram spectrum and merged downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct HrvFeatures {
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
    /// True when sd2 = 0 forced sd1_sd2 to 0.
    pub degenerate_sd_ratio: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn population_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Time-domain and Poincaré statistics of a window-scoped NN series.
///
/// Population (divide-by-n) variance throughout. The pNN50/pNN20 denominator
/// is the total interval count n, not the n-1 difference count.
pub fn hrv_features(nn: &NnSeries) -> Result<HrvFeatures> {
    let x = &nn.values_ms;
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need >= 3 NN intervals for HRV statistics, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let d: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();

    let ibi_mean = mean(x);
    let sdnn = population_variance(x).sqrt();
    let var_d = population_variance(&d);
    let sdsd = var_d.sqrt();
    let rmssd = (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt();
    let pnn50 = d.iter().filter(|v| v.abs() > 50.0).count() as f64 / n;
    let pnn20 = d.iter().filter(|v| v.abs() > 20.0).count() as f64 / n;
    let med = median(x);
    let hr_mad = median(&x.iter().map(|v| (v - med).abs()).collect::<Vec<_>>());
    let sd1 = (var_d / 2.0).sqrt();
    let sd2 = (2.0 * sdnn * sdnn - var_d / 2.0).max(0.0).sqrt();
    let degenerate_sd_ratio = sd2 == 0.0;
    Ok(HrvFeatures {
        ibi_mean,
        bpm: 60_000.0 / ibi_mean,
        sdnn,
        sdsd,
        rmssd,
        pnn50,
        pnn20,
        hr_mad,
        sd1,
        sd2,
        s: std::f64::consts::PI * sd1 * sd2,
        sd1_sd2: if degenerate_sd_ratio { 0.0 } else { sd1 / sd2 },
        degenerate_sd_ratio,
    })
}

/// Breathing-rate estimate with a quality marker for flat spectra.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreathingRate {
    pub breaths_per_min: f64,
    /// Set when no clear respiratory peak stands out of the band.
    pub low_confidence: bool,
}

/// Breathing rate from the NN tachogram.
///
/// The interval-vs-onset curve is linearly resampled to 4 Hz, mean-removed,
/// and Welch-transformed on a zero-padded grid; the reported rate is 60x the
/// argmax frequency within 0.1..0.5 Hz.
pub fn breathing_rate(nn: &NnSeries) -> Result<BreathingRate> {
    if nn.len() < 10 || nn.span_s() < 30.0 {
        return Err(Error::InsufficientData(format!(
            "breathing rate needs >= 10 intervals over >= 30 s, got {} over {:.1} s",
            nn.len(),
            nn.span_s()
        )));
    }

    let t0 = nn.onsets_s[0];
    let span = nn.span_s();
    let n_samples = (span * TACHO_RATE_HZ).floor() as usize + 1;
    let mut resampled = Vec::with_capacity(n_samples);
    let mut cursor = 0usize;
    for i in 0..n_samples {
        let t = t0 + i as f64 / TACHO_RATE_HZ;
        while cursor + 1 < nn.len() && nn.onsets_s[cursor + 1] <= t {
            cursor += 1;
        }
        let v = if cursor + 1 == nn.len() {
            nn.values_ms[cursor]
        } else {
            let (ta, tb) = (nn.onsets_s[cursor], nn.onsets_s[cursor + 1]);
            let (va, vb) = (nn.values_ms[cursor], nn.values_ms[cursor + 1]);
            va + (vb - va) * ((t - ta) / (tb - ta))
        };
        resampled.push(v);
    }

    let m = mean(&resampled);
    for v in &mut resampled {
        *v -= m;
    }
    let variance = resampled.iter().map(|v| v * v).sum::<f64>() / resampled.len() as f64;

    let segment_len = resampled.len().min(128);
    let nfft = 1024usize.max(segment_len.next_power_of_two());
    let tacho = SampleSeries::new(TACHO_RATE_HZ, 0.0, resampled);
    let psd = welch_psd_padded(&tacho, segment_len, 0.5, nfft)?;

    let band: Vec<(f64, f64)> = psd
        .frequencies_hz
        .iter()
        .zip(&psd.power)
        .filter(|(&f, _)| f >= RESP_BAND_HZ.0 - 1e-12 && f <= RESP_BAND_HZ.1 + 1e-12)
        .map(|(&f, &p)| (f, p))
        .collect();
    let (mut best_f, mut best_p) = band[0];
    let mut band_sum = 0.0;
    for &(f, p) in &band {
        band_sum += p;
        if p > best_p {
            best_p = p;
            best_f = f;
        }
    }
    let band_mean = band_sum / band.len() as f64;
    let low_confidence = best_p <= 5.0 * band_mean || variance < 1e-9;
    Ok(BreathingRate { breaths_per_min: 60.0 * best_f, low_confidence })
}
