//! Welch power spectral density estimation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::domain::SampleSeries;
use crate::error::{Error, Result};

/// One-sided power spectral density on a uniform frequency grid from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub frequencies_hz: Vec<f64>,
    /// Density in (signal unit)^2 per Hz.
    pub power: Vec<f64>,
}

impl PsdEstimate {
    pub fn max_frequency(&self) -> f64 {
        *self.frequencies_hz.last().unwrap_or(&0.0)
    }

    /// Frequency of the largest density value; first bin wins ties.
    pub fn argmax_frequency(&self) -> f64 {
        let mut best = 0usize;
        for (i, &p) in self.power.iter().enumerate() {
            if p > self.power[best] {
                best = i;
            }
        }
        self.frequencies_hz.get(best).copied().unwrap_or(0.0)
    }

    /// Trapezoidal integral over the full grid; approximates the variance of
    /// the analyzed signal.
    pub fn total_power(&self) -> f64 {
        trapezoid(&self.frequencies_hz, &self.power, 0.0, self.max_frequency())
    }
}

/// Hann window in its periodic form, as used for spectral averaging.
fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Welch PSD with Hann segments, per-segment mean removal, and one-sided
/// density scaling, so that integrating the result over frequency recovers
/// the signal's variance up to estimator bias.
pub fn welch_psd(series: &SampleSeries, segment_len: usize, overlap: f64) -> Result<PsdEstimate> {
    welch_psd_padded(series, segment_len, overlap, segment_len)
}

/// Welch PSD with each windowed segment zero-padded to `nfft` points for a
/// finer frequency grid. `nfft >= segment_len`.
pub fn welch_psd_padded(
    series: &SampleSeries,
    segment_len: usize,
    overlap: f64,
    nfft: usize,
) -> Result<PsdEstimate> {
    if segment_len < 64 {
        return Err(Error::param("segment_len", format!("must be >= 64, got {segment_len}")));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::param("overlap", format!("must lie in [0, 1), got {overlap}")));
    }
    if nfft < segment_len {
        return Err(Error::param("nfft", format!("{nfft} is smaller than segment length {segment_len}")));
    }
    if series.len() < segment_len {
        return Err(Error::InsufficientData(format!(
            "series has {} samples, one segment needs {segment_len}",
            series.len()
        )));
    }

    let step = ((segment_len as f64) * (1.0 - overlap)).floor().max(1.0) as usize;
    let window = hann_periodic(segment_len);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let scale = 1.0 / (series.rate_hz * window_power);

    let n_bins = nfft / 2 + 1;
    let mut acc = vec![0.0f64; n_bins];
    let mut n_segments = 0usize;

    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];

    let mut start = 0usize;
    while start + segment_len <= series.len() {
        let seg = &series.values[start..start + segment_len];
        let mean = seg.iter().sum::<f64>() / segment_len as f64;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < segment_len {
                Complex::new((seg[i] - mean) * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (i, slot) in acc.iter_mut().enumerate() {
            *slot += buf[i].norm_sqr() * scale;
        }
        n_segments += 1;
        start += step;
    }

    let df = series.rate_hz / nfft as f64;
    let nyquist_bin = if nfft.is_multiple_of(2) { Some(n_bins - 1) } else { None };
    let power: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let one_sided = if i == 0 || Some(i) == nyquist_bin { 1.0 } else { 2.0 };
            one_sided * p / n_segments as f64
        })
        .collect();
    let frequencies_hz = (0..n_bins).map(|i| i as f64 * df).collect();
    Ok(PsdEstimate { frequencies_hz, power })
}

/// Trapezoidal integral of a piecewise-linear density over `[low, high]`,
/// interpolating the density at the interval edges.
fn trapezoid(freq: &[f64], power: &[f64], low: f64, high: f64) -> f64 {
    if freq.len() < 2 || high <= low {
        return 0.0;
    }
    let value_at = |f: f64| -> f64 {
        match freq.binary_search_by(|probe| probe.partial_cmp(&f).unwrap()) {
            Ok(i) => power[i],
            Err(i) => {
                let (i0, i1) = (i - 1, i);
                let t = (f - freq[i0]) / (freq[i1] - freq[i0]);
                power[i0] + t * (power[i1] - power[i0])
            }
        }
    };
    let mut nodes = vec![low];
    for &f in freq {
        if f > low && f < high {
            nodes.push(f);
        }
    }
    nodes.push(high);
    let mut area = 0.0;
    for pair in nodes.windows(2) {
        area += 0.5 * (value_at(pair[0]) + value_at(pair[1])) * (pair[1] - pair[0]);
    }
    area
}

/// Power in `[low_hz, high_hz]` by trapezoidal integration of the density.
pub fn band_power(psd: &PsdEstimate, low_hz: f64, high_hz: f64) -> Result<f64> {
    if !(low_hz < high_hz) {
        return Err(Error::param("band", format!("edges must satisfy low < high, got [{low_hz}, {high_hz}]")));
    }
    if low_hz < 0.0 || high_hz > psd.max_frequency() + 1e-12 {
        return Err(Error::param(
            "band",
            format!("[{low_hz}, {high_hz}] Hz exceeds the PSD range [0, {}] Hz", psd.max_frequency()),
        ));
    }
    Ok(trapezoid(&psd.frequencies_hz, &psd.power, low_hz, high_hz.min(psd.max_frequency())))
}
