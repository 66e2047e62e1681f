//! Synthetic single-lead ECG with known beat times.
//!
//! Beats are Mexican-hat pulses placed on an IBI sequence made of a base
//! interval, a sinusoidal respiratory modulation, and Gaussian jitter sized
//! so the sequence's population SDNN lands exactly on the requested target.
//! Beat centers snap to the sample grid, so the returned ground truth is
//! bit-aligned with the waveform.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::SampleSeries;
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EcgSynthParams {
    pub base_hr_bpm: f64,
    /// Target population SDNN of the emitted IBI sequence, ms.
    pub hrv_sdnn_ms: f64,
    /// Respiratory IBI modulation frequency, Hz.
    pub resp_freq_hz: f64,
    /// Peak amplitude of the respiratory IBI modulation, ms.
    pub resp_depth_ms: f64,
    /// Signal-to-noise ratio of the additive white noise, dB. Infinite
    /// means a noiseless record.
    pub noise_snr_db: f64,
    pub qrs_width_ms: f64,
}

impl Default for EcgSynthParams {
    fn default() -> Self {
        EcgSynthParams {
            base_hr_bpm: 70.0,
            hrv_sdnn_ms: 40.0,
            resp_freq_hz: 0.25,
            resp_depth_ms: 30.0,
            noise_snr_db: 20.0,
            qrs_width_ms: 100.0,
        }
    }
}

impl EcgSynthParams {
    pub fn validate(&self) -> Result<()> {
        if !(30.0..=200.0).contains(&self.base_hr_bpm) {
            return Err(Error::param("base_hr_bpm", format!("must be in [30, 200], got {}", self.base_hr_bpm)));
        }
        if !(0.05..=1.0).contains(&self.resp_freq_hz) {
            return Err(Error::param("resp_freq_hz", format!("must be in [0.05, 1.0], got {}", self.resp_freq_hz)));
        }
        if !(self.hrv_sdnn_ms >= 0.0) {
            return Err(Error::param("hrv_sdnn_ms", format!("must be >= 0, got {}", self.hrv_sdnn_ms)));
        }
        if !(self.resp_depth_ms >= 0.0) {
            return Err(Error::param("resp_depth_ms", format!("must be >= 0, got {}", self.resp_depth_ms)));
        }
        if !(self.qrs_width_ms > 0.0 && self.qrs_width_ms <= 300.0) {
            return Err(Error::param("qrs_width_ms", format!("must be in (0, 300], got {}", self.qrs_width_ms)));
        }
        if self.noise_snr_db.is_nan() {
            return Err(Error::param("noise_snr_db", "must not be NaN".to_string()));
        }
        Ok(())
    }
}

fn population_std(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Mexican-hat pulse with zeros at one sigma.
fn ricker(u: f64) -> f64 {
    (1.0 - u * u) * (-0.5 * u * u).exp()
}

/// Generates the ECG and its ground-truth peak times (strictly increasing,
/// snapped to the sample grid).
pub fn synth_ecg(
    params: &EcgSynthParams,
    duration_s: f64,
    rate_hz: f64,
    seed: u64,
) -> Result<(SampleSeries, Vec<f64>)> {
    params.validate()?;
    if duration_s < 10.0 {
        return Err(Error::param("duration_s", format!("must be >= 10, got {duration_s}")));
    }
    if rate_hz < 100.0 {
        return Err(Error::param("rate_hz", format!("must be >= 100, got {rate_hz}")));
    }

    let mut rng = seeded_rng(seed, 0);
    let base_ibi_s = 60.0 / params.base_hr_bpm;
    let sigma_s = params.qrs_width_ms / 2.0 / 1000.0;
    let margin_s = 4.0 * sigma_s;

    // Prescribed IBI deviations: respiratory sinusoid plus jitter topping
    // the variance up to the SDNN target.
    let sdnn_s = params.hrv_sdnn_ms / 1000.0;
    let mut depth_s = params.resp_depth_ms / 1000.0;
    if depth_s / std::f64::consts::SQRT_2 > sdnn_s {
        depth_s = sdnn_s * std::f64::consts::SQRT_2;
    }
    let jitter_sd_s = (sdnn_s * sdnn_s - depth_s * depth_s / 2.0).max(0.0).sqrt();
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");

    let mut deviations: Vec<f64> = Vec::new();
    {
        let mut t = margin_s;
        while t + base_ibi_s <= duration_s - margin_s {
            let dev = if sdnn_s == 0.0 {
                0.0
            } else {
                depth_s * (2.0 * std::f64::consts::PI * params.resp_freq_hz * t).sin()
                    + jitter_sd_s * jitter.sample(&mut rng)
            };
            deviations.push(dev);
            t += base_ibi_s + dev;
        }
    }

    // Exact-SDNN rescale of the deviations around their mean.
    if sdnn_s > 0.0 && deviations.len() >= 2 {
        let sd = population_std(&deviations);
        if sd > 0.0 {
            let mean = deviations.iter().sum::<f64>() / deviations.len() as f64;
            for d in &mut deviations {
                *d = mean + (*d - mean) * (sdnn_s / sd);
            }
        }
    }

    // Rebuild beat times and snap them onto the grid.
    let mut peaks_s: Vec<f64> = Vec::with_capacity(deviations.len() + 1);
    let mut t = margin_s;
    peaks_s.push((t * rate_hz).round() / rate_hz);
    for dev in &deviations {
        t += base_ibi_s + dev;
        if t > duration_s - margin_s {
            break;
        }
        peaks_s.push((t * rate_hz).round() / rate_hz);
    }
    peaks_s.dedup();

    let n = (duration_s * rate_hz).round() as usize;
    let mut values = vec![0.0f64; n];
    let reach = (margin_s * rate_hz).ceil() as usize;
    for &c in &peaks_s {
        let center_idx = (c * rate_hz).round() as usize;
        let lo = center_idx.saturating_sub(reach);
        let hi = (center_idx + reach + 1).min(n);
        for (i, slot) in values.iter_mut().enumerate().take(hi).skip(lo) {
            *slot += ricker((i as f64 / rate_hz - c) / sigma_s);
        }
    }

    if params.noise_snr_db.is_finite() {
        let mean = values.iter().sum::<f64>() / n as f64;
        let clean_var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        if clean_var > 0.0 {
            let target_var = clean_var / 10f64.powf(params.noise_snr_db / 10.0);
            let raw: Vec<f64> = (0..n).map(|_| jitter.sample(&mut rng)).collect();
            let raw_sd = population_std(&raw);
            let raw_mean = raw.iter().sum::<f64>() / n as f64;
            let k = target_var.sqrt() / raw_sd;
            for (v, e) in values.iter_mut().zip(&raw) {
                *v += (e - raw_mean) * k;
            }
        }
    }

    // Consume nothing else from rng; keep the stream layout stable.
    let _ = rng.gen::<u8>();

    Ok((SampleSeries::new(rate_hz, 0.0, values), peaks_s))
}
