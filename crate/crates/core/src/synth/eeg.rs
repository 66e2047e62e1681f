//! Synthetic EEG: per-channel sums of band-limited noise with prescribed
//! band powers.

use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::domain::{MultiChannelSeries, EEG_BANDS, EEG_CHANNELS};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Band powers in canonical order (delta, theta, alpha, beta, gamma), one
/// row per canonical channel.
pub type ChannelBandWeights = [f64; 5];

fn population_variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Zero-phase band limitation: keep only spectrum bins with frequency in
/// [low, high). A real mask leaves the phase untouched and confines the
/// component's energy to its band exactly, so prescribed powers cannot
/// bleed into neighbouring bands.
fn brickwall_band(
    x: &[f64],
    low_hz: f64,
    high_hz: f64,
    rate_hz: f64,
    fwd: &Arc<dyn Fft<f64>>,
    inv: &Arc<dyn Fft<f64>>,
) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    let df = rate_hz / n as f64;
    for (k, bin) in buf.iter_mut().enumerate() {
        let f = if k <= n / 2 { k as f64 } else { (n - k) as f64 } * df;
        if f < low_hz || f >= high_hz {
            *bin = Complex::new(0.0, 0.0);
        }
    }
    inv.process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Generates the six-channel montage. Each channel is a sum over bands of
/// band-limited Gaussian noise rescaled to the prescribed power, so
/// realized band-power ratios follow the weights by construction.
pub fn synth_eeg(
    weights: &[ChannelBandWeights],
    duration_s: f64,
    rate_hz: f64,
    seed: u64,
) -> Result<MultiChannelSeries> {
    if weights.len() != EEG_CHANNELS.len() {
        return Err(Error::param(
            "weights",
            format!("need {} channel weight rows, got {}", EEG_CHANNELS.len(), weights.len()),
        ));
    }
    let highest_edge = EEG_BANDS.iter().map(|b| b.2).fold(0.0, f64::max);
    if rate_hz < 2.0 * highest_edge {
        return Err(Error::param(
            "rate_hz",
            format!("{rate_hz} Hz aliases the {highest_edge} Hz band edge; need >= {}", 2.0 * highest_edge),
        ));
    }
    if duration_s <= 0.0 {
        return Err(Error::param("duration_s", format!("must be positive, got {duration_s}")));
    }
    if weights.iter().flatten().any(|&w| !(w >= 0.0)) {
        return Err(Error::param("weights", "band powers must be >= 0".to_string()));
    }

    let n = (duration_s * rate_hz).round() as usize;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = seeded_rng(seed, 0);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut channels: Vec<Vec<f64>> = Vec::with_capacity(EEG_CHANNELS.len());
    for channel_weights in weights {
        let mut channel = vec![0.0f64; n];
        for (band_idx, &power) in channel_weights.iter().enumerate() {
            if power == 0.0 {
                continue;
            }
            let (_, low, high) = EEG_BANDS[band_idx];
            let white: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            let mut shaped = brickwall_band(&white, low, high, rate_hz, &fwd, &inv);
            let var = population_variance(&shaped);
            if var > 0.0 {
                let k = (power / var).sqrt();
                for v in &mut shaped {
                    *v *= k;
                }
            }
            for (slot, v) in channel.iter_mut().zip(&shaped) {
                *slot += v;
            }
        }
        channels.push(channel);
    }

    Ok(MultiChannelSeries {
        rate_hz,
        start_s: 0.0,
        channel_names: EEG_CHANNELS.iter().map(|s| s.to_string()).collect(),
        channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SampleSeries;
    use crate::dsp::{band_power, welch_psd};

    fn measured_band_powers(channel: &[f64], rate: f64) -> [f64; 5] {
        let psd = welch_psd(&SampleSeries::new(rate, 0.0, channel.to_vec()), 512, 0.5).unwrap();
        let mut out = [0.0; 5];
        for (i, (_, lo, hi)) in EEG_BANDS.iter().enumerate() {
            out[i] = band_power(&psd, *lo, *hi).unwrap();
        }
        out
    }

    #[test]
    fn alpha_only_concentrates_in_alpha() {
        let weights = [[0.0, 0.0, 1.0, 0.0, 0.0]; 6];
        let eeg = synth_eeg(&weights, 60.0, 128.0, 21).unwrap();
        for ch in &eeg.channels {
            let p = measured_band_powers(ch, 128.0);
            let total: f64 = p.iter().sum();
            assert!(p[2] >= 0.90 * total, "alpha {} of {total}", p[2]);
        }
    }

    #[test]
    fn zero_weights_give_zero_channel() {
        let mut weights = [[1.0, 1.0, 1.0, 1.0, 1.0]; 6];
        weights[3] = [0.0; 5];
        let eeg = synth_eeg(&weights, 10.0, 128.0, 2).unwrap();
        assert!(eeg.channels[3].iter().all(|&v| v == 0.0));
        assert!(eeg.channels[0].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn per_channel_ratios_are_independent() {
        let mut weights = [[0.0; 5]; 6];
        weights[0] = [4.0, 0.0, 1.0, 0.0, 0.0];
        weights[1] = [0.0, 0.0, 1.0, 0.0, 4.0];
        let eeg = synth_eeg(&weights, 120.0, 128.0, 9).unwrap();
        let p0 = measured_band_powers(&eeg.channels[0], 128.0);
        let p1 = measured_band_powers(&eeg.channels[1], 128.0);
        assert!((p0[0] / p0[2] - 4.0).abs() < 0.4, "delta/alpha {}", p0[0] / p0[2]);
        assert!((p1[4] / p1[2] - 4.0).abs() < 0.4, "gamma/alpha {}", p1[4] / p1[2]);
        assert!(p0[4] < 0.05 * p0[0]);
        assert!(p1[0] < 0.05 * p1[4]);
    }

    #[test]
    fn realized_powers_track_weights_within_10_percent() {
        let weights = [[10.0, 6.0, 8.0, 3.0, 1.0]; 6];
        let eeg = synth_eeg(&weights, 90.0, 128.0, 33).unwrap();
        let p = measured_band_powers(&eeg.channels[0], 128.0);
        for (i, &w) in weights[0].iter().enumerate() {
            assert!((p[i] - w).abs() <= 0.10 * w, "band {i}: measured {} target {w}", p[i]);
        }
    }

    #[test]
    fn low_rate_is_an_aliasing_error() {
        let weights = [[1.0; 5]; 6];
        assert!(matches!(synth_eeg(&weights, 10.0, 80.0, 0), Err(Error::Param { .. })));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let weights = [[2.0, 1.0, 3.0, 0.5, 0.2]; 6];
        let a = synth_eeg(&weights, 20.0, 128.0, 8).unwrap();
        let b = synth_eeg(&weights, 20.0, 128.0, 8).unwrap();
        assert_eq!(a, b);
    }
}
