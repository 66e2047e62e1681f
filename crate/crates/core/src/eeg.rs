//! EEG band powers: 6 channels x 5 bands = 30 features per window.

use crate::domain::{MultiChannelSeries, SampleSeries, EEG_BANDS, EEG_CHANNELS};
use crate::dsp::{band_power, welch_psd, PsdEstimate};
use crate::error::{Error, Result};

/// Welch segment length used for EEG windows, in seconds.
const SEGMENT_S: f64 = 4.0;
const OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct BandDefinition {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

/// The five textbook bands: delta 0.5-4, theta 4-8, alpha 8-13, beta 13-30,
/// gamma 30-45 Hz.
pub fn canonical_bands() -> Vec<BandDefinition> {
    EEG_BANDS
        .iter()
        .map(|&(name, low_hz, high_hz)| BandDefinition { name: name.to_string(), low_hz, high_hz })
        .collect()
}

/// Absolute power per band, trapezoidal integral of the density.
pub fn band_powers(psd: &PsdEstimate, bands: &[BandDefinition]) -> Result<Vec<f64>> {
    bands.iter().map(|b| band_power(psd, b.low_hz, b.high_hz)).collect()
}

/// PSD of one EEG channel with the module defaults (4 s Hann segments, 50%
/// overlap, nfft = segment length).
pub fn channel_psd(channel: &SampleSeries) -> Result<PsdEstimate> {
    let segment_len = (SEGMENT_S * channel.rate_hz).round() as usize;
    welch_psd(channel, segment_len, OVERLAP)
}

/// The 30 band-power features of one EEG window, band-major over the
/// canonical montage (delta_F3_Cz, delta_F4_Cz, ..., gamma_P4_Cz).
///
/// Channels are matched by name, so input channel order does not matter.
pub fn eeg_window_features(window: &MultiChannelSeries) -> Result<Vec<f64>> {
    if window.channel_names.len() != EEG_CHANNELS.len() {
        return Err(Error::Schema(format!(
            "expected {} EEG channels, got {}",
            EEG_CHANNELS.len(),
            window.channel_names.len()
        )));
    }
    let bands = canonical_bands();
    if let Some(b) = bands.iter().find(|b| b.high_hz > window.rate_hz / 2.0) {
        return Err(Error::param(
            "rate_hz",
            format!("band {} reaches {} Hz, above Nyquist {}", b.name, b.high_hz, window.rate_hz / 2.0),
        ));
    }

    let mut per_channel = Vec::with_capacity(EEG_CHANNELS.len());
    for name in EEG_CHANNELS {
        let data = window
            .channel(name)
            .ok_or_else(|| Error::Schema(format!("missing EEG channel {name}")))?;
        let series = SampleSeries::new(window.rate_hz, window.start_s, data.to_vec());
        per_channel.push(band_powers(&channel_psd(&series)?, &bands)?);
    }

    let mut out = Vec::with_capacity(bands.len() * EEG_CHANNELS.len());
    for band_idx in 0..bands.len() {
        for powers in &per_channel {
            out.push(powers[band_idx]);
        }
    }
    Ok(out)
}
