//! Signal-processing primitives shared by the detector, the EEG features,
//! and the synthesizer.

pub mod filter;
pub mod spectral;

pub use filter::{butter_bandpass, butter_highpass, butter_lowpass, filtfilt, Biquad};
pub use spectral::{band_power, welch_psd, welch_psd_padded, PsdEstimate};
