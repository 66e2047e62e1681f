//! IIR biquad sections and zero-phase filtering.

use crate::error::{Error, Result};

/// Second-order IIR section, normalized so a0 = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Runs the section once over `x` (transposed direct form II), starting
    /// from the given state. Mutates the state so cascades can stream.
    fn run(&self, x: &[f64], state: &mut [f64; 2]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        let (mut z1, mut z2) = (state[0], state[1]);
        for &xi in x {
            let y = self.b0 * xi + z1;
            z1 = self.b1 * xi - self.a1 * y + z2;
            z2 = self.b2 * xi - self.a2 * y;
            out.push(y);
        }
        *state = [z1, z2];
        out
    }

    /// Steady-state filter state for a unit step input. Scaled by the first
    /// sample when used, it suppresses the start-up transient.
    fn step_state(&self) -> [f64; 2] {
        let gain = (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2);
        let z2 = self.b2 - self.a2 * gain;
        let z1 = self.b1 - self.a1 * gain + z2;
        [z1, z2]
    }
}

fn check_cutoff(field: &str, cutoff_hz: f64, rate_hz: f64) -> Result<()> {
    if !(cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0) {
        return Err(Error::param(
            field,
            format!("cutoff {cutoff_hz} Hz must lie in (0, {}) Hz", rate_hz / 2.0),
        ));
    }
    Ok(())
}

/// Butterworth Q for a single second-order section.
const BUTTER_Q: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Second-order Butterworth low-pass section (Q = 1/sqrt(2)).
pub fn butter_lowpass(cutoff_hz: f64, rate_hz: f64) -> Result<Biquad> {
    check_cutoff("cutoff_hz", cutoff_hz, rate_hz)?;
    let w0 = std::f64::consts::PI * 2.0 * cutoff_hz / rate_hz;
    let alpha = w0.sin() / (2.0 * BUTTER_Q);
    let (cw, a0) = (w0.cos(), 1.0 + alpha);
    Ok(Biquad {
        b0: (1.0 - cw) / 2.0 / a0,
        b1: (1.0 - cw) / a0,
        b2: (1.0 - cw) / 2.0 / a0,
        a1: -2.0 * cw / a0,
        a2: (1.0 - alpha) / a0,
    })
}

/// Second-order Butterworth high-pass section (Q = 1/sqrt(2)).
pub fn butter_highpass(cutoff_hz: f64, rate_hz: f64) -> Result<Biquad> {
    check_cutoff("cutoff_hz", cutoff_hz, rate_hz)?;
    let w0 = std::f64::consts::PI * 2.0 * cutoff_hz / rate_hz;
    let alpha = w0.sin() / (2.0 * BUTTER_Q);
    let (cw, a0) = (w0.cos(), 1.0 + alpha);
    Ok(Biquad {
        b0: (1.0 + cw) / 2.0 / a0,
        b1: -(1.0 + cw) / a0,
        b2: (1.0 + cw) / 2.0 / a0,
        a1: -2.0 * cw / a0,
        a2: (1.0 - alpha) / a0,
    })
}

/// High-pass plus low-pass cascade passing `[low_hz, high_hz]`.
pub fn butter_bandpass(low_hz: f64, high_hz: f64, rate_hz: f64) -> Result<Vec<Biquad>> {
    if !(low_hz < high_hz) {
        return Err(Error::param(
            "low_hz",
            format!("band edges must satisfy low < high, got [{low_hz}, {high_hz}]"),
        ));
    }
    Ok(vec![butter_highpass(low_hz, rate_hz)?, butter_lowpass(high_hz, rate_hz)?])
}

/// Zero-phase filtering: forward pass, then backward pass over the result.
///
/// The input is extended at both ends by odd reflection (rotating the signal
/// 180 degrees around its end points) before filtering, and each pass starts
/// from the section's step-response steady state scaled to the first extended
/// sample, so edge transients stay out of the returned span.
pub fn filtfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    if x.is_empty() || sections.is_empty() {
        return x.to_vec();
    }
    let pad = (9 * sections.len()).min(x.len() - 1);
    let n = x.len();

    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in (n - 1 - pad..n - 1).rev() {
        ext.push(2.0 * x[n - 1] - x[i]);
    }

    let mut y = ext;
    for pass in 0..2 {
        for section in sections {
            let zi = section.step_state();
            let mut state = [zi[0] * y[0], zi[1] * y[0]];
            y = section.run(&y, &mut state);
        }
        if pass == 0 {
            y.reverse();
        }
    }
    y.reverse();
    y[pad..pad + n].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn lowpass_attenuates_above_cutoff() {
        let lp = butter_lowpass(5.0, 128.0).unwrap();
        let pass = filtfilt(&[lp], &sine(1.0, 128.0, 1280));
        let stop = filtfilt(&[lp], &sine(30.0, 128.0, 1280));
        assert!(rms(&pass) > 0.9 * std::f64::consts::FRAC_1_SQRT_2);
        assert!(rms(&stop) < 0.05);
    }

    #[test]
    fn highpass_attenuates_below_cutoff() {
        let hp = butter_highpass(5.0, 128.0).unwrap();
        let stop = filtfilt(&[hp], &sine(0.2, 128.0, 1280));
        let pass = filtfilt(&[hp], &sine(30.0, 128.0, 1280));
        assert!(rms(&stop) < 0.05);
        assert!(rms(&pass) > 0.9 * std::f64::consts::FRAC_1_SQRT_2);
    }

    #[test]
    fn bandpass_passes_midband() {
        let bp = butter_bandpass(5.0, 15.0, 200.0).unwrap();
        let mid = filtfilt(&bp, &sine(10.0, 200.0, 2000));
        let low = filtfilt(&bp, &sine(0.5, 200.0, 2000));
        let high = filtfilt(&bp, &sine(60.0, 200.0, 2000));
        assert!(rms(&mid) > 0.55);
        assert!(rms(&low) < 0.05);
        assert!(rms(&high) < 0.05);
    }

    #[test]
    fn filtfilt_is_zero_phase() {
        // Cross-correlate input and output; the peak must sit at lag 0.
        let lp = butter_lowpass(8.0, 128.0).unwrap();
        let x = sine(4.0, 128.0, 1024);
        let y = filtfilt(&[lp], &x);
        let corr = |lag: i64| -> f64 {
            let mut s = 0.0;
            for i in 0..x.len() as i64 {
                let j = i + lag;
                if j >= 0 && (j as usize) < y.len() {
                    s += x[i as usize] * y[j as usize];
                }
            }
            s
        };
        let at_zero = corr(0);
        for lag in [-5i64, -2, 2, 5] {
            assert!(at_zero > corr(lag));
        }
    }

    #[test]
    fn rejects_cutoff_at_nyquist() {
        assert!(butter_lowpass(64.0, 128.0).is_err());
        assert!(butter_highpass(0.0, 128.0).is_err());
        assert!(butter_bandpass(15.0, 5.0, 128.0).is_err());
    }
}
