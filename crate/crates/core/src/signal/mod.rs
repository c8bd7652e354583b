//! Waveform synthesis, companding, and measurement.

mod mulaw;
mod spectrum;
mod synth;
mod wav;

pub use mulaw::{mulaw_decode, mulaw_decode_code, mulaw_encode, mulaw_encode_sample, MULAW_MID_CODE};
pub use spectrum::{estimate_snr, periodogram, psd_peak_hz, Psd, SnrEstimate, DEFAULT_PEAK_FLOOR_HZ, SNR_CAP_DB};
pub use synth::{add_noise_snr, synth_sinusoid};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 22_050;

/// Continuous waveform at a sampling rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioClip { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// 8-bit mu-law code sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedClip {
    pub codes: Vec<u8>,
    pub sample_rate: u32,
}

/// Root-mean-square error between natural logarithms of two F0 lists.
pub fn log_f0_rmse(true_f0: &[f64], measured_f0: &[f64]) -> Result<f64> {
    if true_f0.len() != measured_f0.len() {
        return Err(Error::data(format!(
            "log_f0_rmse: {} true values vs {} measured",
            true_f0.len(),
            measured_f0.len()
        )));
    }
    if true_f0.is_empty() {
        return Err(Error::data("log_f0_rmse: empty input"));
    }
    if let Some(bad) = true_f0.iter().chain(measured_f0).find(|f| !(**f > 0.0)) {
        return Err(Error::data(format!("log_f0_rmse: non-positive frequency {bad}")));
    }
    let mse = true_f0
        .iter()
        .zip(measured_f0)
        .map(|(a, b)| (a.ln() - b.ln()).powi(2))
        .sum::<f64>()
        / true_f0.len() as f64;
    Ok(mse.sqrt())
}
