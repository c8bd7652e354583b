use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::AudioClip;
use crate::error::{Error, Result};

/// `amplitude * sin(2 pi f0 t / fs + phase)` for `round(seconds * fs)` samples.
pub fn synth_sinusoid(f0: f64, seconds: f64, sample_rate: u32, phase: f64, amplitude: f64) -> Result<AudioClip> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(f0 > 0.0 && f0 < nyquist) {
        return Err(Error::config(format!(
            "sinusoid frequency {f0} Hz must lie in (0, {nyquist}) Hz"
        )));
    }
    if !(amplitude > 0.0 && amplitude <= 1.0) {
        return Err(Error::config(format!("amplitude {amplitude} outside (0, 1]")));
    }
    if !(seconds >= 0.0) {
        return Err(Error::config(format!("negative duration {seconds}")));
    }
    let n = (seconds * sample_rate as f64).round() as usize;
    let step = TAU * f0 / sample_rate as f64;
    let samples = (0..n).map(|t| amplitude * (step * t as f64 + phase).sin()).collect();
    Ok(AudioClip::new(samples, sample_rate))
}

/// Adds white Gaussian noise so that the signal-to-noise power ratio is
/// exactly `target_snr_db`, then scales down if the peak exceeds 1.
///
/// `f64::INFINITY` returns the clip unchanged.
pub fn add_noise_snr(clip: &AudioClip, target_snr_db: f64, rng_seed: u64) -> Result<AudioClip> {
    if target_snr_db == f64::INFINITY {
        return Ok(clip.clone());
    }
    if target_snr_db.is_nan() {
        return Err(Error::config("target SNR is NaN"));
    }
    let signal_power = clip.power();
    if signal_power == 0.0 {
        return Err(Error::data("cannot set an SNR on a silent clip"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise: Vec<f64> = (0..clip.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noise_power = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    let target_noise_power = signal_power / 10f64.powf(target_snr_db / 10.0);
    let gain = (target_noise_power / noise_power).sqrt();
    let mut samples: Vec<f64> = clip.samples.iter().zip(&noise).map(|(s, n)| s + gain * n).collect();
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 1.0 {
        samples.iter_mut().for_each(|s| *s /= peak);
    }
    Ok(AudioClip::new(samples, clip.sample_rate))
}
