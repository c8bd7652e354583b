//! Periodogram, spectral peak picking, and single-tone SNR estimation.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::AudioClip;
use crate::error::{Error, Result};

/// Peaks below this frequency are ignored by default (DC leakage).
pub const DEFAULT_PEAK_FLOOR_HZ: f64 = 5.0;

/// SNR estimates are clamped to `[-SNR_CAP_DB, SNR_CAP_DB]`.
pub const SNR_CAP_DB: f64 = 60.0;

/// One-sided power spectral density on the bin grid `k * fs / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Psd {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
    /// Frame length the DFT was taken over.
    pub n: usize,
    pub sample_rate: u32,
}

impl Psd {
    pub fn bin_width_hz(&self) -> f64 {
        self.sample_rate as f64 / self.n as f64
    }
}

fn hann(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos())
}

/// Hann-windowed single-frame periodogram.
///
/// Normalized so that the sum of all bins equals the energy of the windowed
/// signal.
pub fn periodogram(clip: &AudioClip) -> Result<Psd> {
    let n = clip.len();
    if n < 2 {
        return Err(Error::data(format!("periodogram needs at least 2 samples, got {n}")));
    }
    let mut buf: Vec<Complex<f64>> = clip
        .samples
        .iter()
        .zip(hann(n))
        .map(|(&x, w)| Complex::new(x * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let bins = n / 2 + 1;
    let scale = 1.0 / n as f64;
    let power = (0..bins)
        .map(|k| {
            let p = buf[k].norm_sqr() * scale;
            let mirrored = k != 0 && !(n % 2 == 0 && k == n / 2);
            if mirrored {
                2.0 * p
            } else {
                p
            }
        })
        .collect();
    let fs = clip.sample_rate as f64;
    Ok(Psd {
        freqs_hz: (0..bins).map(|k| k as f64 * fs / n as f64).collect(),
        power,
        n,
        sample_rate: clip.sample_rate,
    })
}

/// Frequency of the strongest bin at or above `search_floor_hz`, refined by
/// a parabola through the log powers of the bin and its neighbours.
pub fn psd_peak_hz(psd: &Psd, search_floor_hz: f64) -> Result<f64> {
    if psd.power.is_empty() {
        return Err(Error::Measurement("empty spectrum".into()));
    }
    let start = psd.freqs_hz.partition_point(|&f| f < search_floor_hz);
    let (k, peak) = psd.power[start..]
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
    let k = k + start;
    if !(peak > 0.0) {
        return Err(Error::Measurement(format!(
            "no spectral peak at or above {search_floor_hz} Hz"
        )));
    }
    let mut offset = 0.0;
    if k > 0 && k + 1 < psd.power.len() {
        let (a, b, c) = (psd.power[k - 1], peak, psd.power[k + 1]);
        if a > 0.0 && c > 0.0 {
            let (la, lb, lc) = (a.ln(), b.ln(), c.ln());
            let denom = la - 2.0 * lb + lc;
            if denom < 0.0 {
                offset = (0.5 * (la - lc) / denom).clamp(-0.5, 0.5);
            }
        }
    }
    Ok((k as f64 + offset) * psd.bin_width_hz())
}

/// Result of fitting a single sinusoid to a clip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrEstimate {
    pub snr_db: f64,
    /// Frequency the sinusoid was fitted at.
    pub tone_hz: f64,
    /// False when no tone could be found; `snr_db` is then the floor.
    pub tone_detected: bool,
}

struct ToneFit {
    fit_power: f64,
    residual_power: f64,
}

/// Least-squares fit of `a cos(wt) + b sin(wt)`.
fn fit_tone(samples: &[f64], freq_hz: f64, sample_rate: u32) -> ToneFit {
    let w = TAU * freq_hz / sample_rate as f64;
    let (mut cc, mut ss, mut cs, mut xc, mut xs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, &x) in samples.iter().enumerate() {
        let (s, c) = (w * t as f64).sin_cos();
        cc += c * c;
        ss += s * s;
        cs += c * s;
        xc += x * c;
        xs += x * s;
    }
    let det = cc * ss - cs * cs;
    let (a, b) = if det.abs() > 1e-12 * cc.max(ss).max(1.0) {
        ((xc * ss - xs * cs) / det, (xs * cc - xc * cs) / det)
    } else if cc > 0.0 {
        (xc / cc, 0.0)
    } else {
        (0.0, 0.0)
    };
    let (mut fit_e, mut res_e) = (0.0, 0.0);
    for (t, &x) in samples.iter().enumerate() {
        let (s, c) = (w * t as f64).sin_cos();
        let f = a * c + b * s;
        fit_e += f * f;
        res_e += (x - f) * (x - f);
    }
    let n = samples.len() as f64;
    ToneFit {
        fit_power: fit_e / n,
        residual_power: res_e / n,
    }
}

/// Golden-section search for the frequency maximizing the fitted power.
fn refine_frequency(samples: &[f64], sample_rate: u32, lo: f64, hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let power = |f: f64| fit_tone(samples, f, sample_rate).fit_power;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (power(c), power(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = power(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = power(d);
        }
        if b - a < 1e-9 {
            break;
        }
    }
    (a + b) / 2.0
}

fn to_db(fit: &ToneFit) -> f64 {
    if fit.residual_power == 0.0 {
        return if fit.fit_power > 0.0 { SNR_CAP_DB } else { -SNR_CAP_DB };
    }
    if fit.fit_power == 0.0 {
        return -SNR_CAP_DB;
    }
    (10.0 * (fit.fit_power / fit.residual_power).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB)
}

/// SNR of a single-tone clip: power of the best-fitting sinusoid over the
/// power of what is left.
///
/// Without a hint the tone is located at the spectral peak and its frequency
/// polished to sub-bin precision; with a hint the fit uses the hint exactly.
pub fn estimate_snr(clip: &AudioClip, f0_hint: Option<f64>) -> Result<SnrEstimate> {
    let fs = clip.sample_rate as f64;
    let floor = SnrEstimate {
        snr_db: -SNR_CAP_DB,
        tone_hz: f64::NAN,
        tone_detected: false,
    };
    let tone_hz = match f0_hint {
        Some(f) => {
            if !(f > 0.0 && f < fs / 2.0) {
                return Err(Error::data(format!("tone hint {f} Hz outside (0, {}) Hz", fs / 2.0)));
            }
            f
        }
        None => {
            let psd = periodogram(clip)?;
            let coarse = match psd_peak_hz(&psd, DEFAULT_PEAK_FLOOR_HZ) {
                Ok(f) => f,
                Err(_) => return Ok(floor),
            };
            let bin = psd.bin_width_hz();
            refine_frequency(&clip.samples, clip.sample_rate, (coarse - bin).max(bin * 0.5), coarse + bin)
        }
    };
    if (clip.len() as f64) < fs / tone_hz {
        return Err(Error::Measurement(format!(
            "clip of {} samples is shorter than one period of {tone_hz:.3} Hz",
            clip.len()
        )));
    }
    let fit = fit_tone(&clip.samples, tone_hz, clip.sample_rate);
    if fit.fit_power == 0.0 && fit.residual_power == 0.0 {
        return Ok(floor);
    }
    Ok(SnrEstimate {
        snr_db: to_db(&fit),
        tone_hz,
        tone_detected: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{add_noise_snr, synth_sinusoid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Direct O(n^2) DFT of the Hann-windowed clip, one-sided, same scaling.
    fn naive_periodogram(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos()).collect();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, (&xv, &wv)) in x.iter().zip(&w).enumerate() {
                    let ang = -TAU * (k * t) as f64 / n as f64;
                    re += xv * wv * ang.cos();
                    im += xv * wv * ang.sin();
                }
                let p = (re * re + im * im) / n as f64;
                if k == 0 || (n % 2 == 0 && k == n / 2) {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        for n in [64, 75] {
            let x: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.37).sin()).collect();
            let psd = periodogram(&AudioClip::new(x.clone(), 1000)).unwrap();
            for (a, b) in psd.power.iter().zip(naive_periodogram(&x)) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn parseval_on_windowed_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4001;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let energy: f64 = x.iter().zip(hann(n)).map(|(v, w)| (v * w).powi(2)).sum();
        let psd = periodogram(&AudioClip::new(x, 8000)).unwrap();
        let total: f64 = psd.power.iter().sum();
        assert!(((total - energy) / energy).abs() < 1e-6);
    }

    #[test]
    fn dc_peaks_at_zero() {
        let psd = periodogram(&AudioClip::new(vec![0.3; 512], 8000)).unwrap();
        let argmax = psd
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 0);
        assert!((psd_peak_hz(&psd, 0.0).unwrap()).abs() < psd.bin_width_hz());
    }

    #[test]
    fn finds_100_hz() {
        let clip = synth_sinusoid(100.0, 1.0, 22050, 0.4, 0.8).unwrap();
        let psd = periodogram(&clip).unwrap();
        assert_eq!(psd.bin_width_hz(), 1.0);
        assert!((psd_peak_hz(&psd, 5.0).unwrap() - 100.0).abs() <= 0.5);
    }

    #[test]
    fn peak_invariant_over_test_range() {
        for f in (10..=800).step_by(7).map(|f| f as f64 + 0.3) {
            let clip = synth_sinusoid(f, 1.0, 22050, 1.1, 0.5).unwrap();
            let psd = periodogram(&clip).unwrap();
            let est = psd_peak_hz(&psd, DEFAULT_PEAK_FLOOR_HZ).unwrap();
            assert!((est - f).abs() <= psd.bin_width_hz(), "{f}: {est}");
        }
    }

    #[test]
    fn strong_second_harmonic_wins() {
        let f0 = 150.0;
        let a1 = 0.4;
        let a2 = a1 * 1.5f64.sqrt();
        let samples = (0..22050)
            .map(|t| {
                let t = t as f64 / 22050.0;
                a1 * (TAU * f0 * t).sin() + a2 * (TAU * 2.0 * f0 * t + 0.3).sin()
            })
            .collect();
        let psd = periodogram(&AudioClip::new(samples, 22050)).unwrap();
        assert!((psd_peak_hz(&psd, 5.0).unwrap() - 2.0 * f0).abs() <= 0.5);
    }

    #[test]
    fn floor_excludes_stronger_low_peak() {
        let samples = (0..22050)
            .map(|t| {
                let t = t as f64 / 22050.0;
                0.6 * (TAU * 50.0 * t).sin() + 0.2 * (TAU * 300.0 * t).sin()
            })
            .collect();
        let psd = periodogram(&AudioClip::new(samples, 22050)).unwrap();
        assert!((psd_peak_hz(&psd, 5.0).unwrap() - 50.0).abs() < 0.5);
        assert!((psd_peak_hz(&psd, 100.0).unwrap() - 300.0).abs() < 0.5);
    }

    #[test]
    fn flat_spectrum_is_an_error() {
        let psd = periodogram(&AudioClip::new(vec![0.0; 100], 8000)).unwrap();
        assert!(matches!(psd_peak_hz(&psd, 5.0), Err(Error::Measurement(_))));
    }

    #[test]
    fn pure_sine_hits_cap() {
        let clip = synth_sinusoid(237.3, 1.0, 22050, 0.9, 0.6).unwrap();
        let est = estimate_snr(&clip, None).unwrap();
        assert_eq!(est.snr_db, SNR_CAP_DB);
        assert!((est.tone_hz - 237.3).abs() < 1e-3);
    }

    #[test]
    fn recovers_constructed_mixture() {
        for (i, f) in [10.0, 90.0, 400.0, 777.0].into_iter().enumerate() {
            let clip = synth_sinusoid(f, 1.0, 22050, 0.2 * i as f64, 0.5).unwrap();
            let noisy = add_noise_snr(&clip, 20.0, 100 + i as u64).unwrap();
            let est = estimate_snr(&noisy, None).unwrap();
            assert!((est.snr_db - 20.0).abs() <= 1.0, "{f}: {est:?}");
        }
    }

    #[test]
    fn white_noise_scores_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..22050).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 0.1 * z }).collect();
        let est = estimate_snr(&AudioClip::new(x, 22050), None).unwrap();
        assert!(est.snr_db < 5.0, "{est:?}");
    }

    #[test]
    fn silence_returns_floor_flag() {
        let est = estimate_snr(&AudioClip::new(vec![0.0; 2048], 22050), None).unwrap();
        assert!(!est.tone_detected);
        assert_eq!(est.snr_db, -SNR_CAP_DB);
    }

    #[test]
    fn phase_shift_barely_moves_snr() {
        let base = synth_sinusoid(333.0, 1.0, 22050, 0.0, 0.5).unwrap();
        let shifted = synth_sinusoid(333.0, 1.0, 22050, 2.1, 0.5).unwrap();
        let a = estimate_snr(&add_noise_snr(&base, 15.0, 4).unwrap(), None).unwrap();
        let b = estimate_snr(&add_noise_snr(&shifted, 15.0, 4).unwrap(), None).unwrap();
        assert!((a.snr_db - b.snr_db).abs() < 0.1, "{a:?} {b:?}");
    }

    #[test]
    fn too_short_for_one_period() {
        let clip = synth_sinusoid(20.0, 0.01, 22050, 0.0, 0.5).unwrap();
        assert!(estimate_snr(&clip, Some(20.0)).is_err());
    }
}
