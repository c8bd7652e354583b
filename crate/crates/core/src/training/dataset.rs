use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AuxTrack;
use crate::signal::{add_noise_snr, mulaw_encode, synth_sinusoid, QuantizedClip};

/// Recipe for the noisy-sinusoid denoising corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub f0_list: Vec<f64>,
    /// Total utterances; F0 values are assigned round-robin.
    pub utterances: usize,
    pub seconds_per_utterance: f64,
    /// SNR of the noisy network input.
    pub signal_snr_db: f64,
    /// Half-width in Hz of the uniform noise added to the conditioning F0.
    pub aux_noise_amplitude: f64,
    pub amplitude: f64,
    pub sample_rate: u32,
    pub f0_scale_hz: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            f0_list: (0..17).map(|i| 80.0 + 20.0 * i as f64).collect(),
            utterances: 408,
            seconds_per_utterance: 1.0,
            signal_snr_db: 20.0,
            aux_noise_amplitude: 1.0,
            amplitude: 0.5,
            sample_rate: 22_050,
            f0_scale_hz: 400.0,
            seed: 1,
        }
    }
}

impl DatasetSpec {
    /// Full-size corpus: 4000 one-second utterances.
    pub fn paper() -> Self {
        DatasetSpec {
            utterances: 4000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.f0_list.is_empty() {
            return Err(Error::config("dataset F0 list is empty"));
        }
        if let Some(f) = self.f0_list.iter().find(|&&f| !(f > 0.0 && f < nyquist)) {
            return Err(Error::config(format!("training F0 {f} Hz outside (0, {nyquist}) Hz")));
        }
        if !(self.seconds_per_utterance > 0.0) || !(self.aux_noise_amplitude >= 0.0) {
            return Err(Error::config("utterance length must be positive and aux noise non-negative"));
        }
        Ok(())
    }

    /// Inclusive training range `(L, U)`.
    pub fn f0_range(&self) -> (f64, f64) {
        let lo = self.f0_list.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.f0_list.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// One training utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetItem {
    pub f0_hz: f64,
    pub phase: f64,
    /// Noisy waveform codes fed to the network.
    pub input: QuantizedClip,
    /// Clean waveform codes the network learns to predict.
    pub target: QuantizedClip,
    /// Clean F0 for dilation, noisy normalized F0 as conditioning.
    pub aux: AuxTrack,
}

/// Builds utterance `index` of a spec. Each utterance has its own random
/// stream, so items can be built in any order.
pub fn build_item(spec: &DatasetSpec, index: usize) -> Result<DatasetItem> {
    let f0 = spec.f0_list[index % spec.f0_list.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let phase = rng.random::<f64>() * TAU;
    let noise_seed: u64 = rng.random();

    let clean = synth_sinusoid(f0, spec.seconds_per_utterance, spec.sample_rate, phase, spec.amplitude)?;
    let noisy = add_noise_snr(&clean, spec.signal_snr_db, noise_seed)?;
    let n = clean.len();
    let conditioning = (0..n)
        .map(|_| {
            let jitter = if spec.aux_noise_amplitude > 0.0 {
                rng.random_range(-spec.aux_noise_amplitude..spec.aux_noise_amplitude)
            } else {
                0.0
            };
            ((f0 + jitter) / spec.f0_scale_hz) as f32
        })
        .collect();
    Ok(DatasetItem {
        f0_hz: f0,
        phase,
        input: mulaw_encode(&noisy)?,
        target: mulaw_encode(&clean)?,
        aux: AuxTrack {
            f0: vec![f0; n],
            voiced: vec![true; n],
            conditioning,
            aux_dim: 1,
        },
    })
}

pub fn build_sinusoid_dataset(spec: &DatasetSpec) -> Result<Vec<DatasetItem>> {
    spec.validate()?;
    (0..spec.utterances).into_par_iter().map(|i| build_item(spec, i)).collect()
}
