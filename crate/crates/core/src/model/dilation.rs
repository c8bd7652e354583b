//! Pitch-dependent dilation planning and receptive-field accounting.

use super::config::{BlockKind, ModelConfig};
use crate::error::{Error, Result};

/// `E_t = max(1, round_half_up(fs / (f0 * a)))`.
pub fn compute_dilation_factor(f0_hz: f64, sample_rate: u32, dense_factor: u32) -> Result<usize> {
    if !(f0_hz > 0.0) || !f0_hz.is_finite() {
        return Err(Error::data(format!(
            "F0 {f0_hz} Hz is not positive; interpolate unvoiced samples first"
        )));
    }
    if dense_factor == 0 {
        return Err(Error::config("dense factor must be at least 1"));
    }
    let ratio = sample_rate as f64 / (f0_hz * dense_factor as f64);
    Ok(((ratio + 0.5).floor() as usize).max(1))
}

/// Fills unvoiced gaps of an F0 track.
///
/// Interior gaps are linearly interpolated between the flanking voiced
/// values; leading and trailing gaps hold the nearest voiced value.
pub fn interpolate_f0(f0: &[f64], voiced: &[bool]) -> Result<Vec<f64>> {
    if f0.len() != voiced.len() {
        return Err(Error::data(format!(
            "{} F0 values but {} voicing flags",
            f0.len(),
            voiced.len()
        )));
    }
    let voiced_idx: Vec<usize> = (0..f0.len()).filter(|&i| voiced[i]).collect();
    let (Some(&first), Some(&last)) = (voiced_idx.first(), voiced_idx.last()) else {
        return Err(Error::data("F0 track has no voiced samples"));
    };
    if let Some(&i) = voiced_idx.iter().find(|&&i| !(f0[i] > 0.0)) {
        return Err(Error::data(format!("voiced sample {i} has non-positive F0 {}", f0[i])));
    }
    let mut out = f0.to_vec();
    out[..first].fill(f0[first]);
    out[last + 1..].fill(f0[last]);
    for pair in voiced_idx.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let span = (b - a) as f64;
        for (i, v) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let w = (i - a) as f64 / span;
            *v = f0[a] * (1.0 - w) + f0[b] * w;
        }
    }
    Ok(out)
}

/// Per-sample auxiliary input: F0 for dilation, conditioning for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxTrack {
    pub f0: Vec<f64>,
    pub voiced: Vec<bool>,
    /// `aux_dim x T`, row-major.
    pub conditioning: Vec<f32>,
    pub aux_dim: usize,
}

impl AuxTrack {
    /// Voiced track at a constant F0 whose conditioning is `f0 / f0_scale_hz`.
    pub fn constant(f0_hz: f64, len: usize, f0_scale_hz: f64) -> Self {
        AuxTrack {
            f0: vec![f0_hz; len],
            voiced: vec![true; len],
            conditioning: vec![(f0_hz / f0_scale_hz) as f32; len],
            aux_dim: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.f0.len();
        if self.voiced.len() != t || self.conditioning.len() != self.aux_dim * t {
            return Err(Error::data(format!(
                "aux track lengths disagree: {t} F0, {} voicing, {} conditioning for dim {}",
                self.voiced.len(),
                self.conditioning.len(),
                self.aux_dim
            )));
        }
        Ok(())
    }

    /// Conditioning vector at sample `t`.
    pub fn conditioning_at(&self, t: usize) -> impl Iterator<Item = f32> + '_ {
        let len = self.len();
        (0..self.aux_dim).map(move |d| self.conditioning[d * len + t])
    }

    /// Samples `start..end` of the track.
    pub fn slice(&self, start: usize, end: usize) -> AuxTrack {
        let len = self.len();
        AuxTrack {
            f0: self.f0[start..end].to_vec(),
            voiced: self.voiced[start..end].to_vec(),
            conditioning: (0..self.aux_dim)
                .flat_map(|d| self.conditioning[d * len + start..d * len + end].iter().copied())
                .collect(),
            aux_dim: self.aux_dim,
        }
    }

    /// Continuous F0 with unvoiced gaps filled.
    pub fn continuous_f0(&self) -> Result<Vec<f64>> {
        if self.voiced.iter().all(|&v| v) {
            Ok(self.f0.clone())
        } else {
            interpolate_f0(&self.f0, &self.voiced)
        }
    }
}

/// Offset `d'[layer][t]` of every residual block's previous-sample tap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DilationPlan {
    pub offsets: Vec<Vec<usize>>,
}

impl DilationPlan {
    pub fn len(&self) -> usize {
        self.offsets.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Plan from explicit per-sample dilated factors.
    pub fn from_factors(config: &ModelConfig, factors: &[usize]) -> Self {
        let offsets = config
            .layers()
            .into_iter()
            .map(|(kind, base)| match kind {
                BlockKind::Fixed => vec![base; factors.len()],
                BlockKind::Adaptive => factors.iter().map(|&e| e * base).collect(),
            })
            .collect();
        DilationPlan { offsets }
    }

    /// Offsets of every layer at one sample.
    pub fn at(&self, t: usize) -> Vec<usize> {
        self.offsets.iter().map(|row| row[t]).collect()
    }
}

/// Per-layer offsets for a single dilated factor.
pub fn layer_offsets(config: &ModelConfig, factor: usize) -> Vec<usize> {
    config
        .layers()
        .into_iter()
        .map(|(kind, base)| match kind {
            BlockKind::Fixed => base,
            BlockKind::Adaptive => factor * base,
        })
        .collect()
}

pub fn dilation_factors(config: &ModelConfig, aux: &AuxTrack) -> Result<Vec<usize>> {
    aux.continuous_f0()?
        .into_iter()
        .map(|f| compute_dilation_factor(f, config.sample_rate, config.dense_factor))
        .collect()
}

pub fn build_dilation_plan(config: &ModelConfig, aux: &AuxTrack) -> Result<DilationPlan> {
    if aux.is_empty() {
        return Err(Error::data("cannot plan dilations for an empty track"));
    }
    let factors = if config.has_adaptive() {
        dilation_factors(config, aux)?
    } else {
        vec![1; aux.len()]
    };
    Ok(DilationPlan::from_factors(config, &factors))
}

/// Receptive field with every dilated factor at 1: the kernel-2 input layer
/// plus `2^blocks - 1` per chunk.
pub fn receptive_field_length(config: &ModelConfig) -> usize {
    1 + config
        .macroblocks
        .iter()
        .map(|m| m.chunks * ((1usize << m.blocks_per_chunk) - 1))
        .sum::<usize>()
}

/// Receptive field when adaptive layers are stretched by `factor`.
pub fn effective_receptive_field_for_factor(config: &ModelConfig, factor: usize) -> usize {
    1 + layer_offsets(config, factor).iter().sum::<usize>()
}

/// Effective receptive field at sample `t` of an auxiliary track.
pub fn effective_receptive_field_length(config: &ModelConfig, aux: &AuxTrack, t: usize) -> Result<usize> {
    if t >= aux.len() {
        return Err(Error::data(format!("sample {t} beyond track of {} samples", aux.len())));
    }
    let factor = if config.has_adaptive() {
        let f0 = if aux.voiced[t] { aux.f0[t] } else { aux.continuous_f0()?[t] };
        compute_dilation_factor(f0, config.sample_rate, config.dense_factor)?
    } else {
        1
    };
    Ok(effective_receptive_field_for_factor(config, factor))
}
