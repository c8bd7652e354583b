use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a macroblock's dilations follow the pitch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Fixed,
    Adaptive,
}

/// A run of chunks that are all fixed or all adaptive. Each chunk restarts
/// the dilation doubling at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroblockSpec {
    pub kind: BlockKind,
    pub chunks: usize,
    pub blocks_per_chunk: usize,
}

impl MacroblockSpec {
    pub fn fixed(chunks: usize, blocks_per_chunk: usize) -> Self {
        MacroblockSpec {
            kind: BlockKind::Fixed,
            chunks,
            blocks_per_chunk,
        }
    }

    pub fn adaptive(chunks: usize, blocks_per_chunk: usize) -> Self {
        MacroblockSpec {
            kind: BlockKind::Adaptive,
            chunks,
            blocks_per_chunk,
        }
    }
}

/// Channel widths of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Reduced widths that train on a laptop CPU.
    Desk,
    /// Widths of the published sinusoid models.
    Paper,
}

impl Profile {
    /// `(residual, gate, skip, output_mid)` channel counts.
    pub fn channels(self) -> (usize, usize, usize, usize) {
        match self {
            Profile::Desk => (32, 32, 32, 16),
            Profile::Paper => (128, 128, 128, 64),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::config(format!("unknown profile '{other}', expected desk or paper"))),
        }
    }
}

/// Architecture of a waveform model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub macroblocks: Vec<MacroblockSpec>,
    pub residual_channels: usize,
    pub gate_channels: usize,
    pub skip_channels: usize,
    pub output_mid_channels: usize,
    /// Samples per pitch cycle seen by adaptive layers.
    pub dense_factor: u32,
    pub aux_dim: usize,
    pub sample_rate: u32,
    pub quantization_levels: usize,
    /// Conditioning F0 is divided by this before entering the network.
    #[serde(default = "default_f0_scale")]
    pub f0_scale_hz: f64,
}

fn default_f0_scale() -> f64 {
    400.0
}

/// Named architectures of the sinusoid study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Full-size WaveNet: 3 fixed chunks of 10 blocks.
    #[serde(rename = "WNf")]
    WNf,
    /// Compact WaveNet: 4 fixed chunks of 4 blocks.
    #[serde(rename = "WNc")]
    WNc,
    /// 3 fixed chunks then 1 adaptive chunk, 4 blocks each.
    #[serde(rename = "QPNet")]
    QPNet,
    /// QPNet with the adaptive chunk first.
    #[serde(rename = "rQPNet")]
    RQPNet,
    /// 4 adaptive chunks of 4 blocks.
    #[serde(rename = "pQPNet")]
    PQPNet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::WNc,
        ModelKind::WNf,
        ModelKind::PQPNet,
        ModelKind::QPNet,
        ModelKind::RQPNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::WNf => "WNf",
            ModelKind::WNc => "WNc",
            ModelKind::QPNet => "QPNet",
            ModelKind::RQPNet => "rQPNet",
            ModelKind::PQPNet => "pQPNet",
        }
    }

    pub fn macroblocks(self) -> Vec<MacroblockSpec> {
        match self {
            ModelKind::WNf => vec![MacroblockSpec::fixed(3, 10)],
            ModelKind::WNc => vec![MacroblockSpec::fixed(4, 4)],
            ModelKind::QPNet => vec![MacroblockSpec::fixed(3, 4), MacroblockSpec::adaptive(1, 4)],
            ModelKind::RQPNet => vec![MacroblockSpec::adaptive(1, 4), MacroblockSpec::fixed(3, 4)],
            ModelKind::PQPNet => vec![MacroblockSpec::adaptive(4, 4)],
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown model '{s}'")))
    }
}

impl ModelConfig {
    pub fn preset(kind: ModelKind, profile: Profile, dense_factor: u32) -> Self {
        let (residual, gate, skip, mid) = profile.channels();
        ModelConfig {
            macroblocks: kind.macroblocks(),
            residual_channels: residual,
            gate_channels: gate,
            skip_channels: skip,
            output_mid_channels: mid,
            dense_factor,
            aux_dim: 1,
            sample_rate: 22_050,
            quantization_levels: 256,
            f0_scale_hz: default_f0_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.macroblocks.is_empty() {
            return Err(Error::config("a model needs at least one macroblock"));
        }
        if let Some(m) = self.macroblocks.iter().find(|m| m.chunks == 0 || m.blocks_per_chunk == 0) {
            return Err(Error::config(format!("macroblock {m:?} has no blocks")));
        }
        let widths = [
            self.residual_channels,
            self.gate_channels,
            self.skip_channels,
            self.output_mid_channels,
            self.aux_dim,
        ];
        if widths.contains(&0) {
            return Err(Error::config("channel counts must be positive"));
        }
        if self.dense_factor == 0 {
            return Err(Error::config("dense factor must be at least 1"));
        }
        if self.quantization_levels != 256 {
            return Err(Error::config(format!(
                "only 256 quantization levels are supported, got {}",
                self.quantization_levels
            )));
        }
        if self.sample_rate == 0 || !(self.f0_scale_hz > 0.0) {
            return Err(Error::config("sample rate and F0 scale must be positive"));
        }
        Ok(())
    }

    /// `(kind, base dilation)` of every residual block in network order.
    pub fn layers(&self) -> Vec<(BlockKind, usize)> {
        self.macroblocks
            .iter()
            .flat_map(|m| {
                (0..m.chunks).flat_map(move |_| (0..m.blocks_per_chunk).map(move |b| (m.kind, 1usize << b)))
            })
            .collect()
    }

    pub fn num_blocks(&self) -> usize {
        self.macroblocks.iter().map(|m| m.chunks * m.blocks_per_chunk).sum()
    }

    pub fn has_adaptive(&self) -> bool {
        self.macroblocks.iter().any(|m| m.kind == BlockKind::Adaptive)
    }

    /// Same layer structure with every macroblock made fixed.
    pub fn as_fixed(&self) -> Self {
        let mut c = self.clone();
        for m in &mut c.macroblocks {
            m.kind = BlockKind::Fixed;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dilation_pattern_restarts_per_chunk() {
        let c = ModelConfig::preset(ModelKind::QPNet, Profile::Desk, 8);
        let layers = c.layers();
        assert_eq!(layers.len(), 16);
        assert_eq!(layers[3], (BlockKind::Fixed, 8));
        assert_eq!(layers[4], (BlockKind::Fixed, 1));
        assert_eq!(layers[12], (BlockKind::Adaptive, 1));
        assert_eq!(layers[15], (BlockKind::Adaptive, 8));
    }

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("WaveRNN".parse::<ModelKind>().is_err());
    }

    #[test]
    fn validation_catches_empty_models() {
        let mut c = ModelConfig::preset(ModelKind::WNc, Profile::Desk, 8);
        c.macroblocks.clear();
        assert!(c.validate().is_err());
        let mut c = ModelConfig::preset(ModelKind::WNc, Profile::Desk, 8);
        c.dense_factor = 0;
        assert!(c.validate().is_err());
    }
}
