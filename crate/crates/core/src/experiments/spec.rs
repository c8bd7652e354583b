use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelKind, Profile};
use crate::sampler::SamplingMode;
use crate::training::{DatasetSpec, TrainingConfig};

/// Test tones: 10-80 Hz step 10, 100-400 step 100, 450-800 step 50.
pub fn default_test_f0s() -> Vec<f64> {
    let low = (1..=8).map(|i| 10.0 * i as f64);
    let mid = (1..=4).map(|i| 100.0 * i as f64);
    let high = (0..8).map(|i| 450.0 + 50.0 * i as f64);
    low.chain(mid).chain(high).collect()
}

/// How the test grid is generated and scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSpec {
    pub test_f0s: Vec<f64>,
    /// Utterances per test F0, each with its own phase `2 pi k / n`.
    pub phases_per_f0: usize,
    pub seconds: f64,
    /// SNR of the noisy sine fed in before generation starts.
    pub seed_snr_db: f64,
    pub amplitude: f64,
    pub sampling_mode: SamplingMode,
    pub temperature: f64,
    pub write_wavs: bool,
    pub write_psd: bool,
    /// PSD dumps stop at this frequency.
    pub psd_max_hz: f64,
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        EvaluationSpec {
            test_f0s: default_test_f0s(),
            phases_per_f0: 10,
            seconds: 1.0,
            seed_snr_db: 20.0,
            amplitude: 0.5,
            sampling_mode: SamplingMode::Categorical,
            temperature: 1.0,
            write_wavs: false,
            write_psd: false,
            psd_max_hz: 2000.0,
        }
    }
}

/// Everything a sweep or comparison needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub profile: Profile,
    /// Roster for model comparison.
    pub models: Vec<ModelKind>,
    /// Dense factor of the adaptive models in a comparison.
    pub comparison_dense_factor: u32,
    /// pQPNet dense factors for a sweep.
    pub dense_factors: Vec<u32>,
    /// Replaces the preset architecture of a model, keyed by model name.
    pub model_overrides: BTreeMap<String, ModelConfig>,
    pub dataset: DatasetSpec,
    pub training: TrainingConfig,
    /// Epoch count per run label (`pQPNet_a1`, `WNc`, ...).
    pub epoch_overrides: BTreeMap<String, usize>,
    pub evaluation: EvaluationSpec,
    /// Weight initialization and test-grid randomness.
    pub seed: u64,
    /// Trained models are stored here and reused when config, data, training
    /// and seed all match.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self::for_profile(Profile::Desk)
    }
}

impl ExperimentSpec {
    pub fn for_profile(profile: Profile) -> Self {
        ExperimentSpec {
            profile,
            models: vec![ModelKind::WNc, ModelKind::PQPNet],
            comparison_dense_factor: 8,
            dense_factors: vec![1, 8, 64],
            model_overrides: BTreeMap::new(),
            dataset: match profile {
                Profile::Desk => DatasetSpec::default(),
                Profile::Paper => DatasetSpec::paper(),
            },
            training: match profile {
                Profile::Desk => TrainingConfig::desk(),
                Profile::Paper => TrainingConfig::default(),
            },
            epoch_overrides: BTreeMap::new(),
            evaluation: EvaluationSpec::default(),
            seed: 1,
            cache_dir: None,
        }
    }

    /// Parses a JSON config. Fields it leaves out take the defaults of the
    /// profile: `profile` if given, else the one named in the JSON, else desk.
    pub fn from_json(text: &str, profile: Option<Profile>) -> Result<Self> {
        let user: Value = serde_json::from_str(text).map_err(|e| Error::config(format!("invalid JSON: {e}")))?;
        if !user.is_object() {
            return Err(Error::config("config must be a JSON object"));
        }
        let named = match user.get("profile") {
            Some(v) => Some(
                serde_json::from_value::<Profile>(v.clone())
                    .map_err(|e| Error::config(format!("profile: {e}")))?,
            ),
            None => None,
        };
        let profile = profile.or(named).unwrap_or(Profile::Desk);
        let mut merged = serde_json::to_value(Self::for_profile(profile)).expect("spec serializes");
        merge(&mut merged, user);
        merged["profile"] = serde_json::to_value(profile).expect("profile serializes");
        let spec: ExperimentSpec =
            serde_json::from_value(merged).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.training.validate()?;
        let e = &self.evaluation;
        if e.test_f0s.is_empty() || e.phases_per_f0 == 0 {
            return Err(Error::config("test grid is empty"));
        }
        let nyquist = self.dataset.sample_rate as f64 / 2.0;
        if let Some(f) = e.test_f0s.iter().find(|&&f| !(f > 0.0 && f < nyquist)) {
            return Err(Error::config(format!("test F0 {f} Hz outside (0, {nyquist}) Hz")));
        }
        if !(e.seconds > 0.0) || !(e.temperature > 0.0) || !(e.amplitude > 0.0 && e.amplitude <= 1.0) {
            return Err(Error::config("evaluation needs positive length and temperature and amplitude in (0, 1]"));
        }
        if self.dense_factors.contains(&0) || self.comparison_dense_factor == 0 {
            return Err(Error::config("dense factors must be at least 1"));
        }
        for (name, config) in &self.model_overrides {
            name.parse::<ModelKind>()?;
            config.validate()?;
        }
        Ok(())
    }

    /// Architecture of `kind` at dense factor `a`.
    pub fn model_config(&self, kind: ModelKind, dense_factor: u32) -> ModelConfig {
        let mut c = match self.model_overrides.get(kind.name()) {
            Some(c) => c.clone(),
            None => ModelConfig::preset(kind, self.profile, dense_factor),
        };
        c.dense_factor = dense_factor;
        c.sample_rate = self.dataset.sample_rate;
        c.f0_scale_hz = self.dataset.f0_scale_hz;
        c
    }

    /// Training settings of one run, with any epoch override applied.
    pub fn training_for(&self, label: &str) -> TrainingConfig {
        let mut t = self.training.clone();
        if let Some(&epochs) = self.epoch_overrides.get(label) {
            t.epochs = epochs;
        }
        t
    }
}

/// Name of a trained model: `pQPNet_a8`, or just `WNc` for fixed networks.
pub fn run_label(config: &ModelConfig, kind: ModelKind) -> String {
    if config.has_adaptive() {
        format!("{}_a{}", kind.name(), config.dense_factor)
    } else {
        kind.name().to_string()
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}
