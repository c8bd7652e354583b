use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::dataset::DatasetItem;
use crate::error::{Error, Result};
use crate::model::{forward_teacher_forced, ModelConfig, NetworkParams};
use crate::tensor::{adam_step, AdamState, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    /// Only 1 is supported.
    pub batch_size: usize,
    pub batch_length_samples: usize,
    pub epochs: usize,
    pub checkpoint_every_steps: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-4,
            batch_size: 1,
            batch_length_samples: 22_050,
            epochs: 2,
            checkpoint_every_steps: None,
            checkpoint_dir: None,
            seed: 1,
        }
    }
}

impl TrainingConfig {
    /// Desk profile: the reduced model and step count train at 2e-3.
    pub fn desk() -> Self {
        TrainingConfig {
            learning_rate: 2e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size != 1 {
            return Err(Error::config(format!("batch size {} unsupported; use 1", self.batch_size)));
        }
        if self.batch_length_samples == 0 {
            return Err(Error::config("batch length must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.checkpoint_every_steps.is_some() && self.checkpoint_dir.is_none() {
            return Err(Error::config("checkpoint_every_steps needs checkpoint_dir"));
        }
        Ok(())
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetworkParams<f32>,
    pub adam: AdamState,
    /// `(step, loss)`, steps counted from 1.
    pub loss_history: Vec<(usize, f64)>,
    /// Loss on the held-out item after training, when one was given.
    pub heldout_loss: Option<f64>,
}

/// Teacher-forced cross-entropy of `target` given `input`, no gradients.
pub fn evaluate_loss(params: &NetworkParams<f32>, config: &ModelConfig, item: &DatasetItem) -> Result<f64> {
    let mut tape = Tape::new();
    let pass = forward_teacher_forced(&mut tape, params, config, &item.input.codes, &item.aux, false)?;
    let loss = tape.softmax_cross_entropy(pass.logits, &item.target.codes)?;
    Ok(tape.values(loss)[0] as f64)
}

/// One forward/backward/Adam update on samples `start..start + len` of `item`.
pub fn train_step(
    params: &mut NetworkParams<f32>,
    adam: &mut AdamState,
    config: &ModelConfig,
    item: &DatasetItem,
    start: usize,
    len: usize,
) -> Result<f64> {
    let end = (start + len).min(item.input.codes.len());
    let aux = item.aux.slice(start, end);
    let mut tape = Tape::new();
    let pass = forward_teacher_forced(&mut tape, params, config, &item.input.codes[start..end], &aux, true)?;
    let loss_id = tape.softmax_cross_entropy(pass.logits, &item.target.codes[start..end])?;
    let loss = tape.values(loss_id)[0] as f64;
    if !loss.is_finite() {
        return Err(Error::Diverged {
            step: adam.step_count as usize + 1,
            learning_rate: adam.learning_rate,
            loss,
        });
    }
    let mut grads = tape.backward(loss_id)?;
    let grads: Vec<Vec<f32>> = pass.params.iter().map(|&id| grads.take(id)).collect();
    let grad_refs: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
    let mut param_refs: Vec<&mut [f32]> = params.tensors.iter_mut().map(|t| t.values.as_mut_slice()).collect();
    adam_step(&mut param_refs, &grad_refs, adam)?;
    Ok(loss)
}

/// Trains with a fresh optimizer state.
pub fn train(
    params: NetworkParams<f32>,
    config: &ModelConfig,
    training: &TrainingConfig,
    dataset: &[DatasetItem],
    heldout: Option<&DatasetItem>,
) -> Result<TrainOutcome> {
    let adam = AdamState::new(params.sizes(), training.learning_rate);
    train_from(params, adam, config, training, dataset, heldout, &mut |_, _| {})
}

/// Continues training from an optimizer state, reporting every step's loss
/// to `observer`.
pub fn train_from(
    mut params: NetworkParams<f32>,
    mut adam: AdamState,
    config: &ModelConfig,
    training: &TrainingConfig,
    dataset: &[DatasetItem],
    heldout: Option<&DatasetItem>,
    observer: &mut dyn FnMut(usize, f64),
) -> Result<TrainOutcome> {
    training.validate()?;
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(training.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(training.epochs * dataset.len());
    for _ in 0..training.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let item = &dataset[i];
            let n = item.input.codes.len();
            let len = training.batch_length_samples;
            let start = if n > len { rng.random_range(0..=n - len) } else { 0 };
            let loss = train_step(&mut params, &mut adam, config, item, start, len)?;
            let step = adam.step_count as usize;
            history.push((step, loss));
            observer(step, loss);
            if let (Some(every), Some(dir)) = (training.checkpoint_every_steps, &training.checkpoint_dir) {
                if every > 0 && step % every == 0 {
                    let ckpt = Checkpoint {
                        config: config.clone(),
                        params: params.clone(),
                        adam: Some(adam.clone()),
                        step: step as u64,
                    };
                    save_checkpoint(dir.join(format!("step_{step:07}.qpnt")), &ckpt)?;
                }
            }
        }
    }
    let heldout_loss = heldout.map(|h| evaluate_loss(&params, config, h)).transpose()?;
    Ok(TrainOutcome {
        params,
        adam,
        loss_history: history,
        heldout_loss,
    })
}
