//! Differentiable teacher-forced forward pass.

use super::dilation::{build_dilation_plan, AuxTrack, DilationPlan};
use super::params::{BlockIndex, NetworkParams, ParamLayout};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::signal::MULAW_MID_CODE;
use crate::tensor::{Scalar, Tape, TensorId};

/// Tape handles of one residual block's weights.
#[derive(Clone, Copy, Debug)]
pub struct BlockWeights {
    pub current: TensorId,
    pub previous: TensorId,
    pub conditioning: TensorId,
    pub gate_bias: TensorId,
    pub residual_weight: TensorId,
    pub residual_bias: TensorId,
    pub skip_weight: TensorId,
    pub skip_bias: TensorId,
}

impl BlockWeights {
    fn from_index(ids: &[TensorId], idx: &BlockIndex) -> Self {
        BlockWeights {
            current: ids[idx.current],
            previous: ids[idx.previous],
            conditioning: ids[idx.conditioning],
            gate_bias: ids[idx.gate_bias],
            residual_weight: ids[idx.residual_weight],
            residual_bias: ids[idx.residual_bias],
            skip_weight: ids[idx.skip_weight],
            skip_bias: ids[idx.skip_bias],
        }
    }
}

/// One residual block: a two-tap dilated convolution whose second tap is
/// `offsets[t]` samples back, gated by tanh/sigmoid with auxiliary
/// conditioning, feeding residual and skip 1x1 projections.
///
/// `x` is `R x T`, `aux` is `A x T`. Returns `(residual_out, skip_out)`.
pub fn residual_block_forward<F: Scalar>(
    tape: &mut Tape<F>,
    x: TensorId,
    aux: TensorId,
    offsets: &[usize],
    weights: &BlockWeights,
    gate_channels: usize,
) -> Result<(TensorId, TensorId)> {
    let t = tape.shape(x)[1];
    if offsets.len() != t {
        return Err(Error::config(format!(
            "dilation plan row has {} samples, input has {t}",
            offsets.len()
        )));
    }
    let current = tape.channel_mix(x, weights.current, Some(weights.gate_bias))?;
    let past = tape.causal_gather(x, offsets)?;
    let previous = tape.channel_mix(past, weights.previous, None)?;
    let cond = tape.channel_mix(aux, weights.conditioning, None)?;
    let u = tape.add(current, previous)?;
    let u = tape.add(u, cond)?;
    let filter = tape.rows(u, 0, gate_channels)?;
    let gate = tape.rows(u, gate_channels, gate_channels)?;
    let filter = tape.tanh(filter);
    let gate = tape.sigmoid(gate);
    let z = tape.mul(filter, gate)?;
    let res = tape.channel_mix(z, weights.residual_weight, Some(weights.residual_bias))?;
    let residual_out = tape.add(x, res)?;
    let skip_out = tape.channel_mix(z, weights.skip_weight, Some(weights.skip_bias))?;
    Ok((residual_out, skip_out))
}

/// Handles produced by a recorded forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// `256 x T`; column `t` predicts code `t` from codes before it.
    pub logits: TensorId,
    /// One per parameter buffer, in layout order.
    pub params: Vec<TensorId>,
    /// Input of each residual block, `R x T`.
    pub layer_inputs: Vec<TensorId>,
}

/// The network's input stream: codes delayed by one sample, starting from the
/// mid-scale code.
pub fn shift_input(codes: &[u8]) -> Vec<u8> {
    std::iter::once(MULAW_MID_CODE)
        .chain(codes.iter().copied())
        .take(codes.len())
        .collect()
}

/// Records the teacher-forced network on `tape` with an explicit dilation plan.
///
/// `codes` is the observed sequence; logits at `t` depend only on
/// `codes[..t]`. When `trainable` is false the weights are recorded as
/// constants and no gradient work is done for them.
pub fn forward_with_plan<F: Scalar>(
    tape: &mut Tape<F>,
    params: &NetworkParams<F>,
    config: &ModelConfig,
    codes: &[u8],
    aux: &AuxTrack,
    plan: &DilationPlan,
    trainable: bool,
) -> Result<ForwardPass> {
    config.validate()?;
    aux.validate()?;
    let t = codes.len();
    if t == 0 {
        return Err(Error::data("empty code sequence"));
    }
    if aux.len() != t {
        return Err(Error::data(format!("{t} codes but {} auxiliary samples", aux.len())));
    }
    if aux.aux_dim != config.aux_dim {
        return Err(Error::config(format!(
            "aux dim {} does not match model aux dim {}",
            aux.aux_dim, config.aux_dim
        )));
    }
    if plan.offsets.len() != config.num_blocks() || plan.len() != t {
        return Err(Error::config(format!(
            "dilation plan is {}x{}, model needs {}x{t}",
            plan.offsets.len(),
            plan.len(),
            config.num_blocks()
        )));
    }

    let ids = params
        .tensors
        .iter()
        .map(|p| {
            if trainable {
                tape.variable(&p.shape, p.values.clone())
            } else {
                tape.constant(&p.shape, p.values.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    forward_with_param_ids(tape, ids, config, codes, aux, plan)
}

/// Records the network over weights already on the tape, one handle per
/// parameter buffer in layout order. Inputs are assumed validated.
pub fn forward_with_param_ids<F: Scalar>(
    tape: &mut Tape<F>,
    ids: Vec<TensorId>,
    config: &ModelConfig,
    codes: &[u8],
    aux: &AuxTrack,
    plan: &DilationPlan,
) -> Result<ForwardPass> {
    let layout = ParamLayout::new(config);
    if ids.len() != layout.len() {
        return Err(Error::config(format!("{} parameter handles, model needs {}", ids.len(), layout.len())));
    }
    let t = codes.len();
    let q = config.quantization_levels;
    let current: Vec<Option<usize>> = shift_input(codes).into_iter().map(|c| Some(c as usize)).collect();
    if let Some(&Some(bad)) = current.iter().find(|c| c.is_some_and(|c| c >= q)) {
        return Err(Error::data(format!("code {bad} outside 0..{q}")));
    }
    let previous: Vec<Option<usize>> = std::iter::once(None).chain(current.iter().copied()).take(t).collect();
    let aux_values = aux.conditioning.iter().map(|&v| F::from_f64(v as f64)).collect();
    let aux_id = tape.constant(&[config.aux_dim, t], aux_values)?;

    let cur = tape.column_lookup(ids[layout.causal_current], Some(ids[layout.causal_bias]), &current)?;
    let prev = tape.column_lookup(ids[layout.causal_previous], None, &previous)?;
    let mut x = tape.add(cur, prev)?;

    let mut layer_inputs = Vec::with_capacity(layout.blocks.len());
    let mut skip_sum: Option<TensorId> = None;
    for (idx, offsets) in layout.blocks.iter().zip(&plan.offsets) {
        layer_inputs.push(x);
        let weights = BlockWeights::from_index(&ids, idx);
        let (res, skip) = residual_block_forward(tape, x, aux_id, offsets, &weights, config.gate_channels)?;
        x = res;
        skip_sum = Some(match skip_sum {
            Some(s) => tape.add(s, skip)?,
            None => skip,
        });
    }

    let h = layout.head;
    let skip_sum = skip_sum.expect("validated config has blocks");
    let a = tape.relu(skip_sum);
    let a = tape.channel_mix(a, ids[h.mid_weight], Some(ids[h.mid_bias]))?;
    let a = tape.relu(a);
    let logits = tape.channel_mix(a, ids[h.out_weight], Some(ids[h.out_bias]))?;
    Ok(ForwardPass {
        logits,
        params: ids,
        layer_inputs,
    })
}

/// Teacher-forced forward pass with the plan derived from the auxiliary F0.
pub fn forward_teacher_forced<F: Scalar>(
    tape: &mut Tape<F>,
    params: &NetworkParams<F>,
    config: &ModelConfig,
    codes: &[u8],
    aux: &AuxTrack,
    trainable: bool,
) -> Result<ForwardPass> {
    if aux.len() != codes.len() {
        return Err(Error::data(format!(
            "{} codes but {} auxiliary samples",
            codes.len(),
            aux.len()
        )));
    }
    let plan = build_dilation_plan(config, aux)?;
    forward_with_plan(tape, params, config, codes, aux, &plan, trainable)
}

/// Logits as `T` columns of `levels` values, computed without gradients.
pub fn predict_logits(
    params: &NetworkParams<f32>,
    config: &ModelConfig,
    codes: &[u8],
    aux: &AuxTrack,
    plan: &DilationPlan,
) -> Result<Vec<Vec<f32>>> {
    let mut tape = Tape::new();
    let pass = forward_with_plan(&mut tape, params, config, codes, aux, plan, false)?;
    let logits = tape.tensor(pass.logits);
    Ok((0..codes.len()).map(|t| logits.column(t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MacroblockSpec, ModelKind, Profile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(kind: ModelKind) -> ModelConfig {
        let mut c = ModelConfig::preset(kind, Profile::Desk, 8);
        c.residual_channels = 4;
        c.gate_channels = 4;
        c.skip_channels = 4;
        c.output_mid_channels = 4;
        c.macroblocks = match kind {
            ModelKind::QPNet => vec![MacroblockSpec::fixed(1, 2), MacroblockSpec::adaptive(1, 2)],
            _ => vec![MacroblockSpec::adaptive(2, 2)],
        };
        c
    }

    fn random_codes(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random()).collect()
    }

    #[test]
    fn shift_prepends_mid_code() {
        assert_eq!(shift_input(&[5, 6, 7]), vec![128, 5, 6]);
    }

    #[test]
    fn zero_weight_block_is_identity() {
        let mut tape = Tape::<f64>::new();
        let (r, g, t) = (3, 2, 6);
        let x = tape.constant(&[r, t], (0..r * t).map(|v| v as f64 * 0.1).collect()).unwrap();
        let aux = tape.constant(&[1, t], vec![0.5; t]).unwrap();
        let zero = |tape: &mut Tape<f64>, rows: usize, cols: usize| tape.variable(&[rows, cols], vec![0.0; rows * cols]).unwrap();
        let w = BlockWeights {
            current: zero(&mut tape, 2 * g, r),
            previous: zero(&mut tape, 2 * g, r),
            conditioning: zero(&mut tape, 2 * g, 1),
            gate_bias: tape.variable(&[2 * g], vec![0.0; 2 * g]).unwrap(),
            residual_weight: zero(&mut tape, r, g),
            residual_bias: tape.variable(&[r], vec![0.0; r]).unwrap(),
            skip_weight: zero(&mut tape, 5, g),
            skip_bias: tape.variable(&[5], vec![0.0; 5]).unwrap(),
        };
        let (res, skip) = residual_block_forward(&mut tape, x, aux, &[1, 2, 1, 3, 2, 1], &w, g).unwrap();
        assert_eq!(tape.values(res), tape.values(x));
        assert!(tape.values(skip).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_head_predicts_uniform() {
        let c = tiny(ModelKind::PQPNet);
        let p = NetworkParams::<f64>::init(&c, 3);
        let codes = random_codes(20, 1);
        let aux = AuxTrack::constant(200.0, 20, 400.0);
        let mut tape = Tape::new();
        let pass = forward_teacher_forced(&mut tape, &p, &c, &codes, &aux, true).unwrap();
        let loss = tape.softmax_cross_entropy(pass.logits, &codes).unwrap();
        assert!((tape.values(loss)[0] - 256f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logits_are_causal() {
        let c = tiny(ModelKind::QPNet);
        let mut p = NetworkParams::<f64>::init(&c, 4);
        let layout = ParamLayout::new(&c);
        p.tensors[layout.head.out_weight].values.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64 * 0.37).sin());
        // keep every relu open so a change can always reach the logits
        p.tensors[layout.head.mid_bias].values.fill(2.0);
        for b in &layout.blocks {
            p.tensors[b.skip_bias].values.fill(2.0);
        }
        let codes = random_codes(48, 2);
        let aux = AuxTrack::constant(900.0, 48, 400.0);
        let run = |codes: &[u8]| {
            let mut tape = Tape::new();
            let pass = forward_teacher_forced(&mut tape, &p, &c, codes, &aux, false).unwrap();
            tape.values(pass.logits).to_vec()
        };
        let base = run(&codes);
        for cut in [1, 17, 40] {
            let mut changed = codes.clone();
            changed[cut..].iter_mut().for_each(|v| *v = v.wrapping_add(101));
            let other = run(&changed);
            for row in 0..256 {
                for s in 0..=cut {
                    assert_eq!(base[row * 48 + s], other[row * 48 + s], "row {row} col {s} cut {cut}");
                }
            }
            assert!((0..256).any(|row| base[row * 48 + cut + 1] != other[row * 48 + cut + 1]));
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let c = tiny(ModelKind::PQPNet);
        let p = NetworkParams::<f32>::init(&c, 3);
        let mut tape = Tape::new();
        let aux = AuxTrack::constant(200.0, 5, 400.0);
        assert!(matches!(
            forward_teacher_forced(&mut tape, &p, &c, &[1, 2, 3], &aux, false),
            Err(Error::Data(_))
        ));
    }
}
