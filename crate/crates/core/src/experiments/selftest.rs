use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{
    forward_with_param_ids, AuxTrack, BlockWeights, DilationPlan, MacroblockSpec, ModelConfig, ModelKind,
    NetworkParams, Profile,
};
use crate::model::residual_block_forward;
use crate::tensor::gradcheck::{check_gradients, GradCheck};
use crate::tensor::{Tape, TensorId};

const STEP: f64 = 1e-6;
const TOLERANCE: f64 = 1e-4;

fn randn(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect()
}

/// Reduces `x` to a scalar through fixed random weights so every element
/// gets a distinct gradient.
fn project(tape: &mut Tape<f64>, x: TensorId, seed: u64) -> Result<TensorId> {
    let shape = tape.shape(x).to_vec();
    let n = shape.iter().product();
    let w = randn(&mut ChaCha8Rng::seed_from_u64(seed), n, 1.0);
    let w = tape.constant(&shape, w)?;
    let y = tape.mul(x, w)?;
    Ok(tape.sum(y))
}

/// Finite-difference checks of every tape operation, a residual block with
/// time-variant offsets, and a whole network under cross-entropy, all in
/// 64-bit at relative tolerance 1e-4.
pub fn gradient_check_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, t) = (3, 7);
    let x = (vec![c, t], randn(&mut rng, c * t, 1.0));
    let mut out = Vec::new();

    out.push(check_gradients(
        "channel_mix",
        &[x.clone(), (vec![4, c], randn(&mut rng, 4 * c, 1.0)), (vec![4], randn(&mut rng, 4, 1.0))],
        STEP,
        TOLERANCE,
        |tape, ids| {
            let y = tape.channel_mix(ids[0], ids[1], Some(ids[2]))?;
            project(tape, y, 1)
        },
    )?);
    out.push(check_gradients("causal_gather", std::slice::from_ref(&x), STEP, TOLERANCE, |tape, ids| {
        let y = tape.causal_gather(ids[0], &[1, 3, 1, 2, 6, 4, 2])?;
        project(tape, y, 2)
    })?);
    out.push(check_gradients(
        "column_lookup",
        &[(vec![4, 5], randn(&mut rng, 20, 1.0)), (vec![4], randn(&mut rng, 4, 1.0))],
        STEP,
        TOLERANCE,
        |tape, ids| {
            let y = tape.column_lookup(ids[0], Some(ids[1]), &[Some(2), None, Some(0), Some(2), Some(4), None, Some(1)])?;
            project(tape, y, 8)
        },
    )?);
    out.push(check_gradients(
        "rows_add_mul",
        &[x.clone(), (vec![1, t], randn(&mut rng, t, 1.0))],
        STEP,
        TOLERANCE,
        |tape, ids| {
            let a = tape.rows(ids[0], 1, 1)?;
            let b = tape.mul(a, ids[1])?;
            let y = tape.add(b, ids[1])?;
            project(tape, y, 3)
        },
    )?);
    out.push(check_gradients("tanh_sigmoid", std::slice::from_ref(&x), STEP, TOLERANCE, |tape, ids| {
        let a = tape.tanh(ids[0]);
        let b = tape.sigmoid(ids[0]);
        let y = tape.mul(a, b)?;
        project(tape, y, 4)
    })?);
    // keep inputs away from the kink
    let away: Vec<f64> = x.1.iter().map(|v| if v.abs() < 0.1 { v + 0.3 } else { *v }).collect();
    out.push(check_gradients("relu", &[(vec![c, t], away)], STEP, TOLERANCE, |tape, ids| {
        let y = tape.relu(ids[0]);
        project(tape, y, 5)
    })?);
    let targets: Vec<u8> = (0..t).map(|_| rng.random()).collect();
    out.push(check_gradients(
        "softmax_cross_entropy",
        &[(vec![256, t], randn(&mut rng, 256 * t, 2.0))],
        STEP,
        TOLERANCE,
        |tape, ids| tape.softmax_cross_entropy(ids[0], &targets),
    )?);

    let (r, g, s, a) = (3, 2, 3, 1);
    let block_inputs = vec![
        (vec![r, t], randn(&mut rng, r * t, 1.0)),
        (vec![a, t], randn(&mut rng, a * t, 1.0)),
        (vec![2 * g, r], randn(&mut rng, 2 * g * r, 0.7)),
        (vec![2 * g, r], randn(&mut rng, 2 * g * r, 0.7)),
        (vec![2 * g, a], randn(&mut rng, 2 * g * a, 0.7)),
        (vec![2 * g], randn(&mut rng, 2 * g, 0.3)),
        (vec![r, g], randn(&mut rng, r * g, 0.7)),
        (vec![r], randn(&mut rng, r, 0.3)),
        (vec![s, g], randn(&mut rng, s * g, 0.7)),
        (vec![s], randn(&mut rng, s, 0.3)),
    ];
    for (name, offsets) in [("fixed_block", [2usize; 7]), ("adaptive_block", [1, 4, 2, 6, 3, 5, 2])] {
        out.push(check_gradients(name, &block_inputs, STEP, TOLERANCE, |tape, ids| {
            let w = BlockWeights {
                current: ids[2],
                previous: ids[3],
                conditioning: ids[4],
                gate_bias: ids[5],
                residual_weight: ids[6],
                residual_bias: ids[7],
                skip_weight: ids[8],
                skip_bias: ids[9],
            };
            let (res, skip) = residual_block_forward(tape, ids[0], ids[1], &offsets, &w, g)?;
            let pr = project(tape, res, 6)?;
            let ps = project(tape, skip, 7)?;
            let both = tape.add(pr, ps)?;
            Ok(both)
        })?);
    }

    let mut config = ModelConfig::preset(ModelKind::QPNet, Profile::Desk, 8);
    config.macroblocks = vec![MacroblockSpec::fixed(1, 2), MacroblockSpec::adaptive(1, 2)];
    config.residual_channels = 3;
    config.gate_channels = 2;
    config.skip_channels = 3;
    config.output_mid_channels = 3;
    let mut params = NetworkParams::<f64>::init(&config, seed);
    // the output layer starts at zero; give it values so upstream gradients flow
    for p in &mut params.tensors {
        if p.values.iter().all(|&v| v == 0.0) {
            p.values = randn(&mut rng, p.values.len(), 0.3);
        }
    }
    let len = 12;
    let codes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
    let aux = AuxTrack::constant(300.0, len, 400.0);
    let factors: Vec<usize> = (0..len).map(|i| 1 + i % 3).collect();
    let plan = DilationPlan::from_factors(&config, &factors);
    let inputs: Vec<(Vec<usize>, Vec<f64>)> = params.tensors.iter().map(|p| (p.shape.clone(), p.values.clone())).collect();
    out.push(check_gradients("network_cross_entropy", &inputs, STEP, TOLERANCE, |tape, ids| {
        let pass = forward_with_param_ids(tape, ids.to_vec(), &config, &codes, &aux, &plan)?;
        tape.softmax_cross_entropy(pass.logits, &codes)
    })?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let checks = gradient_check_suite(3).unwrap();
        assert_eq!(checks.len(), 10);
        for c in &checks {
            assert!(c.passed(), "{} rel err {}", c.name, c.max_relative_error);
        }
    }
}
