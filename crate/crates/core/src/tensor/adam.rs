use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam optimizer state with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f32>>,
    pub second_moment: Vec<Vec<f32>>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zeroed moments for parameters of the given sizes, default betas.
    pub fn new(param_sizes: impl IntoIterator<Item = usize>, learning_rate: f64) -> Self {
        let sizes: Vec<usize> = param_sizes.into_iter().collect();
        AdamState {
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update over every parameter buffer.
pub fn adam_step(params: &mut [&mut [f32]], grads: &[&[f32]], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::config(format!(
            "adam: {} parameters, {} gradients, {} moment buffers",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first_moment[i].len() {
            return Err(Error::config(format!(
                "adam: parameter {i} has {} values, gradient {}, moments {}",
                p.len(),
                g.len(),
                state.first_moment[i].len()
            )));
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    let eps = state.epsilon;
    let (b1f, b2f) = (b1 as f32, b2 as f32);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut().zip(state.second_moment.iter_mut()))
    {
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = b1f * m[j] + (1.0 - b1f) * gj;
            v[j] = b2f * v[j] + (1.0 - b2f) * gj * gj;
            let m_hat = m[j] as f64 / c1;
            let v_hat = v[j] as f64 / c2;
            p[j] -= (lr * m_hat / (v_hat.sqrt() + eps)) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = vec![0.5f32, -1.25, 3.0];
        let before = p.clone();
        let mut state = AdamState::new([3], 1e-3);
        for _ in 0..5 {
            adam_step(&mut [&mut p], &[&[0.0; 3]], &mut state).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(state.step_count, 5);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut p = vec![0.0f32, 0.0];
        let mut state = AdamState::new([2], 1e-2);
        for _ in 0..100 {
            adam_step(&mut [&mut p], &[&[0.3, -2.0]], &mut state).unwrap();
        }
        assert!(p[0] < 0.0);
        assert!(p[1] > 0.0);
    }

    #[test]
    fn single_step_matches_long_hand() {
        let g = [0.2f32, -0.003, 1e-9];
        let mut p = vec![1.0f32, 2.0, 3.0];
        let mut state = AdamState::new([3], 1e-4);
        adam_step(&mut [&mut p], &[&g], &mut state).unwrap();
        for (j, &gj) in g.iter().enumerate() {
            let gj = gj as f64;
            let m = 0.1 * gj;
            let v = 0.001 * gj * gj;
            let m_hat = m / (1.0 - 0.9);
            let v_hat = v / (1.0 - 0.999);
            let expected = [1.0, 2.0, 3.0][j] - 1e-4 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((p[j] as f64 - expected).abs() < 1e-6, "{j}: {} vs {expected}", p[j]);
        }
        // first step is lr * g / (|g| + eps): close to -lr * sign(g) for large |g|
        assert!((1.0 - p[0] as f64 - 1e-4).abs() < 1e-7);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut p = vec![0.0f32; 2];
        let mut state = AdamState::new([2], 1e-3);
        assert!(adam_step(&mut [&mut p], &[&[0.0; 3]], &mut state).is_err());
        assert_eq!(state.step_count, 0);
    }
}
