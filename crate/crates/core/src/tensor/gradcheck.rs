//! Central finite-difference checks of tape gradients in 64-bit.

use super::{Tape, TensorId};
use crate::error::Result;

/// Outcome of a gradient check over a set of inputs.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    /// Norm-wise relative error `|g_a - g_n| / (|g_a| + |g_n|)`, worst input.
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

/// Compares the analytic gradient of a scalar function against central
/// differences with step `h`.
///
/// `build` records the function on a fresh tape given one variable per entry
/// of `inputs` and returns the scalar output.
pub fn check_gradients<B>(name: &str, inputs: &[(Vec<usize>, Vec<f64>)], h: f64, tolerance: f64, build: B) -> Result<GradCheck>
where
    B: Fn(&mut Tape<f64>, &[TensorId]) -> Result<TensorId>,
{
    let eval = |values: &[Vec<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids = inputs
            .iter()
            .zip(values)
            .map(|((shape, _), v)| tape.variable(shape, v.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = build(&mut tape, &ids)?;
        Ok(tape.values(out)[0])
    };

    let mut tape = Tape::new();
    let ids = inputs
        .iter()
        .map(|(shape, v)| tape.variable(shape, v.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = build(&mut tape, &ids)?;
    let grads = tape.backward(out)?;

    let mut values: Vec<Vec<f64>> = inputs.iter().map(|(_, v)| v.clone()).collect();
    let mut worst = 0.0f64;
    for (k, id) in ids.iter().enumerate() {
        let analytic = grads.grad(*id);
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for j in 0..values[k].len() {
            let orig = values[k][j];
            values[k][j] = orig + h;
            let plus = eval(&values)?;
            values[k][j] = orig - h;
            let minus = eval(&values)?;
            values[k][j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            diff2 += (analytic[j] - numeric).powi(2);
            a2 += analytic[j].powi(2);
            n2 += numeric.powi(2);
        }
        let denom = a2.sqrt() + n2.sqrt();
        let rel = if denom == 0.0 { 0.0 } else { diff2.sqrt() / denom };
        worst = worst.max(rel);
    }
    Ok(GradCheck {
        name: name.to_string(),
        max_relative_error: worst,
        tolerance,
    })
}
