use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::tensor::Scalar;

/// A named trainable buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<F>,
}

/// Parameter slots of one residual block, in storage order.
pub const BLOCK_SLOTS: usize = 8;
const CAUSAL_SLOTS: usize = 3;

/// Index of each buffer inside [`NetworkParams::tensors`].
#[derive(Clone, Copy, Debug)]
pub struct BlockIndex {
    /// `2G x R`: filter rows then gate rows, applied to the current sample.
    pub current: usize,
    /// `2G x R`, applied to the sample `d'` steps back.
    pub previous: usize,
    /// `2G x A`, auxiliary conditioning.
    pub conditioning: usize,
    /// `2G`
    pub gate_bias: usize,
    /// `R x G`
    pub residual_weight: usize,
    pub residual_bias: usize,
    /// `S x G`
    pub skip_weight: usize,
    pub skip_bias: usize,
}

impl BlockIndex {
    fn new(block: usize) -> Self {
        let b = CAUSAL_SLOTS + block * BLOCK_SLOTS;
        BlockIndex {
            current: b,
            previous: b + 1,
            conditioning: b + 2,
            gate_bias: b + 3,
            residual_weight: b + 4,
            residual_bias: b + 5,
            skip_weight: b + 6,
            skip_bias: b + 7,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HeadIndex {
    pub mid_weight: usize,
    pub mid_bias: usize,
    pub out_weight: usize,
    pub out_bias: usize,
}

/// Layout of the flat parameter list for a config.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    pub causal_current: usize,
    pub causal_previous: usize,
    pub causal_bias: usize,
    pub blocks: Vec<BlockIndex>,
    pub head: HeadIndex,
}

impl ParamLayout {
    pub fn new(config: &ModelConfig) -> Self {
        let n = config.num_blocks();
        let h = CAUSAL_SLOTS + n * BLOCK_SLOTS;
        ParamLayout {
            causal_current: 0,
            causal_previous: 1,
            causal_bias: 2,
            blocks: (0..n).map(BlockIndex::new).collect(),
            head: HeadIndex {
                mid_weight: h,
                mid_bias: h + 1,
                out_weight: h + 2,
                out_bias: h + 3,
            },
        }
    }

    /// Number of parameter buffers.
    pub fn len(&self) -> usize {
        self.head.out_bias + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `(name, shape, init std)` of every buffer. A zero std means zero init.
fn specs(config: &ModelConfig) -> Vec<(String, Vec<usize>, f64)> {
    let r = config.residual_channels;
    let g = config.gate_channels;
    let s = config.skip_channels;
    let m = config.output_mid_channels;
    let a = config.aux_dim;
    let q = config.quantization_levels;
    let blocks = config.num_blocks();
    // residual and skip outputs are summed over all blocks
    let sum_std = 1.0 / ((g * blocks) as f64).sqrt();

    let mut out = vec![
        ("causal.current".to_string(), vec![r, q], 0.5f64.sqrt()),
        ("causal.previous".to_string(), vec![r, q], 0.5f64.sqrt()),
        ("causal.bias".to_string(), vec![r], 0.0),
    ];
    for b in 0..blocks {
        out.extend([
            (format!("block{b}.current"), vec![2 * g, r], 1.0 / ((2 * r) as f64).sqrt()),
            (format!("block{b}.previous"), vec![2 * g, r], 1.0 / ((2 * r) as f64).sqrt()),
            (format!("block{b}.conditioning"), vec![2 * g, a], 1.0 / (a as f64).sqrt()),
            (format!("block{b}.gate_bias"), vec![2 * g], 0.0),
            (format!("block{b}.residual_weight"), vec![r, g], sum_std),
            (format!("block{b}.residual_bias"), vec![r], 0.0),
            (format!("block{b}.skip_weight"), vec![s, g], sum_std),
            (format!("block{b}.skip_bias"), vec![s], 0.0),
        ]);
    }
    out.extend([
        ("head.mid_weight".to_string(), vec![m, s], 1.0 / (s as f64).sqrt()),
        ("head.mid_bias".to_string(), vec![m], 0.0),
        // zero output layer: the initial prediction is uniform
        ("head.out_weight".to_string(), vec![q, m], 0.0),
        ("head.out_bias".to_string(), vec![q], 0.0),
    ]);
    out
}

/// Number of trainable scalars; a pure function of the config.
pub fn param_count(config: &ModelConfig) -> usize {
    specs(config).iter().map(|(_, shape, _)| shape.iter().product::<usize>()).sum()
}

/// All trainable weights of a network, in [`ParamLayout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<F> {
    pub tensors: Vec<ParamTensor<F>>,
}

impl<F: Scalar> NetworkParams<F> {
    /// Seeded random initialization.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = specs(config)
            .into_iter()
            .map(|(name, shape, std)| {
                let n: usize = shape.iter().product();
                let values = if std == 0.0 {
                    vec![F::zero(); n]
                } else {
                    let dist = Normal::new(0.0, std).expect("finite std");
                    (0..n).map(|_| F::from_f64(dist.sample(&mut rng))).collect()
                };
                ParamTensor { name, shape, values }
            })
            .collect();
        NetworkParams { tensors }
    }

    /// Every buffer zero, including the output layer.
    pub fn zeros(config: &ModelConfig) -> Self {
        let tensors = specs(config)
            .into_iter()
            .map(|(name, shape, _)| {
                let n = shape.iter().product();
                ParamTensor {
                    name,
                    shape,
                    values: vec![F::zero(); n],
                }
            })
            .collect();
        NetworkParams { tensors }
    }

    /// Rebuilds from raw buffers, checking them against the config's shapes.
    pub fn from_buffers(config: &ModelConfig, buffers: Vec<Vec<F>>) -> crate::Result<Self> {
        let specs = specs(config);
        if specs.len() != buffers.len() {
            return Err(crate::Error::config(format!(
                "config needs {} parameter buffers, got {}",
                specs.len(),
                buffers.len()
            )));
        }
        let tensors = specs
            .into_iter()
            .zip(buffers)
            .map(|((name, shape, _), values)| {
                let n: usize = shape.iter().product();
                if values.len() != n {
                    return Err(crate::Error::config(format!(
                        "parameter {name} needs {n} values, got {}",
                        values.len()
                    )));
                }
                Ok(ParamTensor { name, shape, values })
            })
            .collect::<crate::Result<Vec<_>>>()?;
        Ok(NetworkParams { tensors })
    }

    pub fn values(&self, idx: usize) -> &[F] {
        &self.tensors[idx].values
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.values.len()).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.values.len()).collect()
    }

    /// Converts every buffer to another precision.
    pub fn cast<G: Scalar>(&self) -> NetworkParams<G> {
        NetworkParams {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    values: t.values.iter().map(|v| G::from_f64(Scalar::to_f64(*v))).collect(),
                })
                .collect(),
        }
    }
}
