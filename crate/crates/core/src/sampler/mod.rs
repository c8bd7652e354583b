//! Sample-by-sample generation with per-sample adaptive dilation.
//!
//! Every residual block keeps a ring buffer of its own past inputs, long
//! enough for the largest offset it can be asked for. A step reads each
//! block's history at `t - d'[layer][t]`, so the time-variant offsets need no
//! queue rotation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    compute_dilation_factor, effective_receptive_field_for_factor, layer_offsets, AuxTrack, ModelConfig,
    NetworkParams, ParamLayout,
};
use crate::signal::{mulaw_decode, mulaw_encode, AudioClip, QuantizedClip, MULAW_MID_CODE};

/// Lowest F0 the default buffers are sized for.
pub const DEFAULT_MIN_F0_HZ: f64 = 10.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    #[default]
    Categorical,
    Argmax,
}

/// F0 to generate at.
#[derive(Clone, Debug, PartialEq)]
pub enum F0Contour {
    Constant(f64),
    /// One value per generated sample; the seed uses the first value.
    Track(Vec<f64>),
}

impl F0Contour {
    fn at(&self, t: usize) -> f64 {
        match self {
            F0Contour::Constant(f) => *f,
            F0Contour::Track(v) => v[t],
        }
    }

    fn min(&self) -> f64 {
        match self {
            F0Contour::Constant(f) => *f,
            F0Contour::Track(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRequest {
    pub f0: F0Contour,
    pub seconds: f64,
    /// Fed through the network before generation. Only the last
    /// effective-receptive-field worth of samples is used.
    pub seed_clip: Option<AudioClip>,
    pub sampling_mode: SamplingMode,
    pub temperature: f64,
    pub rng_seed: u64,
    /// Buffers are sized so any F0 at or above this fits.
    pub min_f0_hz: f64,
}

impl GenerationRequest {
    pub fn new(f0_hz: f64, seconds: f64) -> Self {
        GenerationRequest {
            f0: F0Contour::Constant(f0_hz),
            seconds,
            seed_clip: None,
            sampling_mode: SamplingMode::Categorical,
            temperature: 1.0,
            rng_seed: 0,
            min_f0_hz: DEFAULT_MIN_F0_HZ,
        }
    }

    fn output_len(&self, sample_rate: u32) -> usize {
        (self.seconds * sample_rate as f64).round() as usize
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if !(self.seconds > 0.0) {
            return Err(Error::config(format!("generation length {} s must be positive", self.seconds)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::config(format!("temperature {} must be positive", self.temperature)));
        }
        if let F0Contour::Track(v) = &self.f0 {
            let n = self.output_len(config.sample_rate);
            if v.len() != n {
                return Err(Error::data(format!("F0 track has {} values, generation needs {n}", v.len())));
            }
        }
        let lowest = self.f0.min();
        if !(lowest > 0.0) {
            return Err(Error::data(format!("F0 {lowest} Hz is not positive")));
        }
        if config.has_adaptive() && lowest < self.min_f0_hz {
            let need = compute_dilation_factor(lowest, config.sample_rate, config.dense_factor)?;
            let cap = compute_dilation_factor(self.min_f0_hz, config.sample_rate, config.dense_factor)?;
            if need > cap {
                return Err(Error::config(format!(
                    "F0 {lowest} Hz needs dilated factor {need} but buffers hold {cap}; minimum supported F0 is {} Hz",
                    self.min_f0_hz
                )));
            }
        }
        Ok(())
    }
}

/// Per-block ring buffers of past block inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStateBuffers {
    channels: usize,
    capacity: Vec<usize>,
    history: Vec<Vec<f32>>,
    /// Next time index to be written.
    time: usize,
    /// Code observed at `time - 1`, or the start code before any step.
    last_code: u8,
    /// Code observed at `time - 2`, if any.
    prev_code: Option<u8>,
}

impl LayerStateBuffers {
    /// Zeroed buffers able to serve every F0 at or above `min_f0_hz`.
    pub fn zeroed(config: &ModelConfig, min_f0_hz: f64) -> Result<Self> {
        let factor = if config.has_adaptive() {
            compute_dilation_factor(min_f0_hz, config.sample_rate, config.dense_factor)?
        } else {
            1
        };
        let capacity: Vec<usize> = layer_offsets(config, factor).iter().map(|d| d + 1).collect();
        let r = config.residual_channels;
        Ok(LayerStateBuffers {
            channels: r,
            history: capacity.iter().map(|&c| vec![0.0; c * r]).collect(),
            capacity,
            time: 0,
            last_code: MULAW_MID_CODE,
            prev_code: None,
        })
    }

    /// Samples consumed so far.
    pub fn time(&self) -> usize {
        self.time
    }

    pub fn capacity(&self, layer: usize) -> usize {
        self.capacity[layer]
    }

    /// Input of block `layer` at absolute time `t`, if still buffered.
    pub fn layer_input(&self, layer: usize, t: usize) -> Option<&[f32]> {
        let cap = self.capacity[layer];
        if t >= self.time || self.time - t > cap {
            return None;
        }
        let slot = t % cap;
        Some(&self.history[layer][slot * self.channels..(slot + 1) * self.channels])
    }

    fn past(&self, layer: usize, t: usize, offset: usize) -> Option<&[f32]> {
        if offset > t {
            None
        } else {
            self.layer_input(layer, t - offset)
        }
    }

    fn write(&mut self, layer: usize, t: usize, x: &[f32]) {
        let slot = t % self.capacity[layer];
        self.history[layer][slot * self.channels..(slot + 1) * self.channels].copy_from_slice(x);
    }
}

/// `out[r] += sum_c w[r * cols + c] * x[c]` for a row-major `rows x cols` matrix.
fn matvec_acc(w: &[f32], cols: usize, x: &[f32], out: &mut [f32]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        let mut acc = [0f32; 8];
        let (body, tail) = row.split_at(cols - cols % 8);
        let (xb, xt) = x.split_at(cols - cols % 8);
        for (wc, xc) in body.chunks_exact(8).zip(xb.chunks_exact(8)) {
            for k in 0..8 {
                acc[k] += wc[k] * xc[k];
            }
        }
        let mut s = acc.iter().sum::<f32>();
        for (a, b) in tail.iter().zip(xt) {
            s += a * b;
        }
        *o += s;
    }
}

fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

/// The network evaluated one time step at a time.
struct Stepper<'a> {
    params: &'a NetworkParams<f32>,
    config: &'a ModelConfig,
    layout: ParamLayout,
    x: Vec<f32>,
    u: Vec<f32>,
    z: Vec<f32>,
    skip: Vec<f32>,
    mid: Vec<f32>,
}

impl<'a> Stepper<'a> {
    fn new(params: &'a NetworkParams<f32>, config: &'a ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(config);
        let expected = NetworkParams::<f32>::zeros(config);
        if params.tensors.len() != layout.len()
            || params.tensors.iter().zip(&expected.tensors).any(|(a, b)| a.shape != b.shape)
        {
            return Err(Error::config("parameter shapes do not match the model config"));
        }
        Ok(Stepper {
            params,
            config,
            layout,
            x: vec![0.0; config.residual_channels],
            u: vec![0.0; 2 * config.gate_channels],
            z: vec![0.0; config.gate_channels],
            skip: vec![0.0; config.skip_channels],
            mid: vec![0.0; config.output_mid_channels],
        })
    }

    /// Consumes one input step. Returns the logits for the sample at the
    /// current time when `with_head` is set.
    fn step(
        &mut self,
        state: &mut LayerStateBuffers,
        offsets: &[usize],
        conditioning: &[f32],
        with_head: bool,
    ) -> Option<Vec<f32>> {
        let params: &'a NetworkParams<f32> = self.params;
        let w = |idx: usize| -> &'a [f32] { &params.tensors[idx].values };
        let t = state.time;
        let q = self.config.quantization_levels;
        let (r, g) = (self.config.residual_channels, self.config.gate_channels);
        let l = &self.layout;

        // kernel-2 causal layer over the one-hot delayed input
        let cur = w(l.causal_current);
        let prev = w(l.causal_previous);
        let bias = w(l.causal_bias);
        let c = state.last_code as usize;
        for i in 0..r {
            self.x[i] = cur[i * q + c] + bias[i];
        }
        if let Some(p) = state.prev_code {
            for i in 0..r {
                self.x[i] += prev[i * q + p as usize];
            }
        }

        if with_head {
            self.skip.fill(0.0);
        }
        for (layer, idx) in l.blocks.iter().enumerate() {
            state.write(layer, t, &self.x);
            self.u.copy_from_slice(w(idx.gate_bias));
            matvec_acc(w(idx.current), r, &self.x, &mut self.u);
            if let Some(past) = state.past(layer, t, offsets[layer]) {
                matvec_acc(w(idx.previous), r, past, &mut self.u);
            }
            matvec_acc(w(idx.conditioning), conditioning.len(), conditioning, &mut self.u);
            for k in 0..g {
                self.z[k] = self.u[k].tanh() * sigmoid(self.u[g + k]);
            }
            let rw = w(idx.residual_weight);
            let rb = w(idx.residual_bias);
            // the residual stream is only needed by later blocks
            if layer + 1 < l.blocks.len() {
                let mut res = rb.to_vec();
                matvec_acc(rw, g, &self.z, &mut res);
                for (xi, ri) in self.x.iter_mut().zip(&res) {
                    *xi += ri;
                }
            }
            if with_head {
                let mut s = w(idx.skip_bias).to_vec();
                matvec_acc(w(idx.skip_weight), g, &self.z, &mut s);
                for (acc, v) in self.skip.iter_mut().zip(&s) {
                    *acc += v;
                }
            }
        }
        state.time += 1;

        if !with_head {
            return None;
        }
        let h = l.head;
        self.skip.iter_mut().for_each(|v| *v = v.max(0.0));
        self.mid.copy_from_slice(w(h.mid_bias));
        matvec_acc(w(h.mid_weight), self.config.skip_channels, &self.skip, &mut self.mid);
        self.mid.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut logits = w(h.out_bias).to_vec();
        matvec_acc(w(h.out_weight), self.config.output_mid_channels, &self.mid, &mut logits);
        Some(logits)
    }
}

fn observe(state: &mut LayerStateBuffers, code: u8) {
    state.prev_code = Some(state.last_code);
    state.last_code = code;
}

fn offsets_at(config: &ModelConfig, f0_hz: f64) -> Result<Vec<usize>> {
    let factor = if config.has_adaptive() {
        compute_dilation_factor(f0_hz, config.sample_rate, config.dense_factor)?
    } else {
        1
    };
    Ok(layer_offsets(config, factor))
}

/// Runs the network over `seed_codes` from zeroed buffers, leaving them in
/// the state the teacher-forced pass has after the last seed sample.
///
/// `aux` supplies F0 and conditioning for every seed sample.
pub fn seed_receptive_field(
    params: &NetworkParams<f32>,
    config: &ModelConfig,
    seed_codes: &[u8],
    aux: &AuxTrack,
    min_f0_hz: f64,
) -> Result<LayerStateBuffers> {
    if seed_codes.is_empty() {
        return Err(Error::data("seed must contain at least one sample"));
    }
    if aux.len() != seed_codes.len() {
        return Err(Error::data(format!(
            "{} seed codes but {} auxiliary samples",
            seed_codes.len(),
            aux.len()
        )));
    }
    let f0 = aux.continuous_f0()?;
    let mut state = LayerStateBuffers::zeroed(config, min_f0_hz)?;
    let mut stepper = Stepper::new(params, config)?;
    let mut cond = vec![0f32; aux.aux_dim];
    for (t, &code) in seed_codes.iter().enumerate() {
        let offsets = offsets_at(config, f0[t])?;
        check_capacity(&state, &offsets, f0[t], min_f0_hz)?;
        cond.iter_mut().zip(aux.conditioning_at(t)).for_each(|(c, v)| *c = v);
        stepper.step(&mut state, &offsets, &cond, false);
        observe(&mut state, code);
    }
    Ok(state)
}

fn check_capacity(state: &LayerStateBuffers, offsets: &[usize], f0: f64, min_f0_hz: f64) -> Result<()> {
    for (layer, &d) in offsets.iter().enumerate() {
        if d >= state.capacity(layer) {
            return Err(Error::config(format!(
                "F0 {f0} Hz needs offset {d} in block {layer}, buffer holds {}; minimum supported F0 is {min_f0_hz} Hz",
                state.capacity(layer) - 1
            )));
        }
    }
    Ok(())
}

/// Longest effective receptive field over the F0 values of a request.
pub fn seed_length(config: &ModelConfig, f0: &F0Contour) -> Result<usize> {
    if !config.has_adaptive() {
        return Ok(effective_receptive_field_for_factor(config, 1));
    }
    let factor = compute_dilation_factor(f0.min(), config.sample_rate, config.dense_factor)?;
    Ok(effective_receptive_field_for_factor(config, factor))
}

/// Everything a generation produced, for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationTrace {
    /// Seed codes actually fed to the network.
    pub seed_codes: Vec<u8>,
    /// Generated codes.
    pub codes: Vec<u8>,
    /// Logits behind each generated code.
    pub logits: Vec<Vec<f32>>,
    /// F0 and conditioning over seed followed by generated samples.
    pub aux: AuxTrack,
}

fn draw(logits: &[f32], mode: SamplingMode, temperature: f64, rng: &mut ChaCha8Rng) -> u8 {
    match mode {
        SamplingMode::Argmax => {
            let mut best = 0;
            for (i, &v) in logits.iter().enumerate() {
                if v > logits[best] {
                    best = i;
                }
            }
            best as u8
        }
        SamplingMode::Categorical => {
            let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
            let weights: Vec<f64> = logits.iter().map(|&v| ((v as f64 - max) / temperature).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (i, w) in weights.iter().enumerate() {
                u -= w;
                if u < 0.0 {
                    return i as u8;
                }
            }
            (weights.len() - 1) as u8
        }
    }
}

/// Generates and keeps the per-step logits.
pub fn generate_trace(
    params: &NetworkParams<f32>,
    config: &ModelConfig,
    request: &GenerationRequest,
) -> Result<GenerationTrace> {
    request.validate(config)?;
    let n = request.output_len(config.sample_rate);
    let scale = config.f0_scale_hz;
    let first_f0 = request.f0.at(0);

    let seed_codes = match &request.seed_clip {
        Some(clip) if !clip.is_empty() => {
            if clip.sample_rate != config.sample_rate {
                return Err(Error::data(format!(
                    "seed clip is {} Hz, model runs at {} Hz",
                    clip.sample_rate, config.sample_rate
                )));
            }
            let keep = seed_length(config, &request.f0)?.min(clip.len());
            let tail = AudioClip::new(clip.samples[clip.len() - keep..].to_vec(), clip.sample_rate);
            mulaw_encode(&tail)?.codes
        }
        _ => Vec::new(),
    };
    let s = seed_codes.len();

    let f0_all: Vec<f64> = (0..s).map(|_| first_f0).chain((0..n).map(|t| request.f0.at(t))).collect();
    let aux = AuxTrack {
        conditioning: f0_all.iter().map(|&f| (f / scale) as f32).collect(),
        voiced: vec![true; f0_all.len()],
        f0: f0_all,
        aux_dim: 1,
    };
    if config.aux_dim != 1 {
        return Err(Error::config(format!(
            "generation conditions on F0 only, model expects {} aux channels",
            config.aux_dim
        )));
    }

    let mut state = if s > 0 {
        seed_receptive_field(params, config, &seed_codes, &aux.slice(0, s), request.min_f0_hz)?
    } else {
        LayerStateBuffers::zeroed(config, request.min_f0_hz)?
    };
    let mut stepper = Stepper::new(params, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(request.rng_seed);
    let mut codes = Vec::with_capacity(n);
    let mut logits_out = Vec::with_capacity(n);
    for t in s..s + n {
        let f0 = aux.f0[t];
        let offsets = offsets_at(config, f0)?;
        check_capacity(&state, &offsets, f0, request.min_f0_hz)?;
        let logits = stepper
            .step(&mut state, &offsets, &[aux.conditioning[t]], true)
            .expect("head requested");
        let code = draw(&logits, request.sampling_mode, request.temperature, &mut rng);
        observe(&mut state, code);
        codes.push(code);
        logits_out.push(logits);
    }
    Ok(GenerationTrace {
        seed_codes,
        codes,
        logits: logits_out,
        aux,
    })
}

/// Generates `round(seconds * fs)` samples.
pub fn generate(params: &NetworkParams<f32>, config: &ModelConfig, request: &GenerationRequest) -> Result<AudioClip> {
    let trace = generate_trace(params, config, request)?;
    Ok(mulaw_decode(&QuantizedClip {
        codes: trace.codes,
        sample_rate: config.sample_rate,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_dilation_plan, forward_teacher_forced, predict_logits, MacroblockSpec, ModelKind, Profile};
    use crate::signal::synth_sinusoid;
    use crate::tensor::Tape;

    fn small(kind: ModelKind) -> ModelConfig {
        let mut c = ModelConfig::preset(kind, Profile::Desk, 8);
        c.residual_channels = 8;
        c.gate_channels = 8;
        c.skip_channels = 8;
        c.output_mid_channels = 6;
        c.macroblocks = match kind {
            ModelKind::QPNet => vec![MacroblockSpec::fixed(1, 3), MacroblockSpec::adaptive(1, 3)],
            _ => vec![MacroblockSpec::adaptive(2, 3)],
        };
        c
    }

    fn lively_params(c: &ModelConfig, seed: u64) -> NetworkParams<f32> {
        let mut p = NetworkParams::init(c, seed);
        let out = ParamLayout::new(c).head.out_weight;
        p.tensors[out].values.iter_mut().enumerate().for_each(|(i, v)| *v = ((i as f32) * 0.61).sin());
        p
    }

    fn close(a: &[f32], b: &[f32]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-5 * x.abs().max(y.abs()).max(1.0))
    }

    #[test]
    fn incremental_matches_full_forward() {
        let c = small(ModelKind::QPNet);
        let p = lively_params(&c, 3);
        let seed = synth_sinusoid(150.0, 0.02, 22_050, 0.3, 0.5).unwrap();
        let req = GenerationRequest {
            seed_clip: Some(seed),
            rng_seed: 9,
            ..GenerationRequest::new(150.0, 500.0 / 22_050.0)
        };
        let trace = generate_trace(&p, &c, &req).unwrap();
        assert_eq!(trace.codes.len(), 500);
        let all: Vec<u8> = trace.seed_codes.iter().chain(&trace.codes).copied().collect();
        let plan = build_dilation_plan(&c, &trace.aux).unwrap();
        let full = predict_logits(&p, &c, &all, &trace.aux, &plan).unwrap();
        let s = trace.seed_codes.len();
        for (t, logits) in trace.logits.iter().enumerate() {
            assert!(close(logits, &full[s + t]), "step {t}");
        }
    }

    #[test]
    fn seeded_buffers_match_teacher_forced_layer_inputs() {
        let c = small(ModelKind::PQPNet);
        let p = lively_params(&c, 5);
        let clip = synth_sinusoid(220.0, 0.01, 22_050, 1.0, 0.5).unwrap();
        let codes = mulaw_encode(&clip).unwrap().codes;
        let aux = AuxTrack::constant(220.0, codes.len(), 400.0);
        let state = seed_receptive_field(&p, &c, &codes, &aux, 10.0).unwrap();
        let mut tape = Tape::new();
        let pass = forward_teacher_forced(&mut tape, &p, &c, &codes, &aux, false).unwrap();
        let t_last = codes.len() - 1;
        for (layer, &id) in pass.layer_inputs.iter().enumerate() {
            let full = tape.tensor(id).column(t_last);
            let buffered = state.layer_input(layer, t_last).unwrap();
            assert!(close(&full, buffered), "layer {layer}");
        }
    }

    #[test]
    fn phase_changes_seeded_state() {
        let c = small(ModelKind::PQPNet);
        let p = lively_params(&c, 5);
        let seeded = |phase| {
            let clip = synth_sinusoid(200.0, 0.01, 22_050, phase, 0.5).unwrap();
            let codes = mulaw_encode(&clip).unwrap().codes;
            seed_receptive_field(&p, &c, &codes, &AuxTrack::constant(200.0, codes.len(), 400.0), 10.0).unwrap()
        };
        assert_ne!(seeded(0.0), seeded(1.3));
    }

    #[test]
    fn zero_buffers_and_empty_seed() {
        let c = small(ModelKind::PQPNet);
        let state = LayerStateBuffers::zeroed(&c, 10.0).unwrap();
        assert_eq!(state.time(), 0);
        assert!(state.history.iter().all(|h| h.iter().all(|&v| v == 0.0)));
        let p = NetworkParams::init(&c, 1);
        let err = seed_receptive_field(&p, &c, &[], &AuxTrack::constant(100.0, 0, 400.0), 10.0);
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn argmax_is_deterministic_and_lengths_exact() {
        let c = small(ModelKind::PQPNet);
        let p = lively_params(&c, 2);
        let req = GenerationRequest {
            sampling_mode: SamplingMode::Argmax,
            seed_clip: Some(synth_sinusoid(300.0, 0.01, 22_050, 0.0, 0.5).unwrap()),
            ..GenerationRequest::new(300.0, 0.0101)
        };
        let a = generate(&p, &c, &req).unwrap();
        let b = generate(&p, &c, &GenerationRequest { rng_seed: 77, ..req.clone() }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), (0.0101f64 * 22_050.0).round() as usize);
        assert!(a.samples.iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn categorical_depends_on_seed() {
        let c = small(ModelKind::PQPNet);
        let p = lively_params(&c, 2);
        let req = GenerationRequest::new(300.0, 0.005);
        let a = generate(&p, &c, &req).unwrap();
        assert_eq!(a, generate(&p, &c, &req).unwrap());
        assert_ne!(a, generate(&p, &c, &GenerationRequest { rng_seed: 1, ..req }).unwrap());
    }

    #[test]
    fn unit_factor_matches_fixed_network() {
        let c = small(ModelKind::QPNet);
        let fixed = c.as_fixed();
        let p = lively_params(&c, 8);
        // 22050 / (400 * 8) rounds to 7, so use a dense factor that forces 1
        let mut c1 = c.clone();
        c1.dense_factor = 64;
        let req = GenerationRequest {
            sampling_mode: SamplingMode::Argmax,
            seed_clip: Some(synth_sinusoid(400.0, 0.01, 22_050, 0.4, 0.5).unwrap()),
            ..GenerationRequest::new(400.0, 0.01)
        };
        let a = generate_trace(&p, &c1, &req).unwrap();
        let b = generate_trace(&p, &fixed, &req).unwrap();
        assert_eq!(a.codes, b.codes);
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn low_f0_beyond_capacity_names_minimum() {
        let c = small(ModelKind::PQPNet);
        let p = NetworkParams::init(&c, 1);
        let req = GenerationRequest {
            min_f0_hz: 100.0,
            ..GenerationRequest::new(20.0, 0.01)
        };
        let err = generate(&p, &c, &req).unwrap_err().to_string();
        assert!(err.contains("minimum supported F0 is 100 Hz"), "{err}");
    }

    #[test]
    fn bad_requests_are_rejected() {
        let c = small(ModelKind::PQPNet);
        let p = NetworkParams::init(&c, 1);
        assert!(generate(&p, &c, &GenerationRequest::new(100.0, 0.0)).is_err());
        let hot = GenerationRequest {
            temperature: 0.0,
            ..GenerationRequest::new(100.0, 0.01)
        };
        assert!(generate(&p, &c, &hot).is_err());
    }

    #[test]
    fn seed_length_follows_effective_receptive_field() {
        let c = ModelConfig::preset(ModelKind::PQPNet, Profile::Desk, 8);
        // 22050 / (100 * 8) = 27.56 -> 28; 4 chunks of 15 taps
        assert_eq!(seed_length(&c, &F0Contour::Constant(100.0)).unwrap(), 1 + 60 * 28);
        let w = ModelConfig::preset(ModelKind::WNc, Profile::Desk, 8);
        assert_eq!(seed_length(&w, &F0Contour::Constant(100.0)).unwrap(), 61);
    }
}
