use std::collections::hash_map::DefaultHasher;
use std::f64::consts::TAU;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::report::{band_group_metrics, Band, EvalReport, RunSummary, UtteranceRow};
use super::spec::{run_label, ExperimentSpec};
use crate::error::{Error, Result};
use crate::model::{param_count, ModelConfig, ModelKind, NetworkParams};
use crate::sampler::{generate, seed_length, F0Contour, GenerationRequest};
use crate::signal::{add_noise_snr, estimate_snr, periodogram, psd_peak_hz, synth_sinusoid, DEFAULT_PEAK_FLOOR_HZ};
use crate::training::{
    build_item, build_sinusoid_dataset, load_checkpoint, save_checkpoint, train, Checkpoint, DatasetItem, DatasetSpec,
    TrainingConfig,
};

/// Independent 64-bit seed for stream `stream` of `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.random()
}

/// A trained network and how it was obtained.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub params: NetworkParams<f32>,
    pub summary: RunSummary,
    pub loss_history: Vec<(usize, f64)>,
}

fn fingerprint(config: &ModelConfig, dataset: &DatasetSpec, training: &TrainingConfig, seed: u64) -> String {
    let mut training = training.clone();
    training.checkpoint_dir = None;
    training.checkpoint_every_steps = None;
    let text = serde_json::to_string(&(env!("CARGO_PKG_VERSION"), config, dataset, &training, seed)).expect("serializable");
    let mut h = DefaultHasher::new();
    text.hash(&mut h);
    format!("{:016x}", h.finish())
}

/// Clean-conditioning utterance outside the training set.
pub fn heldout_item(dataset: &DatasetSpec) -> Result<DatasetItem> {
    let spec = DatasetSpec {
        aux_noise_amplitude: 0.0,
        ..dataset.clone()
    };
    build_item(&spec, dataset.utterances)
}

/// Trains one model, or loads it from the cache when an identical run exists.
///
/// Divergence is reported in the summary status rather than as an error.
pub fn train_model(
    spec: &ExperimentSpec,
    kind: ModelKind,
    config: &ModelConfig,
    data: &[DatasetItem],
    out_dir: Option<&Path>,
) -> Result<TrainedModel> {
    let label = run_label(config, kind);
    let training = spec.training_for(&label);
    let dense_factor = config.has_adaptive().then_some(config.dense_factor);
    let mut summary = RunSummary {
        label: label.clone(),
        model: kind.name().to_string(),
        dense_factor,
        parameters: param_count(config),
        status: "ok".into(),
        steps: 0,
        final_train_loss: None,
        heldout_loss: None,
        from_cache: false,
        train_seconds: None,
        eval_seconds: None,
    };

    let cache_path = spec
        .cache_dir
        .as_ref()
        .map(|d| d.join(format!("{label}_{}.qpnt", fingerprint(config, &spec.dataset, &training, spec.seed))));
    if let Some(path) = cache_path.as_ref().filter(|p| p.exists()) {
        let ckpt = load_checkpoint(path)?;
        info!("{label}: loaded from {}", path.display());
        if let Some(saved) = read_cached_summary(&path.with_extension("json")) {
            summary = saved;
        }
        summary.from_cache = true;
        summary.steps = ckpt.step as usize;
        return Ok(TrainedModel {
            kind,
            config: ckpt.config,
            params: ckpt.params,
            summary,
            loss_history: Vec::new(),
        });
    }

    info!("{label}: training {} parameters for {} epochs", summary.parameters, training.epochs);
    let params = NetworkParams::init(config, spec.seed);
    let heldout = heldout_item(&spec.dataset)?;
    let started = Instant::now();
    let outcome = match train(params, config, &training, data, Some(&heldout)) {
        Ok(o) => o,
        Err(e @ Error::Diverged { .. }) => {
            summary.status = format!("failed: {e}");
            info!("{label}: {}", summary.status);
            return Ok(TrainedModel {
                kind,
                config: config.clone(),
                params: NetworkParams::zeros(config),
                summary,
                loss_history: Vec::new(),
            });
        }
        Err(e) => return Err(e),
    };
    let tail = &outcome.loss_history[outcome.loss_history.len().saturating_sub(50)..];
    summary.steps = outcome.loss_history.len();
    summary.final_train_loss = (!tail.is_empty()).then(|| tail.iter().map(|(_, l)| l).sum::<f64>() / tail.len() as f64);
    summary.heldout_loss = outcome.heldout_loss;
    summary.train_seconds = Some(started.elapsed().as_secs_f64());
    info!(
        "{label}: final loss {:?}, held-out {:?}",
        summary.final_train_loss, summary.heldout_loss
    );

    let ckpt = Checkpoint {
        config: config.clone(),
        params: outcome.params.clone(),
        adam: Some(outcome.adam.clone()),
        step: outcome.adam.step_count,
    };
    if let Some(path) = &cache_path {
        save_checkpoint(path, &ckpt)?;
        let side = path.with_extension("json");
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    }
    if let Some(dir) = out_dir {
        let run_dir = dir.join("runs").join(&label);
        save_checkpoint(run_dir.join("final.qpnt"), &ckpt)?;
        write_loss_history(&run_dir.join("loss.csv"), &outcome.loss_history)?;
    }
    Ok(TrainedModel {
        kind,
        config: config.clone(),
        params: outcome.params,
        summary,
        loss_history: outcome.loss_history,
    })
}

fn read_cached_summary(path: &Path) -> Option<RunSummary> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// `step,loss` CSV.
pub fn write_loss_history(path: &Path, history: &[(usize, f64)]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = String::from("step,loss\n");
    for (s, l) in history {
        text.push_str(&format!("{s},{l}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Generates and scores one test utterance.
fn score_utterance(
    spec: &ExperimentSpec,
    model: &TrainedModel,
    f0: f64,
    phase_index: usize,
    stream: u64,
    keep_audio: bool,
) -> Result<UtteranceRow> {
    let e = &spec.evaluation;
    let fs = model.config.sample_rate;
    let phase = TAU * phase_index as f64 / e.phases_per_f0 as f64;
    let seed_len = seed_length(&model.config, &F0Contour::Constant(f0))?;
    let clean = synth_sinusoid(f0, seed_len as f64 / fs as f64, fs, phase, e.amplitude)?;
    let noisy = add_noise_snr(&clean, e.seed_snr_db, derive_seed(spec.seed, 2 * stream))?;
    let lowest = e.test_f0s.iter().copied().fold(f64::INFINITY, f64::min);
    let request = GenerationRequest {
        f0: F0Contour::Constant(f0),
        seconds: e.seconds,
        seed_clip: Some(noisy),
        sampling_mode: e.sampling_mode,
        temperature: e.temperature,
        rng_seed: derive_seed(spec.seed, 2 * stream + 1),
        min_f0_hz: lowest,
    };
    let audio = generate(&model.params, &model.config, &request)?;
    let snr = estimate_snr(&audio, None)?;
    let measured = periodogram(&audio).and_then(|p| psd_peak_hz(&p, DEFAULT_PEAK_FLOOR_HZ));
    let (measured_f0_hz, tone_detected) = match measured {
        Ok(f) if f > 0.0 => (f, true),
        _ => (DEFAULT_PEAK_FLOOR_HZ, false),
    };
    let (lower, upper) = spec.dataset.f0_range();
    Ok(UtteranceRow {
        profile: spec.profile.name().to_string(),
        model: model.kind.name().to_string(),
        dense_factor: model.summary.dense_factor,
        f0_hz: f0,
        phase_index,
        band: Band::classify(f0, lower, upper),
        snr_db: snr.snr_db,
        measured_f0_hz,
        log_f0_error: measured_f0_hz.ln() - f0.ln(),
        tone_detected,
        audio: keep_audio.then_some(audio),
    })
}

/// Runs the whole test grid through one model, utterances in parallel.
pub fn evaluate_model(spec: &ExperimentSpec, model: &TrainedModel) -> Result<Vec<UtteranceRow>> {
    let e = &spec.evaluation;
    let keep_audio = e.write_psd || e.write_wavs;
    let jobs: Vec<(usize, f64, usize)> = e
        .test_f0s
        .iter()
        .enumerate()
        .flat_map(|(i, &f)| (0..e.phases_per_f0).map(move |k| (i * e.phases_per_f0 + k, f, k)))
        .collect();
    info!("{}: generating {} test utterances", model.summary.label, jobs.len());
    jobs.par_iter()
        .map(|&(idx, f0, k)| score_utterance(spec, model, f0, k, idx as u64, keep_audio))
        .collect()
}

fn report_for(spec: &ExperimentSpec, models: Vec<TrainedModel>) -> Result<EvalReport> {
    let (lower, upper) = spec.dataset.f0_range();
    let mut report = EvalReport {
        profile: spec.profile.name().to_string(),
        train_range_hz: (lower, upper),
        ..EvalReport::default()
    };
    for mut model in models {
        if model.summary.status == "ok" {
            let started = Instant::now();
            report.rows.extend(evaluate_model(spec, &model)?);
            model.summary.eval_seconds = Some(started.elapsed().as_secs_f64());
        }
        report.runs.push(model.summary);
    }
    report.groups = band_group_metrics(&report.rows, lower, upper);
    Ok(report)
}

fn train_all(
    spec: &ExperimentSpec,
    runs: &[(ModelKind, ModelConfig)],
    out_dir: Option<&Path>,
) -> Result<Vec<TrainedModel>> {
    let needs_data = runs.iter().any(|(kind, config)| {
        spec.cache_dir.as_ref().is_none_or(|d| {
            let label = run_label(config, *kind);
            let training = spec.training_for(&label);
            !d.join(format!("{label}_{}.qpnt", fingerprint(config, &spec.dataset, &training, spec.seed)))
                .exists()
        })
    });
    let data = if needs_data {
        info!("building {} training utterances", spec.dataset.utterances);
        build_sinusoid_dataset(&spec.dataset)?
    } else {
        Vec::new()
    };
    let mut models = Vec::with_capacity(runs.len());
    for (kind, config) in runs {
        models.push(train_model(spec, *kind, config, &data, out_dir)?);
    }
    Ok(models)
}

/// Trains one pQPNet per dense factor and scores each on the test grid.
pub fn run_dense_sweep(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<EvalReport> {
    spec.validate()?;
    if spec.dense_factors.is_empty() {
        return Err(Error::config("dense-factor list is empty"));
    }
    let runs: Vec<_> = spec
        .dense_factors
        .iter()
        .map(|&a| (ModelKind::PQPNet, spec.model_config(ModelKind::PQPNet, a)))
        .collect();
    let models = train_all(spec, &runs, out_dir)?;
    report_for(spec, models)
}

/// Trains every roster model with shared data and seeds and scores them on
/// the same test grid.
pub fn run_model_comparison(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<EvalReport> {
    spec.validate()?;
    if spec.models.is_empty() {
        return Err(Error::config("model roster is empty"));
    }
    let runs: Vec<_> = spec
        .models
        .iter()
        .map(|&k| (k, spec.model_config(k, spec.comparison_dense_factor)))
        .collect();
    let models = train_all(spec, &runs, out_dir)?;
    report_for(spec, models)
}

/// Scores an already trained model.
pub fn evaluate_checkpoint(spec: &ExperimentSpec, kind: ModelKind, ckpt: Checkpoint) -> Result<EvalReport> {
    spec.validate()?;
    let summary = RunSummary {
        label: run_label(&ckpt.config, kind),
        model: kind.name().to_string(),
        dense_factor: ckpt.config.has_adaptive().then_some(ckpt.config.dense_factor),
        parameters: param_count(&ckpt.config),
        status: "ok".into(),
        steps: ckpt.step as usize,
        final_train_loss: None,
        heldout_loss: None,
        from_cache: false,
        train_seconds: None,
        eval_seconds: None,
    };
    report_for(
        spec,
        vec![TrainedModel {
            kind,
            config: ckpt.config,
            params: ckpt.params,
            summary,
            loss_history: Vec::new(),
        }],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MacroblockSpec;

    fn tiny_spec() -> ExperimentSpec {
        let mut s = ExperimentSpec::default();
        s.dataset.utterances = 3;
        s.dataset.seconds_per_utterance = 0.05;
        s.training.batch_length_samples = 400;
        s.training.epochs = 1;
        s.training.learning_rate = 1e-3;
        s.evaluation.test_f0s = vec![40.0, 200.0, 700.0];
        s.evaluation.phases_per_f0 = 2;
        s.evaluation.seconds = 0.05;
        let mut small = ModelConfig::preset(ModelKind::PQPNet, s.profile, 8);
        small.macroblocks = vec![MacroblockSpec::adaptive(1, 2)];
        small.residual_channels = 4;
        small.gate_channels = 4;
        small.skip_channels = 4;
        small.output_mid_channels = 4;
        s.model_overrides.insert("pQPNet".into(), small.clone());
        small.macroblocks = vec![MacroblockSpec::fixed(1, 2)];
        s.model_overrides.insert("WNc".into(), small);
        s
    }

    #[test]
    fn single_factor_sweep_has_one_group() {
        let mut s = tiny_spec();
        s.dense_factors = vec![4];
        let r = run_dense_sweep(&s, None).unwrap();
        assert_eq!(r.runs.len(), 1);
        assert_eq!(r.rows.len(), 6);
        assert!(r.groups.iter().all(|g| g.model == "pQPNet" && g.dense_factor == Some(4)));
        assert_eq!(r.groups.last().unwrap().band, Band::Average);
    }

    #[test]
    fn comparison_covers_grid_once_per_model() {
        let s = tiny_spec();
        let r = run_model_comparison(&s, None).unwrap();
        for model in ["WNc", "pQPNet"] {
            let mut seen: Vec<(u64, usize)> = r
                .rows
                .iter()
                .filter(|row| row.model == model)
                .map(|row| (row.f0_hz.to_bits(), row.phase_index))
                .collect();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), 6);
        }
        assert_eq!(r.group("WNc", None, Band::Inside).unwrap().n, 2);
    }

    #[test]
    fn cache_reuses_trained_model() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = tiny_spec();
        s.dense_factors = vec![8];
        s.cache_dir = Some(dir.path().to_path_buf());
        let a = run_dense_sweep(&s, None).unwrap();
        let b = run_dense_sweep(&s, None).unwrap();
        assert!(!a.runs[0].from_cache && b.runs[0].from_cache);
        assert_eq!(format!("{:?}", a.groups), format!("{:?}", b.groups));
        assert!(a.runs[0].train_seconds.is_some());
        assert_eq!(a.runs[0].train_seconds, b.runs[0].train_seconds);
        assert_eq!(a.runs[0].final_train_loss, b.runs[0].final_train_loss);
    }

    #[test]
    fn divergence_marks_run_failed_and_continues() {
        let mut s = tiny_spec();
        s.dense_factors = vec![2, 8];
        s.training.learning_rate = 1e300;
        let r = run_dense_sweep(&s, None).unwrap();
        assert_eq!(r.runs.len(), 2);
        assert!(r.runs.iter().all(|run| run.status.starts_with("failed")), "{:?}", r.runs);
        assert!(r.rows.is_empty());
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(3, 5), derive_seed(3, 5));
    }
}
