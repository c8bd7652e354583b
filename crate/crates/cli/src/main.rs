use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qpnet::experiments::{
    emit_report, evaluate_checkpoint, gradient_check_suite, run_dense_sweep, run_label, run_model_comparison,
    train_model, EvalReport, ExperimentSpec,
};
use qpnet::model::{
    compute_dilation_factor, effective_receptive_field_for_factor, receptive_field_length, ModelKind, Profile,
};
use qpnet::sampler::{generate, F0Contour, GenerationRequest, SamplingMode};
use qpnet::signal::{estimate_snr, periodogram, psd_peak_hz, read_wav, write_wav, DEFAULT_PEAK_FLOOR_HZ};
use qpnet::training::{build_sinusoid_dataset, load_checkpoint};
use qpnet::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "qpnet", version, about = "Pitch-adaptive autoregressive waveform models and the sinusoid study")]
struct Cli {
    /// JSON experiment config; omitted fields keep the profile defaults.
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,

    /// Overrides the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out_dir: PathBuf,

    #[arg(long, global = true, value_parser = parse_profile)]
    profile: Option<Profile>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model on the synthetic sinusoid corpus.
    Train(TrainArgs),
    /// Generate audio from a checkpoint.
    Generate(GenerateArgs),
    /// Score a checkpoint on the test grid.
    Eval(EvalArgs),
    /// Train and score pQPNet at several dense factors.
    SweepDense(SweepArgs),
    /// Train and score a roster of models side by side.
    CompareModels(CompareArgs),
    /// Run the finite-difference gradient checks.
    Gradcheck,
    /// Print receptive-field tables.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_parser = parse_kind, default_value = "pQPNet")]
    model: ModelKind,
    #[arg(long)]
    dense_factor: Option<u32>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    f0: f64,
    #[arg(long, default_value_t = 1.0)]
    seconds: f64,
    /// WAV whose tail seeds the receptive field.
    #[arg(long)]
    seed_wav: Option<PathBuf>,
    #[arg(long)]
    argmax: bool,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Defaults to `<out-dir>/generated.wav`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    model: ModelKind,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Comma-separated dense factors.
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<u32>>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Comma-separated model names.
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    models: Option<Vec<ModelKind>>,
    #[arg(long)]
    dense_factor: Option<u32>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Only this model; all presets otherwise.
    #[arg(long, value_parser = parse_kind)]
    model: Option<ModelKind>,
    #[arg(long)]
    dense_factor: Option<u32>,
    /// F0 values for the effective receptive field columns.
    #[arg(long, value_delimiter = ',', default_value = "10,40,80,400,800")]
    f0: Vec<f64>,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_profile(s: &str) -> std::result::Result<Profile, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_spec(cli: &Cli) -> Result<ExperimentSpec> {
    let mut spec = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            ExperimentSpec::from_json(&text, cli.profile)?
        }
        None => ExperimentSpec::for_profile(cli.profile.unwrap_or(Profile::Desk)),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn print_report(report: &EvalReport) {
    println!("{:<8} {:>5} {:<14} {:>9} {:>9} {:>5}", "model", "a", "band", "snr_db", "logf0", "n");
    for g in &report.groups {
        let a = g.dense_factor.map_or_else(|| "-".to_string(), |a| a.to_string());
        println!(
            "{:<8} {:>5} {:<14} {:>9.2} {:>9.3} {:>5}",
            g.model,
            a,
            g.band.name(),
            g.mean_snr_db,
            g.mean_logf0_rmse,
            g.n
        );
    }
}

fn finish_report(spec: &ExperimentSpec, report: &EvalReport, out_dir: &Path) -> Result<()> {
    let e = &spec.evaluation;
    let paths = emit_report(report, out_dir, e.write_psd.then_some(e.psd_max_hz), e.write_wavs)?;
    print_report(report);
    println!("summary: {}", paths.summary.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(args) => {
            let mut spec = load_spec(cli)?;
            let a = args.dense_factor.unwrap_or(spec.comparison_dense_factor);
            let config = spec.model_config(args.model, a);
            if let Some(epochs) = args.epochs {
                spec.epoch_overrides.insert(run_label(&config, args.model), epochs);
            }
            let data = build_sinusoid_dataset(&spec.dataset)?;
            let model = train_model(&spec, args.model, &config, &data, Some(&cli.out_dir))?;
            println!("{}", serde_json::to_string(&model.summary).expect("summary serializes"));
            if model.summary.status != "ok" {
                return Err(Error::Usage(model.summary.status));
            }
        }
        Command::Generate(args) => {
            let ckpt = load_checkpoint(&args.checkpoint)?;
            let request = GenerationRequest {
                f0: F0Contour::Constant(args.f0),
                seconds: args.seconds,
                seed_clip: args.seed_wav.as_ref().map(read_wav).transpose()?,
                sampling_mode: if args.argmax {
                    SamplingMode::Argmax
                } else {
                    SamplingMode::Categorical
                },
                temperature: args.temperature,
                rng_seed: cli.seed.unwrap_or(1),
                min_f0_hz: args.f0.min(qpnet::sampler::DEFAULT_MIN_F0_HZ),
            };
            let audio = generate(&ckpt.params, &ckpt.config, &request)?;
            let output = args.output.clone().unwrap_or_else(|| cli.out_dir.join("generated.wav"));
            if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })?;
            }
            write_wav(&output, &audio)?;
            let snr = estimate_snr(&audio, None).ok().map(|s| s.snr_db);
            let peak = periodogram(&audio).and_then(|p| psd_peak_hz(&p, DEFAULT_PEAK_FLOOR_HZ)).ok();
            let line = json!({
                "output": output,
                "samples": audio.len(),
                "measured_f0_hz": peak,
                "snr_db": snr,
            });
            println!("{line}");
        }
        Command::Eval(args) => {
            let spec = load_spec(cli)?;
            let ckpt = load_checkpoint(&args.checkpoint)?;
            let report = evaluate_checkpoint(&spec, args.model, ckpt)?;
            finish_report(&spec, &report, &cli.out_dir)?;
        }
        Command::SweepDense(args) => {
            let mut spec = load_spec(cli)?;
            if let Some(f) = &args.factors {
                spec.dense_factors = f.clone();
            }
            let report = run_dense_sweep(&spec, Some(&cli.out_dir))?;
            finish_report(&spec, &report, &cli.out_dir)?;
        }
        Command::CompareModels(args) => {
            let mut spec = load_spec(cli)?;
            if let Some(m) = &args.models {
                spec.models = m.clone();
            }
            if let Some(a) = args.dense_factor {
                spec.comparison_dense_factor = a;
            }
            let report = run_model_comparison(&spec, Some(&cli.out_dir))?;
            finish_report(&spec, &report, &cli.out_dir)?;
        }
        Command::Gradcheck => {
            let checks = gradient_check_suite(cli.seed.unwrap_or(1))?;
            for c in &checks {
                let verdict = if c.passed() { "pass" } else { "FAIL" };
                println!("{:<24} {:.3e} {verdict}", c.name, c.max_relative_error);
            }
            if let Some(bad) = checks.iter().find(|c| !c.passed()) {
                return Err(Error::Usage(format!(
                    "gradient check {} failed: relative error {:.3e} >= {:.0e}",
                    bad.name, bad.max_relative_error, bad.tolerance
                )));
            }
        }
        Command::Inspect(args) => {
            let spec = load_spec(cli)?;
            let kinds = args.model.map_or_else(|| ModelKind::ALL.to_vec(), |k| vec![k]);
            let a = args.dense_factor.unwrap_or(spec.comparison_dense_factor);
            print!("{:<8} {:>4} {:>7} {:>16}", "model", "a", "blocks", "receptive_field");
            for f in &args.f0 {
                print!(" {:>12}", format!("erf@{f}Hz"));
            }
            println!();
            for kind in kinds {
                let config = spec.model_config(kind, a);
                config.validate()?;
                let a_col = if config.has_adaptive() { a.to_string() } else { "-".into() };
                print!(
                    "{:<8} {:>4} {:>7} {:>16}",
                    kind.name(),
                    a_col,
                    config.num_blocks(),
                    receptive_field_length(&config)
                );
                for &f in &args.f0 {
                    let factor = if config.has_adaptive() {
                        compute_dilation_factor(f, config.sample_rate, config.dense_factor)?
                    } else {
                        1
                    };
                    print!(" {:>12}", effective_receptive_field_for_factor(&config, factor));
                }
                println!();
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(1)
        }
    }
}
