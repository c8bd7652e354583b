//! The sinusoid study: train models on noisy tones, generate a grid of test
//! tones inside and outside the training F0 range, and score pitch accuracy
//! and SNR per band.

mod report;
mod run;
mod selftest;
mod spec;

pub use report::{
    band_group_metrics, emit_report, read_summary, utterance_stem, Band, BandAggregate, EvalReport, ReportPaths,
    RunSummary, SummaryRow, UtteranceRow,
};
pub use run::{
    derive_seed, evaluate_checkpoint, evaluate_model, heldout_item, run_dense_sweep, run_model_comparison,
    train_model, write_loss_history, TrainedModel,
};
pub use selftest::gradient_check_suite;
pub use spec::{default_test_f0s, run_label, EvaluationSpec, ExperimentSpec};
