use std::process::{Command, Output};

fn qpnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_line(o: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

#[test]
fn inspect_reports_full_wavenet_receptive_field() {
    let o = qpnet(&["inspect", "--model", "WNf"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row = text.lines().find(|l| l.starts_with("WNf")).unwrap();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cols[3], "3070");
}

#[test]
fn inspect_lists_every_preset() {
    let o = qpnet(&["inspect", "--f0", "500"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for (name, rf) in [("WNc", "61"), ("pQPNet", "61"), ("QPNet", "61"), ("rQPNet", "61")] {
        let row = text.lines().find(|l| l.split_whitespace().next() == Some(name)).unwrap();
        assert_eq!(row.split_whitespace().nth(3), Some(rf), "{row}");
    }
    // QPNet at 500 Hz, a = 8: E = 6, fixed part 46 plus 15 * 6
    let row = text.lines().find(|l| l.starts_with("QPNet")).unwrap();
    assert_eq!(row.split_whitespace().nth(4), Some("136"));
}

#[test]
fn gradcheck_exits_zero() {
    let o = qpnet(&["gradcheck"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().all(|l| l.ends_with("pass")));
}

#[test]
fn unknown_subcommand_and_flag_are_usage_errors() {
    for args in [&["frobnicate"][..], &["inspect", "--bogus"][..], &[][..]] {
        let o = qpnet(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    }
}

#[test]
fn missing_config_names_the_path() {
    let o = qpnet(&["inspect", "--config", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(1));
    let e = error_line(&o);
    assert_eq!(e["error"], "io");
    assert!(e["message"].as_str().unwrap().contains("/definitely/not/here.json"));
}

#[test]
fn invalid_config_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"dense_factors": [0]}"#).unwrap();
    let o = qpnet(&["sweep-dense", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_line(&o)["error"], "config");
    assert_eq!(String::from_utf8_lossy(&o.stderr).lines().count(), 1);
}

#[test]
fn bad_profile_is_a_usage_error() {
    let o = qpnet(&["inspect", "--profile", "huge"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_generate_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    std::fs::write(
        &cfg,
        r#"{
            "dataset": {"utterances": 2, "seconds_per_utterance": 0.05},
            "training": {"epochs": 1, "batch_length_samples": 500},
            "evaluation": {"test_f0s": [200.0, 600.0], "phases_per_f0": 1, "seconds": 0.5},
            "model_overrides": {"pQPNet": {
                "macroblocks": [{"kind": "adaptive", "chunks": 1, "blocks_per_chunk": 2}],
                "residual_channels": 4, "gate_channels": 4, "skip_channels": 4, "output_mid_channels": 4,
                "dense_factor": 8, "aux_dim": 1, "sample_rate": 22050, "quantization_levels": 256
            }}
        }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let common = ["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];

    let mut args = vec!["train", "--model", "pQPNet", "--dense-factor", "8"];
    args.extend(common);
    let o = qpnet(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["label"], "pQPNet_a8");
    assert_eq!(summary["steps"], 2);
    let ckpt = out.join("runs/pQPNet_a8/final.qpnt");
    assert!(ckpt.exists());

    let wav = dir.path().join("g.wav");
    let o = qpnet(&[
        "generate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--f0",
        "300",
        "--seconds",
        "0.1",
        "--argmax",
        "--output",
        wav.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(line["samples"], 2205);
    assert!(wav.exists());

    let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--model", "pQPNet"];
    args.extend(common);
    let o = qpnet(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("model,dense_factor,band,mean_snr_db,mean_logf0_rmse,n\n"));
    assert!(summary.contains("pQPNet,8,inside,"));
}
