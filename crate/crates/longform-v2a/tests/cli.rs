//! End-to-end exercises of the `lfv2a` binary: happy path plus the exit-code
//! contract (2 = config, 3 = data shape/format, 4 = numeric).

use longform_v2a::harness::{load_checkpoint, save_checkpoint};
use longform_v2a::tensor::DenseTensor;
use std::path::Path;
use std::process::{Command, Output};

fn lfv2a(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfv2a"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_exit(out: &Output, code: i32, what: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{what}: expected exit {code}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A configuration small enough that the full pipeline runs in seconds.
const TINY: &str = r#"{
  "seed": 11,
  "dataset": {
    "n_videos": 2,
    "video_duration_s": 2.0,
    "clip_duration_s": 1.0,
    "visual_dim": 6,
    "text_dim": 5,
    "sync_dim": 4,
    "latent_dim": 3
  },
  "conditioning": { "hidden_dim": 8, "timestamp_dim": 8 },
  "dit": { "n_layers": 1, "hidden_dim": 8, "n_heads": 2, "steps": 2 },
  "adapters": { "bottleneck_dim": 4 },
  "train": { "steps": 3, "adapter_steps": 3 }
}
"#;

fn write_tiny_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn print_defaults_emits_parseable_json() {
    let out = lfv2a(&["config", "--print-defaults"]);
    assert_exit(&out, 0, "config --print-defaults");
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).expect("stdout is JSON");
    assert_eq!(v["dataset"]["n_videos"], 64);
    assert_eq!(v["dit"]["hidden_dim"], v["conditioning"]["hidden_dim"]);
}

#[test]
fn malformed_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = lfv2a(&["--config", bad.to_str().unwrap(), "config"]);
    assert_exit(&out, 2, "malformed config");
}

#[test]
fn config_contract_violation_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    // conditioning/dit hidden sizes must agree
    std::fs::write(
        &bad,
        r#"{ "conditioning": { "hidden_dim": 16 }, "dit": { "hidden_dim": 32 } }"#,
    )
    .unwrap();
    let out = lfv2a(&["--config", bad.to_str().unwrap(), "config"]);
    assert_exit(&out, 2, "inconsistent hidden dims");
}

#[test]
fn train_without_dataset_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let missing = tmp.path().join("nope");
    let out_dir = tmp.path().join("run");
    let out = lfv2a(&[
        "--config",
        &cfg,
        "train",
        "--dataset",
        missing.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 2, "train on missing dataset");
}

#[test]
fn unknown_flag_exits_2() {
    let out = lfv2a(&["synth", "--frobnicate"]);
    assert_exit(&out, 2, "unknown flag");
}

#[test]
fn corrupt_stream_file_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let data = tmp.path().join("data");
    let out = lfv2a(&["--config", &cfg, "synth", "--out", data.to_str().unwrap()]);
    assert_exit(&out, 0, "synth");

    let victim = data.join("videos").join("vid_000").join("sync.ldt");
    assert!(victim.is_file(), "expected {victim:?} to exist");
    std::fs::write(&victim, b"garbage, not a tensor").unwrap();

    let run = tmp.path().join("run");
    let out = lfv2a(&[
        "--config",
        &cfg,
        "train",
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_exit(&out, 3, "train on corrupt LDT");
}

#[test]
fn nan_checkpoint_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let data = tmp.path().join("data");
    assert_exit(
        &lfv2a(&["--config", &cfg, "synth", "--out", data.to_str().unwrap()]),
        0,
        "synth",
    );
    let base = tmp.path().join("base");
    assert_exit(
        &lfv2a(&[
            "--config",
            &cfg,
            "train",
            "--dataset",
            data.to_str().unwrap(),
            "--out",
            base.to_str().unwrap(),
        ]),
        0,
        "base train",
    );

    // Poison one bias with a NaN and train from the damaged checkpoint.
    let ckpt = base.join("checkpoint");
    let mut store = load_checkpoint::<f32>(&ckpt).unwrap();
    let poisoned = DenseTensor::from_vec(vec![3], vec![f32::NAN, 0.0, 0.0]).unwrap();
    store.set_value("dit.out.b", poisoned).unwrap();
    let bad_ckpt = tmp.path().join("poisoned");
    save_checkpoint(&bad_ckpt, &store).unwrap();

    let run = tmp.path().join("run");
    let out = lfv2a(&[
        "--config",
        &cfg,
        "train",
        "--dataset",
        data.to_str().unwrap(),
        "--init-from",
        bad_ckpt.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_exit(&out, 4, "train from NaN checkpoint");
}

#[test]
fn full_pipeline_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let p = |s: &str| tmp.path().join(s).to_str().unwrap().to_owned();

    assert_exit(&lfv2a(&["--config", &cfg, "synth", "--out", &p("data")]), 0, "synth");
    assert_exit(
        &lfv2a(&[
            "--config", &cfg, "train", "--dataset", &p("data"), "--out", &p("base"),
        ]),
        0,
        "base train",
    );
    assert_exit(
        &lfv2a(&[
            "--config", &cfg, "train", "--dataset", &p("data"),
            "--mode", "adapters-only",
            "--init-from", &(p("base") + "/checkpoint"),
            "--out", &p("tuned"),
        ]),
        0,
        "adapter train",
    );
    assert_exit(
        &lfv2a(&[
            "--config", &cfg, "generate", "--dataset", &p("data"),
            "--checkpoint", &(p("base") + "/checkpoint"),
            "--mode", "baseline", "--out", &p("gen_b"),
        ]),
        0,
        "baseline generate",
    );
    assert_exit(
        &lfv2a(&[
            "--config", &cfg, "generate", "--dataset", &p("data"),
            "--checkpoint", &(p("tuned") + "/checkpoint"),
            "--mode", "adapters", "--out", &p("gen_a"),
        ]),
        0,
        "adapters generate",
    );
    for (gen, ev) in [("gen_b", "eval_b"), ("gen_a", "eval_a")] {
        let out = lfv2a(&[
            "--config", &cfg, "eval", "--dataset", &p("data"),
            "--generated", &p(gen), "--out", &p(ev),
        ]);
        assert_exit(&out, 0, "eval");
        let text = String::from_utf8_lossy(&out.stdout).to_string();
        assert!(text.contains("energy_delta_10ms"), "eval prints metrics: {text}");
    }
    let out = lfv2a(&["report", "--out", &p("cmp"), &p("eval_b"), &p("eval_a")]);
    assert_exit(&out, 0, "report");
    assert!(tmp.path().join("cmp").join("report_compare.csv").is_file());
    assert!(tmp.path().join("cmp").join("report_compare.json").is_file());

    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("energy_delta_10ms"), "report prints table: {text}");
}
