use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bubbleflow::pipeline::artifacts::{write_detections, Manifest};
use bubbleflow::synth::GroundTruth;

const SCENE: &str = r#"
frames = 12
width = 128
height = 192
photon_scale = 8000.0

[[bubbles]]
x0 = -1.8
y0 = 2.0
vy = 60.0

[[bubbles]]
x0 = 1.8
y0 = 4.5
vy = 40.0
a = 1.1
b = 0.9
"#;

fn bubbleflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bubbleflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn synth_into(dir: &Path, seed: &str) -> Output {
    let spec = dir.join("scene.toml");
    fs::write(&spec, SCENE).unwrap();
    bubbleflow(&["synth", "--spec", spec.to_str().unwrap(), "--seed", seed, "--out", dir.join("scene").to_str().unwrap()])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(synth_into(a.path(), "7").status.success());
    assert!(synth_into(b.path(), "7").status.success());
    let (ma, mb) = (Manifest::read(&a.path().join("scene")).unwrap(), Manifest::read(&b.path().join("scene")).unwrap());
    assert_eq!(ma.artifacts, mb.artifacts);
    let c = tempfile::tempdir().unwrap();
    synth_into(c.path(), "8");
    let mc = Manifest::read(&c.path().join("scene")).unwrap();
    assert_ne!(ma.hash_of("frames.tif"), mc.hash_of("frames.tif"));
    assert_eq!(ma.hash_of("truth.csv"), mc.hash_of("truth.csv"));
}

#[test]
fn run_writes_manifest_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    assert!(synth_into(dir.path(), "1").status.success());
    let scene = dir.path().join("scene");
    let out = bubbleflow(&["run", "--config", scene.join("pipeline.toml").to_str().unwrap(), "--workers", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("stage=detect"));
    let result = scene.join("result");
    let m = Manifest::read(&result).unwrap();
    assert_eq!(m.status, "ok");
    for name in ["detections.csv", "trajectories.csv", "velocity_profile.csv", "envelope.csv", "stats.json"] {
        assert!(m.hash_of(name).is_some(), "{name}");
    }

    let scored = bubbleflow(&[
        "score",
        "--detections",
        result.join("detections.csv").to_str().unwrap(),
        "--truth",
        scene.join("truth.csv").to_str().unwrap(),
        "--profile",
        result.join("velocity_profile.csv").to_str().unwrap(),
    ]);
    assert!(scored.status.success(), "{}", stderr(&scored));
    let report: serde_json::Value = serde_json::from_slice(&scored.stdout).unwrap();
    assert!(report["detections"]["recall"].as_f64().unwrap() > 0.9);
    assert!(report["velocity"].as_array().is_some_and(|v| !v.is_empty()));
}

#[test]
fn perfect_detections_score_full_recall() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), "2");
    let truth_path = dir.path().join("scene/truth.csv");
    let truth = GroundTruth::read_csv(&truth_path).unwrap();
    let det_path = dir.path().join("perfect.csv");
    write_detections(&det_path, &truth.to_detections(true)).unwrap();
    let out = bubbleflow(&["score", "--detections", det_path.to_str().unwrap(), "--truth", truth_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["detections"]["recall"].as_f64(), Some(1.0));
    assert_eq!(report["detections"]["false_positive_rate"].as_f64(), Some(0.0));
}

#[test]
fn negative_k_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), "3");
    let cfg = dir.path().join("scene/pipeline.toml");
    let text = fs::read_to_string(&cfg).unwrap().replace("[cff]", "[cff]\nk = -0.5");
    fs::write(&cfg, text).unwrap();
    let out = bubbleflow(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("CffParams.k must be > 0"), "{}", stderr(&out));
}

#[test]
fn empty_sequence_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), "4");
    let scene = dir.path().join("scene");
    fs::create_dir(scene.join("empty")).unwrap();
    let cfg = scene.join("pipeline.toml");
    let text = fs::read_to_string(&cfg).unwrap().replace("frames = \"frames.tif\"", "frames = \"empty\"");
    fs::write(&cfg, text).unwrap();
    let out = bubbleflow(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no frames found"), "{}", stderr(&out));
    let m = Manifest::read(&scene.join("result")).unwrap();
    assert_eq!(m.failed_stage.as_deref(), Some("load"));
}

#[test]
fn inspect_writes_overlays_and_rejects_bad_range() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), "5");
    let cfg = dir.path().join("scene/pipeline.toml");
    let over = dir.path().join("overlays");
    let ok = bubbleflow(&["inspect", "--config", cfg.to_str().unwrap(), "--frames", "2..4", "--out", over.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    assert!(over.join("overlay_00002.tif").exists() && over.join("overlay_00003.tif").exists());
    let bad = bubbleflow(&["inspect", "--config", cfg.to_str().unwrap(), "--frames", "10..20", "--out", over.to_str().unwrap()]);
    assert!(!bad.status.success());
    assert!(stderr(&bad).contains("out of range"), "{}", stderr(&bad));
}

#[test]
fn calibrate_then_run_with_calibration_file() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), "6");
    let scene = dir.path().join("scene");
    let cal = scene.join("cal.tif");
    let out = bubbleflow(&[
        "calibrate",
        "--dark",
        scene.join("dark.tif").to_str().unwrap(),
        "--flat",
        scene.join("flat.tif").to_str().unwrap(),
        "--out",
        cal.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let cfg = scene.join("pipeline.toml");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("dark = \"dark.tif\"\n", "")
        .replace("flat = \"flat.tif\"\n", "calibration = \"cal.tif\"\n");
    fs::write(&cfg, text).unwrap();
    let out = bubbleflow(&["run", "--config", cfg.to_str().unwrap(), "--roi", "0,40,128,152"]);
    assert!(out.status.success(), "{}", stderr(&out));
}
