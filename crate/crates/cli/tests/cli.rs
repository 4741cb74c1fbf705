use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn sidewalk(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_sidewalk")).args(args).output().unwrap();
    assert!(out.status.success(), "sidewalk {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_train_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    sidewalk(&["imagery", "synth", "--n", "40", "--out", p(&syn)]);
    let manifest = syn.join("manifest.jsonl");
    let taxonomy = syn.join("taxonomy.json");
    assert_eq!(std::fs::read_to_string(&manifest).unwrap().lines().count(), 40);

    // Ground truth scored against itself is perfect.
    let perfect = dir.path().join("perfect.json");
    sidewalk(&["evaluate", "--pred-dir", p(&syn.join("truth")), "--truth-manifest", p(&manifest), "--taxonomy", p(&taxonomy), "--report", p(&perfect)]);
    let report = read_json(&perfect);
    assert!(report["images"].as_u64().unwrap() > 0);
    assert_eq!(report["metrics"]["miou_all"].as_f64().unwrap(), 1.0);

    let config = dir.path().join("train.json");
    std::fs::write(&config, r#"{"epochs_per_stage": 1, "crops_per_epoch": 8}"#).unwrap();
    let stage = dir.path().join("stage_1");
    let stdout = sidewalk(&["train", "--manifest", p(&manifest), "--taxonomy", p(&taxonomy), "--config", p(&config), "--stage-dir", p(&stage)]);
    assert_eq!(stdout.lines().count(), 1, "one epoch report per line");
    assert!(stage.join("checkpoint.json").exists() && stage.join("metrics.jsonl").exists());

    let pred = dir.path().join("pred");
    sidewalk(&["predict", "--manifest", p(&manifest), "--taxonomy", p(&taxonomy), "--checkpoint", p(&stage.join("checkpoint.json")), "--out-dir", p(&pred)]);
    let report_path = dir.path().join("report.json");
    sidewalk(&["evaluate", "--pred-dir", p(&pred), "--truth-manifest", p(&manifest), "--taxonomy", p(&taxonomy), "--report", p(&report_path)]);
    let report = read_json(&report_path);
    let miou = report["metrics"]["miou_all"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&miou));
}

#[test]
fn unknown_train_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    sidewalk(&["imagery", "synth", "--n", "20", "--out", p(&syn)]);
    let config = dir.path().join("train.json");
    std::fs::write(&config, r#"{"epochs": 1}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sidewalk"))
        .args(["train", "--manifest", p(&syn.join("manifest.jsonl")), "--config", p(&config), "--stage-dir", p(&dir.path().join("s"))])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn geo_sample_pairs_points_and_skips_motorways() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    std::fs::write(
        &net,
        r#"[{"id":"a","polyline":[[42.35,-71.06],[42.3502,-71.06]],"road_class":"residential"},
            {"id":"hw","polyline":[[42.35,-71.05],[42.351,-71.05]],"road_class":"motorway"}]"#,
    )
    .unwrap();
    let out = dir.path().join("pts.json");
    sidewalk(&["geo", "sample", "--network", p(&net), "--interval", "5", "--out", p(&out)]);
    let points = read_json(&out);
    let points = points.as_array().unwrap();
    assert!(!points.is_empty() && points.len() % 2 == 0);
    assert!(points.iter().all(|pt| pt["segment_id"] == "a"));
    for pair in points.chunks(2) {
        let h = |v: &Value| v["camera"]["heading_deg"].as_f64().unwrap();
        assert!(((h(&pair[0]) - h(&pair[1])).rem_euclid(360.0) - 180.0).abs() < 1e-9);
    }
}
