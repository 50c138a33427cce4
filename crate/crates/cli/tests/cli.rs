use std::process::Command;

fn jointdetect(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_jointdetect")).args(args).output().unwrap()
}

#[test]
fn missing_inputs_are_config_errors_listed_together() {
    let tmp = tempfile::tempdir().unwrap();
    let out = jointdetect(&["fit", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let doc: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(doc["status"], "error");
    assert_eq!(doc["kind"], "config");
    assert!(doc["errors"].as_array().unwrap().len() >= 2);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"seed": 1, "sead": 2}"#).unwrap();
    let out = jointdetect(&["grid", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn outputs_carry_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"seed": 5, "schedule": {"synthetic_pool_per_level": 3}}"#).unwrap();
    let dest = tmp.path().join("out");
    let out = jointdetect(&["schedule", "--config", cfg.to_str().unwrap(), "--out", dest.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dest.join("ground_truth_template.csv")).unwrap();
    assert!(csv.starts_with("# jointdetect 0.1.0 command=schedule seed=5 config_sha256="));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dest.join("schedule.json")).unwrap()).unwrap();
    assert_eq!(json["provenance"]["seed"], 5);
    assert!(json["schedule"].is_object() || json["schedule"].is_array());
}
