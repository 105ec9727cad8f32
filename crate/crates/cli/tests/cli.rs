//! The `gate` binary end to end, one subcommand at a time.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gate"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = gate(args);
    assert!(out.status.success(), "gate {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn subcommands_on_a_synthetic_passage() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_owned();
    let raw = p("raw");
    ok(&["synth", "--seed", "5", "--out", &raw, "--id", "318066501234"]);

    ok(&["segment-id", "--input", &format!("{raw}/side-low.pgm"), "--out", &p("id.json")]);
    let id = json(&tmp.path().join("id.json"));
    assert_eq!(id["found"], true);
    assert_eq!(id["segmentation"]["char_boxes"].as_array().unwrap().len(), 12);

    let scan = ok(&[
        "thermal-scan",
        "--left",
        &format!("{raw}/thermal-left.tmap"),
        "--right",
        &format!("{raw}/thermal-right.tmap"),
        "--preview",
        &p("preview.ppm"),
    ]);
    let report: Value = serde_json::from_slice(&scan.stdout).unwrap();
    let truth = json(&tmp.path().join("raw/truth.json"));
    assert_eq!(report["left"]["alarms"].as_array().unwrap().len(), truth["hot_blocks"].as_array().unwrap().len());
    assert_eq!(report["cross_check"]["status"], "pass");
    assert!(std::fs::read(p("preview.ppm")).unwrap().starts_with(b"P6"));

    ok(&["build-model", "--out", &p("model.pgfm")]);
    ok(&[
        "detect-pantograph",
        "--input",
        &format!("{raw}/side-high.pgm"),
        "--model",
        &p("model.pgfm"),
        "--out",
        &p("panto.json"),
    ]);
    assert_eq!(json(&tmp.path().join("panto.json"))["found"], true);

    ok(&["tile", "--input", &format!("{raw}/thermal-left.tmap"), "--out", &p("tiles")]);
    assert!(tmp.path().join("tiles/0/0_0.ppm").is_file());
    assert!(tmp.path().join("tiles/pyramid.json").is_file());

    ok(&["run", "--raw", &raw, "--out", &p("sessions"), "--id", "gate-5"]);
    assert!(tmp.path().join("sessions/gate-5/manifest.json").is_file());
}

#[test]
fn exit_codes_separate_bad_input_from_failed_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_owned();
    std::fs::write(p("bad.toml"), "[thermal]\nblock_w = 0\n").unwrap();
    std::fs::write(p("unknown.toml"), "[nonsense]\n").unwrap();

    assert_eq!(gate(&["run", "--raw", &p("raw"), "--out", &p("s"), "--config", &p("bad.toml")]).status.code(), Some(2));
    assert_eq!(gate(&["run", "--raw", &p("raw"), "--out", &p("s"), "--config", &p("unknown.toml")]).status.code(), Some(2));
    let missing = gate(&["run", "--raw", &p("raw"), "--out", &p("s")]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("load"));
    assert_eq!(gate(&["segment-id", "--input", &p("nothing.pgm")]).status.code(), Some(2));
    assert_eq!(gate(&["evaluate", "--sessions", &p("s"), "--raw", &p("raw")]).status.code(), Some(2));
    assert!(!gate(&["frobnicate"]).status.success());
}
