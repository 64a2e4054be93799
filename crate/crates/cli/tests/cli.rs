use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cyclepot_core::model::ModelCoefficients;
use cyclepot_core::pipeline::StatsDocument;

fn cyclepot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cyclepot")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cyclepot(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails_in(args: &[&str], stage: &str) {
    let out = cyclepot(args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("{stage} stage failed")), "{args:?}: {err}");
}

fn synth(dir: &Path) -> String {
    let p = dir.to_str().unwrap();
    ok(&["synth", "--out", p, "--region-id", "synth"]);
    dir.join("region.toml").to_str().unwrap().to_string()
}

#[test]
fn build_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path());
    let report = ok(&["build", "--config", &config]);
    assert!(report.starts_with("built "), "{report}");
    let bundle = dir.path().join("out/synth");
    let text = ok(&["stats", "--bundle", bundle.to_str().unwrap()]);
    assert!(text.starts_with("region synth\n"), "{text}");
    assert!(text.contains("godutch"));

    let json = ok(&["stats", "--bundle", bundle.to_str().unwrap(), "--json"]);
    let doc: StatsDocument = serde_json::from_str(&json).unwrap();
    let on_disk: StatsDocument = serde_json::from_slice(&fs::read(bundle.join("stats.json")).unwrap()).unwrap();
    assert_eq!(doc, on_disk);
}

#[test]
fn route_then_fit_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path());
    let report = ok(&["route", "--config", &config, "--backend", "stub"]);
    assert!(!report.contains("failed:"), "{report}");
    let cache = dir.path().join("route_cache");
    assert!(fs::read_dir(&cache).unwrap().count() > 0);

    let coeffs = dir.path().join("fitted.toml");
    let od = dir.path().join("od.csv");
    ok(&[
        "fit",
        "--od",
        od.to_str().unwrap(),
        "--routes",
        cache.to_str().unwrap(),
        "--out",
        coeffs.to_str().unwrap(),
    ]);
    let fitted = ModelCoefficients::from_toml_str(&fs::read_to_string(&coeffs).unwrap()).unwrap();
    assert!(fitted.is_finite());

    // Fitting is a pure function of its inputs.
    let again = dir.path().join("again.toml");
    ok(&["fit", "--od", od.to_str().unwrap(), "--routes", cache.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(&coeffs).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn failures_are_stage_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path());
    fails_in(&["build", "--config", dir.path().join("absent.toml").to_str().unwrap()], "config");

    let empty = dir.path().join("empty_cache");
    let od = dir.path().join("od.csv");
    let out = dir.path().join("c.toml");
    fails_in(
        &["fit", "--od", od.to_str().unwrap(), "--routes", empty.to_str().unwrap(), "--out", out.to_str().unwrap()],
        "fit",
    );
    assert!(!out.exists());
    fails_in(&["stats", "--bundle", dir.path().join("nothing").to_str().unwrap()], "load");

    fs::remove_file(dir.path().join("mortality.csv")).unwrap();
    fails_in(&["build", "--config", &config], "impacts");
}

#[test]
fn unknown_flags_are_rejected() {
    assert!(!cyclepot(&["build"]).status.success());
    assert!(!cyclepot(&["route", "--config", "x.toml", "--backend", "carrier-pigeon"]).status.success());
}
