use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn g4d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_g4d"))
        .args(args)
        .env("G4D_LOG", "error")
        .output()
        .expect("spawn g4d")
}

fn gen_scene(dir: &Path, kind: &str) -> PathBuf {
    let out = dir.join("scene");
    let o = g4d(&[
        "gen",
        "--scene",
        kind,
        "--out",
        out.to_str().unwrap(),
        "--n-gaussians",
        "150",
        "--frames",
        "4",
        "--n-rays",
        "20000",
        "--refine-iters",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("session.json")
}

fn edit_session(path: &Path, f: impl FnOnce(&mut Value)) {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn missing_deformation_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let session = gen_scene(dir.path(), "rigid");
    std::fs::remove_file(dir.path().join("scene/deformation.g4df")).unwrap();
    let out = dir.path().join("out");
    let o = g4d(&["run", "--config", session.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("deformation.g4df"), "{stderr}");
}

#[test]
fn stop_after_match_writes_only_matching_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let session = gen_scene(dir.path(), "rigid");
    let out = dir.path().join("out");
    let o = g4d(&[
        "run",
        "--config",
        session.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--stop-after",
        "match",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["anchors_edited.json", "anchors_source.json", "correspondence.json", "report.json"]
    );
    let r = report(&out);
    assert_eq!(r["stopped_after"], "match");
    assert!(r["propagation"].is_null());
}

#[test]
fn rigid_scene_propagates_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let session = gen_scene(dir.path(), "rigid");
    let out = dir.path().join("out");
    let o = g4d(&["run", "--config", session.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ndd = report(&out)["propagation"]["ndd"].as_array().unwrap().clone();
    assert_eq!(ndd.len(), 4);
    assert!(ndd.iter().all(|v| v.as_f64().unwrap() < 1e-6), "{ndd:?}");
    for t in 1..=4 {
        assert!(out.join(format!("refined/frame_{t:04}.g4dc")).exists());
    }
}

#[test]
fn unconverged_matching_exits_two_with_results() {
    let dir = tempfile::tempdir().unwrap();
    let session = gen_scene(dir.path(), "rigid-clone");
    edit_session(&session, |v| v["params"]["sinkhorn_max_iters"] = 1.into());
    let out = dir.path().join("out");
    let o = g4d(&["propagate", "--config", session.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["matching"]["converged"], false);
    assert!(r["warnings"].as_array().unwrap().iter().any(|w| w["stage"] == "match"));
    assert!(out.join("propagated/frame_0004.g4dc").exists());
}

#[test]
fn report_echoes_configuration_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let session = gen_scene(dir.path(), "rigid");
    let out = dir.path().join("out");
    let o = g4d(&[
        "anchors",
        "--config",
        session.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["seed"], 7);
    assert_eq!(r["config"]["k"], 2);
    assert_eq!(r["config"]["gamma"], 0.05);
    assert_eq!(r["config"]["n_rays"], 20000);
}

#[test]
fn malformed_session_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.json");
    std::fs::write(&path, "{ not json").unwrap();
    let o = g4d(&["run", "--config", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
