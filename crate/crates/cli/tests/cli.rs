use std::path::Path;
use std::process::{Command, Output};

use bellow_core::actuator::{ActuatorSpec, ActuatorSpecData, Material};
use bellow_core::cad::read_stl;
use bellow_core::io::points_csv;
use bellow_core::optimizer::MatchResult;
use bellow_core::pipeline::to_json;
use bellow_core::shapes;
use bellow_core::ModuleDesign;

fn bellow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bellow")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn spec_file(dir: &Path, pressure: f64) -> std::path::PathBuf {
    let spec = ActuatorSpec::uniform(ModuleDesign::standard(), 3, 0.0, pressure, Material::default()).unwrap();
    let path = dir.join("spec.json");
    std::fs::write(&path, to_json(&spec)).unwrap();
    path
}

#[test]
fn dataset_gen_writes_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.csv");
    ok(&bellow(&["dataset", "gen", "--out", p(&out)]));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 5041);
    assert!(text.starts_with("r_in,"));
}

#[test]
fn segment_match_assemble_fk_stl() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let shape = d.join("s.csv");
    std::fs::write(&shape, points_csv(&shapes::letter_s(25.0, 200))).unwrap();

    let seg = ok(&bellow(&["segment", "--shape", p(&shape), "--tol", "0.1"]));
    let seg_path = d.join("seg.json");
    std::fs::write(&seg_path, &seg).unwrap();

    let result_path = d.join("result.json");
    let out = bellow(&[
        "match", "--segments", p(&seg_path), "--pmax", "10", "--rout-max", "30", "--seed", "1", "--budget", "desk", "--out", p(&result_path),
    ]);
    ok(&out);
    let result: MatchResult = serde_json::from_str(&std::fs::read_to_string(&result_path).unwrap()).unwrap();
    assert!(result.feasible);

    let spec_path = d.join("spec.json");
    ok(&bellow(&["assemble", "--result", p(&result_path), "--out", p(&spec_path)]));
    let spec: ActuatorSpec = serde_json::from_str(&std::fs::read_to_string(&spec_path).unwrap()).unwrap();
    assert_eq!(spec.modules().len(), result.segments.iter().map(|s| s.n).sum::<usize>());

    let csv = ok(&bellow(&["fk", "--spec", p(&spec_path), "--base", p(&seg_path), "--samples", "4"]));
    assert!(csv.starts_with("x,y,z\n"));
    assert_eq!(csv.lines().count(), 1 + 1 + 3 * spec.modules().len());

    let stl = d.join("a.stl");
    ok(&bellow(&["stl", "--spec", p(&spec_path), "--out", p(&stl), "--step", "10"]));
    let tris = read_stl(&std::fs::read(&stl).unwrap()).unwrap();
    assert!(tris.len() > 100);
}

#[test]
fn infeasible_match_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let seg = dir.path().join("seg.json");
    std::fs::write(&seg, r#"[{"L": 40.0, "kappa": 0.02, "dphi": 0.0, "kind": "arc"}]"#).unwrap();
    let out = bellow(&["match", "--segments", p(&seg), "--pmax", "0", "--budget", "6/4"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let r: MatchResult = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!r.feasible);
}

#[test]
fn errors_exit_one_with_code() {
    let dir = tempfile::tempdir().unwrap();
    let good = spec_file(dir.path(), 0.0);
    let mut data: ActuatorSpecData = serde_json::from_str(&std::fs::read_to_string(&good).unwrap()).unwrap();
    data.modules[0].l = 0.5;
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&data).unwrap()).unwrap();
    let out = bellow(&["stl", "--spec", p(&bad), "--out", p(&dir.path().join("x.stl"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error[invalid_spec]"), "{err}");
    assert!(err.contains("l > 4t"), "{err}");

    let out = bellow(&["match", "--segments", "x.json", "--pmax", "10", "--budget", "lots"]);
    assert_eq!(out.status.code(), Some(1));
    let out = bellow(&["fk", "--spec", p(&good), "--model", p(&dir.path().join("none.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[not_found]"));
}

#[test]
fn fk_json_and_ascii_stl() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), 0.0);
    let json = ok(&bellow(&["fk", "--spec", p(&spec), "--pressure", "8", "--json"]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["pressure_kpa"], 8.0);
    assert!(v["tip"][0].as_f64().unwrap() > 1.0);
    let out = dir.path().join("a.stl");
    ok(&bellow(&["stl", "--spec", p(&spec), "--out", p(&out), "--ascii", "--step", "15"]));
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("solid"));
}
