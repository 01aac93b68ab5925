use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hypergam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypergam")).args(args).output().unwrap()
}

fn toy_data(dir: &Path) -> String {
    let path = dir.join("toy.csv");
    let out = hypergam(&["simulate", "--scenario", "null", "--p", "3", "--n", "40", "--seed", "2", "--output", dir.join("sim").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    fs::copy(dir.join("sim/data.csv"), &path).unwrap();
    path.to_str().unwrap().to_string()
}

fn without_wall_time(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_seconds");
    v
}

#[test]
fn exhaustive_lists_every_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(dir.path());
    let out_dir = dir.path().join("sel");
    let out = hypergam(&[
        "select", "--data", &data, "--response", "y", "--method", "exhaustive", "--grid", "0,1,2,3", "--knots", "3",
        "--output", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let models = fs::read_to_string(out_dir.join("models.csv")).unwrap();
    assert_eq!(models.lines().count(), 1 + 64);
    let inclusion = fs::read_to_string(out_dir.join("inclusion.csv")).unwrap();
    assert_eq!(inclusion.lines().count(), 4);
    for f in ["meta_models.csv", "shape_models.csv", "run.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn missing_column_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(dir.path());
    let out = hypergam(&["select", "--data", &data, "--response", "nope", "--output", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_numeric_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "x,y\n1,2\nred,3\n2,5\n").unwrap();
    let out = hypergam(&["select", "--data", path.to_str().unwrap(), "--response", "y", "--output", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = hypergam(&[
        "select", "--data", &data, "--response", "y", "--iterations", "3000", "--seed", "11", "--knots", "3",
        "--output", a.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = hypergam(&["select", "--config", a.join("run.json").to_str().unwrap(), "--output", b.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["models.csv", "inclusion.csv", "meta_models.csv", "shape_models.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (mut ja, mut jb) = (without_wall_time(&a.join("run.json")), without_wall_time(&b.join("run.json")));
    for j in [&mut ja, &mut jb] {
        j["config"].as_object_mut().unwrap().remove("output");
    }
    assert_eq!(ja, jb);

    let (fa, fb) = (dir.path().join("fa"), dir.path().join("fb"));
    for o in [&fa, &fb] {
        let out = hypergam(&[
            "fit", "--data", &data, "--response", "y", "--model", "2,0,1", "--samples", "200", "--knots", "3",
            "--grid-points", "25", "--output", o.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let curve = fs::read_to_string(fa.join("curves_x1.csv")).unwrap();
    assert_eq!(curve.lines().next().unwrap(), "grid,mean,ptwise_lo,ptwise_hi,simul_lo,simul_hi");
    assert_eq!(curve.lines().count(), 26);
    assert!(!fa.join("curves_x2.csv").exists());
    for f in ["curves_x1.csv", "curves_x3.csv"] {
        assert_eq!(fs::read(fa.join(f)).unwrap(), fs::read(fb.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn optimize_reports_every_covariate() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(dir.path());
    let o = dir.path().join("opt");
    let out = hypergam(&["optimize", "--data", &data, "--response", "y", "--model", "3,1,0", "--knots", "3", "--output", o.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(o.join("optimize.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}
