use std::path::Path;
use std::process::Command;

use voxsketch::fusion::Predictor;
use voxsketch::geometry::{Mesh, WorldGrid};
use voxsketch::network::{Network, NetworkSpec};

fn voxsketch(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_voxsketch")).args(args).env("RUST_LOG", "warn").output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dataset_predict_carve_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    voxsketch(&["dataset", "build", "--source", "grammar", "--count", "10", "--toy", "--seed", "4", "--out", s(&data)]);
    assert!(data.join("manifest.train").exists() && data.join("manifest.test").exists());

    let weights = dir.path().join("weights");
    let spec = NetworkSpec::toy();
    Predictor::new(Network::new(spec.clone(), 0).unwrap(), Network::new(spec.with_updater(true), 1).unwrap())
        .unwrap()
        .save(&weights)
        .unwrap();

    let drawings: Vec<_> = std::fs::read_dir(data.join("drawings")).unwrap().map(|e| e.unwrap().path()).collect();
    let pick = |tag: &str| drawings.iter().find(|p| p.to_str().unwrap().contains(tag)).unwrap().clone();
    let (d0, d10) = (pick("_v00"), pick("_v10"));

    let grid = dir.path().join("pred.vxg");
    let trace = dir.path().join("trace.csv");
    let more = format!("{}:10", s(&d10));
    voxsketch(&[
        "predict", "--weights", s(&weights), "--drawing", s(&d0), "--view", "0", "--more", &more,
        "--iterations", "2", "--out", s(&grid), "--trace", s(&trace),
    ]);
    assert_eq!(WorldGrid::load(&grid).unwrap().resolution(), 16);
    assert_eq!(std::fs::read_to_string(&trace).unwrap().lines().count(), 3);

    let carved = dir.path().join("carved.vxg");
    let i0 = format!("{}:0", s(&d0));
    voxsketch(&["carve", "--mode", "perspective", "--inputs", &i0, &more, "--resolution", "20", "--out", s(&carved)]);
    assert!(WorldGrid::load(&carved).unwrap().count_occupied(0.5) > 0);

    let obj = dir.path().join("pred.obj");
    let status = Command::new(env!("CARGO_BIN_EXE_voxsketch"))
        .args(["predict", "--weights", s(&weights), "--drawing", s(&d0), "--view", "0", "--iterations", "0", "--out", s(&obj)])
        .output()
        .unwrap()
        .status;
    // untrained weights may predict an empty shape, which has no mesh
    if status.success() {
        assert!(Mesh::load_obj(&obj).unwrap().is_watertight());
    }

    let report = dir.path().join("eval.csv");
    voxsketch(&["eval", "--weights", s(&weights), "--dataset", s(&data), "--views", "2", "--iterations", "1", "--out", s(&report)]);
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("# config: "));
    let again = dir.path().join("eval2.csv");
    voxsketch(&["eval", "--weights", s(&weights), "--dataset", s(&data), "--views", "2", "--iterations", "1", "--out", s(&again)]);
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());

    let out = voxsketch(&["converge", "--weights", s(&weights), "--dataset", s(&data), "--iterations", "2"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("views,iteration,mean_l2,mean_iou"));
    let out = voxsketch(&["bench", "--weights", s(&weights), "--dataset", s(&data), "--repetitions", "1"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("# fit:"));
    let out = voxsketch(&["compare", "--weights", s(&weights), "--dataset", s(&data), "--max-views", "2"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("carve_orthogonal"));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let out = Command::new(env!("CARGO_BIN_EXE_voxsketch"))
        .args(["eval", "--weights", "/nonexistent", "--dataset", "/nonexistent"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent"));
}
