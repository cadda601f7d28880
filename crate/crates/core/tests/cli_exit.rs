use std::path::Path;
use std::process::{Command, Output};

fn ccfmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccfmap"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_inputs(dir: &Path) {
    let out = ccfmap(&[
        "synth",
        "--out-dir",
        s(dir),
        "--width",
        "24",
        "--height",
        "24",
        "--seed",
        "4",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn train_args<'a>(dir: &'a Path, out: &'a Path) -> Vec<String> {
    [
        "train",
        "--scene",
        s(&dir.join("scene.hdr")),
        "--points",
        s(&dir.join("points.csv")),
        "--env-points",
        s(&dir.join("env_points.csv")),
        "--out-dir",
        s(out),
    ]
    .iter()
    .map(|a| a.to_string())
    .collect()
}

fn run(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ccfmap(&refs)
}

#[test]
fn full_run_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let (inputs, out) = (tmp.path().join("in"), tmp.path().join("out"));
    synth_inputs(&inputs);

    let trained = run(&train_args(&inputs, &out));
    assert_eq!(
        trained.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&trained.stderr)
    );
    let kv = std::fs::read_to_string(out.join("rejections.kv")).unwrap();
    assert!(kv.contains("points = 115\naccepted = 115\n"), "{kv}");

    let classified = ccfmap(&[
        "classify",
        "--model",
        s(&out.join("model.ccf")),
        "--scene",
        s(&inputs.join("scene.hdr")),
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(classified.status.code(), Some(0));
    let evaluated = ccfmap(&[
        "evaluate",
        "--grid",
        s(&out.join("classmap.grid")),
        "--mask",
        s(&inputs.join("mask.png")),
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(evaluated.status.code(), Some(0));
    assert!(out.join("eval.kv").is_file());
}

#[test]
fn missing_input_file_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let (inputs, out) = (tmp.path().join("in"), tmp.path().join("out"));
    synth_inputs(&inputs);
    std::fs::remove_file(inputs.join("points.csv")).unwrap();

    let res = run(&train_args(&inputs, &out));
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("points.csv"), "{stderr}");
    // inputs are checked before anything is written
    assert!(!out.join("model.ccf").exists());
}

#[test]
fn per_class_beyond_smallest_class_exits_two_naming_it() {
    let tmp = tempfile::tempdir().unwrap();
    let (inputs, out) = (tmp.path().join("in"), tmp.path().join("out"));
    synth_inputs(&inputs);
    // the synth default gives thatch the fewest points (20)
    let mut args = train_args(&inputs, &out);
    args.extend(["--per-class".to_string(), "21".to_string()]);
    let res = run(&args);
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("thatch"), "{stderr}");
}

#[test]
fn malformed_model_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = tmp.path().join("in");
    synth_inputs(&inputs);
    let model = tmp.path().join("bad.ccf");
    std::fs::write(&model, "ccfmap-forest\nformat_version 999\n").unwrap();
    let res = ccfmap(&[
        "classify",
        "--model",
        s(&model),
        "--scene",
        s(&inputs.join("scene.hdr")),
        "--out-dir",
        s(tmp.path()),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("999"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(ccfmap(&["train"]).status.code(), Some(2));
    assert_eq!(ccfmap(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ccfmap(&["--help"]).status.code(), Some(0));
}
