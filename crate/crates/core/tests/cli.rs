//! The `kinverify` binary: subcommands, outputs and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn kinverify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinverify"))
        .args(args)
        .env_remove("KINVERIFY_CACHE")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = kinverify(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_features(dir: &Path, families: &str) {
    ok(&["synth", "--out", p(dir), "--families", families, "--seed", "3"]);
}

fn eval_args<'a>(data: &'a str, bsif: &'a str, deep: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "eval",
        "--manifest",
        data,
        "--bsif-dir",
        bsif,
        "--deep-dir",
        deep,
        "--bsif-shape",
        "6x64",
        "--deep-shape",
        "2x64",
        "--txqda-d2",
        "8",
        "--out",
        out,
    ]
}

#[test]
fn synth_eval_report_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_features(&data, "20");
    let (manifest, bsif, deep) = (data.join("manifest.csv"), data.join("bsif"), data.join("deep"));
    let out = tmp.path().join("run");
    let table = ok(&eval_args(p(&manifest), p(&bsif), p(&deep), p(&out)));
    for method in ["bsif", "deep", "fused", "bsif_raw", "deep_raw"] {
        assert!(
            table.lines().any(|l| l.starts_with(method)),
            "{method} missing from\n{table}"
        );
    }
    let report = out.join("report.json");
    assert!(report.is_file());
    assert!(out.join("audit.json").is_file());
    assert!(out.join("roc/PC.svg").is_file());
    assert!(out.join("scores/PC_fold0_test.csv").is_file());

    let svg_dir = tmp.path().join("svg");
    assert_eq!(ok(&["report", "--report", p(&report), "--out", p(&svg_dir)]), table);
    assert!(svg_dir.join("PC.svg").is_file());

    let cmp = ok(&["compare", "--report", p(&report), "--dataset", "cornell"]);
    assert!(cmp.contains("94.82"), "{cmp}");
    let cmp = ok(&["compare", "--report", p(&report), "--dataset", "ub"]);
    assert!(cmp.contains("91.94"), "{cmp}");
}

#[test]
fn train_then_fuse() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_features(&data, "20");
    let (manifest, bsif, deep) = (data.join("manifest.csv"), data.join("bsif"), data.join("deep"));
    let out = tmp.path().join("train");
    let mut args = eval_args(p(&manifest), p(&bsif), p(&deep), p(&out));
    args[0] = "train";
    ok(&args);
    assert!(out.join("models/PC_fold0_bsif.kinarch").is_file());
    assert!(out.join("models/PC_fold0_fusion.json").is_file());
    assert!(!out.join("report.json").exists());

    let fused = tmp.path().join("fused");
    let text = ok(&[
        "fuse",
        "--train",
        p(&out.join("scores/PC_fold0_train.csv")),
        "--test",
        p(&out.join("scores/PC_fold0_test.csv")),
        "--matchers",
        "bsif,deep",
        "--out",
        p(&fused),
    ]);
    assert!(text.starts_with("test accuracy"), "{text}");
    assert!(fused.join("fused_test.csv").is_file());
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fused.join("fusion.json")).unwrap()).unwrap();
    assert_eq!(model["lr"]["a"].as_array().unwrap().len(), 2);
}

#[test]
fn image_pipeline_extracts_and_evaluates() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("faces");
    ok(&["synth", "--out", p(&data), "--families", "10", "--images"]);
    let manifest = data.join("manifest.csv");
    let feats = tmp.path().join("feats");
    ok(&[
        "extract",
        "--manifest",
        p(&manifest),
        "--out",
        p(&feats),
        "--msr-scales",
        "2,4,8",
    ]);
    assert!(std::fs::read_dir(&feats).unwrap().count() >= 20);
    let out = tmp.path().join("run");
    ok(&[
        "eval",
        "--manifest",
        p(&manifest),
        "--channels",
        "bsif",
        "--bsif-dir",
        p(&feats),
        "--txqda-d1",
        "2",
        "--txqda-d2",
        "8",
        "--out",
        p(&out),
    ]);
    assert!(out.join("report.json").is_file());
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_features(&data, "8");
    let (manifest, bsif, deep) = (data.join("manifest.csv"), data.join("bsif"), data.join("deep"));

    // Configuration errors.
    let mut args = eval_args(p(&manifest), p(&bsif), p(&deep), "unused");
    args.extend(["--folds", "1"]);
    assert_eq!(kinverify(&args).status.code(), Some(2));
    assert_eq!(kinverify(&["eval", "--bogus"]).status.code(), Some(2));

    // Data errors: wrong declared shape, missing manifest.
    let out = tmp.path().join("bad");
    let mut args = eval_args(p(&manifest), p(&bsif), p(&deep), p(&out));
    args[8] = "6x65";
    let res = kinverify(&args);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error: "));
    assert!(!out.join("report.json").exists());
    let missing = tmp.path().join("nope.csv");
    assert_eq!(
        kinverify(&eval_args(p(&missing), p(&bsif), p(&deep), p(&out)))
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        kinverify(&["compare", "--report", p(&missing), "--dataset", "cornell"])
            .status
            .code(),
        Some(3)
    );
}
