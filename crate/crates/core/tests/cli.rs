use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use haslr::dataset::synth_dataset;
use haslr::gradfeat::{extract_features, MappingFunction, DEFAULT_EPS};
use haslr::imagekit::load_grayscale;

const SMALL: [&str; 4] = ["--height", "16", "--width", "12"];

fn haslr(args: &[&str]) -> Output {
    haslr_env(args, None)
}

fn haslr_env(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_haslr"));
    cmd.args(args).env_remove("HASLR_CONFIG");
    if let Some(c) = config {
        cmd.env("HASLR_CONFIG", c);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_prints_defaults() {
    let o = haslr(&["recognize", "--help"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for d in [
        "tanh", "7.3", "0.51", "100", "nig", "1e-6", "0.10", "500", "42", "30",
    ] {
        assert!(
            text.contains(&format!("[default: {d}]")),
            "missing default {d}"
        );
    }
}

#[test]
fn argument_and_io_errors() {
    assert_eq!(code(&haslr(&[])), 2);
    assert_eq!(code(&haslr(&["bench", "--synth", "3", "--rates", "x"])), 2);
    assert_eq!(code(&haslr(&["extract", "missing.pgm"])), 3);

    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img.pgm");
    fs::write(&img, b"P5\n2 2\n255\n\x00\x10\x20\x30").unwrap();
    assert_eq!(code(&haslr(&["extract", p(&img), "--mapping", "relu"])), 2);
    let bad = dir.path().join("bad.pgm");
    fs::write(&bad, b"P5\n9 9\n255\n\x00").unwrap();
    assert_eq!(code(&haslr(&["extract", p(&bad)])), 3);

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "path,label,split\n").unwrap();
    let o = haslr(&["recognize", p(&img), "--manifest", p(&empty)]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
}

#[test]
fn diverging_solver_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(3, (16, 12), 1, dir.path()).unwrap();
    let manifest = dir.path().join("manifest.csv");
    let probe = dir.path().join("class001_test.pgm");
    let mut args = vec![
        "recognize",
        p(&probe),
        "--manifest",
        p(&manifest),
        "--beta",
        "1e-320",
    ];
    args.extend(SMALL);
    let o = haslr(&args);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn extract_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(2, (16, 12), 3, dir.path()).unwrap();
    let img = dir.path().join("class002_train.pgm");
    let out = dir.path().join("f.json");
    let mut args = vec!["extract", p(&img), "-o", p(&out)];
    args.extend(SMALL);
    assert_eq!(code(&haslr(&args)), 0);

    let json: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let feats = extract_features(
        &load_grayscale(&img, 16, 12).unwrap(),
        &MappingFunction::default(),
        DEFAULT_EPS,
    )
    .unwrap();
    for w in 1..=3 {
        let got: Vec<f64> = serde_json::from_value(json[format!("order{w}")].clone()).unwrap();
        assert_eq!(got, feats.order(w));
    }
    assert_eq!(json["shape"], serde_json::json!([16, 12]));
    assert_eq!(json["mapping"]["kind"], "tanh");
}

#[test]
fn recognize_training_image_and_repeat() {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(5, (16, 12), 2, dir.path()).unwrap();
    let manifest = dir.path().join("manifest.csv");
    let img = dir.path().join("class004_train.pgm");
    let diag = dir.path().join("diag.json");
    let mut args = vec![
        "recognize",
        p(&img),
        "--manifest",
        p(&manifest),
        "--diagnostics",
        p(&diag),
    ];
    args.extend(SMALL);
    let first = haslr(&args);
    assert_eq!(
        code(&first),
        0,
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let line = stdout(&first);
    assert!(
        line.starts_with("identity=4 frequency=3 tie_broken="),
        "{line}"
    );
    let second = haslr(&args);
    assert_eq!(stdout(&second), line);
    let d: serde_json::Value = serde_json::from_slice(&fs::read(&diag).unwrap()).unwrap();
    assert_eq!(d["top_lists"].as_array().unwrap().len(), 3);
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img.pgm");
    fs::write(&img, b"P5\n2 2\n255\n\x00\x10\x20\x30").unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"mapping": "relu"}"#).unwrap();
    assert_eq!(code(&haslr_env(&["extract", p(&img)], Some(&cfg))), 2);
    assert_eq!(
        code(&haslr_env(
            &["extract", p(&img), "--mapping", "softsign"],
            Some(&cfg)
        )),
        0
    );

    fs::write(&cfg, r#"{"mapping": "sigmoid", "u": 2.0}"#).unwrap();
    let o = haslr_env(&["extract", p(&img), "--u", "3.0"], Some(&cfg));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["mapping"]["kind"], "sigmoid");
    assert_eq!(json["mapping"]["u"], 3.0);
    assert_eq!(json["mapping"]["v"], 0.51);

    fs::write(&cfg, r#"{"unknown": 1}"#).unwrap();
    assert_eq!(code(&haslr_env(&["extract", p(&img)], Some(&cfg))), 2);
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&haslr_env(&["extract", p(&img)], Some(&missing))), 3);
}

#[test]
fn occlude_writes_image() {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(2, (16, 12), 3, dir.path()).unwrap();
    let img = dir.path().join("class001_train.pgm");
    let out = dir.path().join("occ.pgm");
    let mut args = vec![
        "occlude",
        p(&img),
        "--rate",
        "0.25",
        "--anchor",
        "2,3",
        "-o",
        p(&out),
    ];
    args.extend(SMALL);
    assert_eq!(code(&haslr(&args)), 0);
    let before = load_grayscale(&img, 16, 12).unwrap();
    let after = load_grayscale(&out, 16, 12).unwrap();
    let changed = before
        .pixels()
        .iter()
        .zip(after.pixels())
        .filter(|(a, b)| a != b)
        .count();
    // block area is matched to 48 pixels up to one row of rounding
    assert!(changed > 0 && changed <= 48 + 7, "{changed} pixels changed");

    let mut bad = vec!["occlude", p(&img), "--rate", "1.5", "-o", p(&out)];
    bad.extend(SMALL);
    assert_eq!(code(&haslr(&bad)), 2);
}

#[test]
fn bench_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let mut args = vec![
            "bench",
            "--synth",
            "4",
            "--rates",
            "0.0,0.3",
            "-o",
            p(&out),
            "--seed",
            "5",
        ];
        args.extend(SMALL);
        let o = haslr(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (stdout(&o), fs::read(&out).unwrap())
    };
    let (text, a) = run("a.json");
    let (_, b) = run("b.json");
    assert_eq!(a, b);
    assert!(text.lines().last().unwrap().starts_with("overall="));
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let names: Vec<&str> = report["subsets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["none", "0.30"]);
}

#[test]
fn bench_self_recognition_on_manifest() {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(4, (16, 12), 8, dir.path()).unwrap();
    let manifest = dir.path().join("manifest.csv");
    let out = dir.path().join("r.csv");
    let mut args = vec![
        "bench",
        "--manifest",
        p(&manifest),
        "--rates",
        "0",
        "-o",
        p(&out),
        "--format",
        "csv",
        "--jobs",
        "2",
    ];
    args.extend(SMALL);
    let o = haslr(&args);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().last().unwrap(), "overall=1.0000");
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
