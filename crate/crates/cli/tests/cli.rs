use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_corrdecay"))
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn error_kind(out: &Output) -> String {
    let line = String::from_utf8_lossy(&out.stderr);
    let last = line.lines().last().unwrap_or_default();
    let v: serde_json::Value = serde_json::from_str(last).unwrap_or_else(|_| panic!("stderr is not JSON: {line}"));
    v["error"]["kind"].as_str().unwrap().to_string()
}

/// Writes the alternating `a b a b ...` text and its ±1 vectors.
fn alternating_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let text: Vec<&str> = (0..100).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
    let input = dir.join("ab.txt");
    fs::write(&input, text.join(" ")).unwrap();
    let vectors = dir.join("vec.txt");
    fs::write(&vectors, "a 1.0\nb -1.0\n").unwrap();
    (input, vectors)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert!(run(&["--help"]).status.success());
    assert!(run(&["--version"]).status.success());
    assert!(run(&["analyze", "--help"]).status.success());
}

#[test]
fn usage_errors_exit_one_with_json() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "UsageError");
    let out = run(&["analyze", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["analyze", "--random-dim", "4"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "ParamError");
    let out = run(&["fit", "--curve", "x.csv", "--range", "10:5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_embedding_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = alternating_inputs(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "analyze",
        "--input",
        p(&input),
        "--embeddings",
        p(&dir.path().join("absent.txt")),
        "--out",
        p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "FileNotFound");
    assert!(!out_dir.exists());
}

#[test]
fn exact_power_text_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (input, vectors) = alternating_inputs(dir.path());
    let args = |out: &Path| {
        vec![
            "analyze".to_string(),
            "--input".into(),
            p(&input).into(),
            "--embeddings".into(),
            p(&vectors).into(),
            "--fmax".into(),
            "1".into(),
            "--cmin".into(),
            "1".into(),
            "--svg".into(),
            "--out".into(),
            p(out).into(),
        ]
    };
    let first = dir.path().join("first");
    let out = bin().args(args(&first)).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fits: serde_json::Value = serde_json::from_str(&fs::read_to_string(first.join("fits.json")).unwrap()).unwrap();
    let range = &fits["ranges"][0];
    assert_eq!(range["best"], "power");
    let power = range["fits"].as_array().unwrap().iter().find(|f| f["kind"] == "power").unwrap();
    assert!(power["mape"].as_f64().unwrap() < 1e-9);

    let second = dir.path().join("second");
    assert!(bin().args(args(&second)).output().unwrap().status.success());
    let mut names: Vec<_> = fs::read_dir(&first).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in &names {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name:?} differs");
    }

    let report = run(&["report", "--dir", p(&first)]);
    assert!(report.status.success());
    let check: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert!(check["max_mape_deviation"].as_f64().unwrap() <= 1e-12);

    fs::write(first.join("fits.json"), "{}").unwrap();
    assert_eq!(run(&["report", "--dir", p(&first)]).status.code(), Some(2));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let (input, vectors) = alternating_inputs(dir.path());
    let config = serde_json::json!({
        "input": {"path": input},
        "embedding": {"pretrained": {"path": vectors}},
        "filter": {"f_max": 1.0, "c_min": 1},
        "ranges": [{"start": 2, "end": 50}],
        "out": dir.path().join("from-config"),
    });
    let config_path = dir.path().join("config.json");
    fs::write(&config_path, config.to_string()).unwrap();
    let out_dir = dir.path().join("overridden");
    let out = run(&["analyze", "--config", p(&config_path), "--out", p(&out_dir), "--range", "2:20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("from-config").exists());
    let fits: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("fits.json")).unwrap()).unwrap();
    assert_eq!(fits["ranges"][0]["tau_end"], 20);
}

#[test]
fn fit_subcommand_recovers_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("tau,c\n");
    for t in (1..10).chain((1..10).map(|n| n * 10)) {
        csv.push_str(&format!("{t},{:.17e}\n", 2.0 * (t as f64).powf(-0.5)));
    }
    let curve = dir.path().join("curve.csv");
    fs::write(&curve, csv).unwrap();
    let out = run(&["fit", "--curve", p(&curve), "--range", "1:90"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let power = &report["ranges"][0]["fits"][0];
    assert_eq!(power["kind"], "power");
    assert!((power["params"]["alpha"].as_f64().unwrap() + 0.5).abs() < 1e-12);
    assert!((power["params"]["beta"].as_f64().unwrap() - 2.0).abs() < 1e-12);

    let scan_dir = dir.path().join("scan");
    assert!(run(&["scan", "--curve", p(&curve), "--out", p(&scan_dir), "--svg"]).status.success());
    let best = fs::read_to_string(scan_dir.join("scan_best.csv")).unwrap();
    assert!(best.lines().nth(1).unwrap().ends_with('P'));
    assert!(scan_dir.join("scan_best.svg").exists());
}

#[test]
fn all_negative_curve_is_a_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("neg.csv");
    fs::write(&curve, "tau,c\n0,1\n1,-0.5\n2,-0.25\n3,-0.1\n").unwrap();
    let out = run(&["fit", "--curve", p(&curve)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "AllNonPositiveError");
}

#[test]
fn synth_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = assets().join("specs/markov_2state.json");
    let a = dir.path().join("a.txt");
    let exact = dir.path().join("exact.csv");
    let args = ["synth", "markov", "--spec", p(&spec), "--n", "5000", "--seed", "4"];
    assert!(bin().args(args).args(["--out", p(&a), "--exact-curve", p(&exact), "--tau-max", "10"]).status().unwrap().success());
    let again = bin().args(args).output().unwrap();
    assert_eq!(fs::read(&a).unwrap(), again.stdout);
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 5000);
    let c3: f64 = fs::read_to_string(&exact)
        .unwrap()
        .lines()
        .find(|l| l.starts_with("3,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((c3 - 0.512).abs() < 1e-12);

    let pcfg = assets().join("specs/pcfg_binary.json");
    let t1 = run(&["synth", "pcfg", "--spec", p(&pcfg), "--seed", "1"]);
    let t2 = run(&["synth", "pcfg", "--spec", p(&pcfg), "--seed", "1"]);
    assert!(t1.status.success());
    assert_eq!(t1.stdout, t2.stdout);
    assert_eq!(String::from_utf8(t1.stdout).unwrap().lines().count(), 1 << 16);
}

#[test]
fn bad_spec_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    fs::write(&spec, r#"{"states":["a"],"transition":[[0.5]],"encoding":{"a":[1.0]}}"#).unwrap();
    let out = run(&["synth", "markov", "--spec", p(&spec), "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "SpecError");
}

#[test]
fn clean_and_shuffle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("book.txt");
    fs::write(
        &input,
        "Header junk\n*** START OF THE PROJECT GUTENBERG EBOOK X ***\nCall me Ishmael. [Illustration: a whale]\n*** END OF THE PROJECT GUTENBERG EBOOK X ***\nLicense",
    )
    .unwrap();
    let profile = assets().join("profiles/gutenberg.json");
    let out = run(&["clean", "--input", p(&input), "--clean", p(&profile)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.trim(), "Call me Ishmael.");

    let s1 = run(&["shuffle", "--input", p(&input), "--seed", "42"]);
    let s2 = run(&["shuffle", "--input", p(&input), "--seed", "42"]);
    assert_eq!(s1.stdout, s2.stdout);
    let mut shuffled: Vec<String> = String::from_utf8(s1.stdout).unwrap().lines().map(String::from).collect();
    shuffled.sort();
    assert_eq!(shuffled.len(), 23);
}
