use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hypent::{compare_estimators, exit, resolve_map, run, Experiment, ExperimentReport, ExperimentSpec, RunError};
use hypent_core::geom::Tolerances;
use hypent_core::map::builtin;
use tempfile::TempDir;

fn hypent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypent")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read_counts(path: &Path) -> Vec<(usize, u64)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].parse().unwrap(), rec[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn counts_for_baker3_are_powers_of_three() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let o = hypent(&["counts", "--map", "baker3", "--n-max", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), exit::OK, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_counts(&out.join("counts.csv"));
    let expected: Vec<(usize, u64)> = (1..=10).map(|n| (n, 3u64.pow(n as u32))).collect();
    assert_eq!(rows, expected);
    assert!(out.join("report.json").is_file());
}

#[test]
fn full_report_for_cat_has_every_section() {
    let dir = TempDir::new().unwrap();
    let spec = ExperimentSpec::new(Experiment::FullReport, "cat", dir.path().join("cat"));
    let report = run(spec).unwrap();
    for s in ["hstar", "spectrum", "mme", "periodic", "counts", "compare"] {
        assert!(report.sections.contains_key(s), "missing section {s}");
    }
    for f in ["counts.csv", "hstar.json", "ulam.coo", "measure_mme.csv", "report.json", "periodic.csv"] {
        assert!(dir.path().join("cat").join(f).is_file(), "missing {f}");
    }
    let fixed: Vec<u64> =
        report.sections["periodic"].as_array().unwrap().iter().map(|c| c["fixed_count"].as_u64().unwrap()).collect();
    assert_eq!(fixed[..8], [1, 5, 16, 45, 121, 320, 841, 2205]);
    assert!(report.passed, "{:#?}", report.checks);
}

#[test]
fn report_echoes_resolved_parameters_and_seed() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r");
    let o = hypent(&["hstar", "--map", "baker2u:0.4", "--n-max", "8", "--seed", "42", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), exit::OK);
    let report: ExperimentReport = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.spec.seed, 42);
    assert_eq!(report.spec.params.n_max, 8);
    assert_eq!(report.spec.params.fit_window, Some((4, 8)));
    assert_eq!(report.version, env!("CARGO_PKG_VERSION"));
    let hstar: serde_json::Value = serde_json::from_slice(&fs::read(out.join("hstar.json")).unwrap()).unwrap();
    assert_eq!(hstar["seed"], 42);
    assert!((hstar["estimate"]["hstar"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn malformed_config_leaves_no_artifacts() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("syntax.json", "{ \"n_max\": "),
        ("unknown.json", "{\"n_max\": 5, \"colour\": 1}"),
        ("range.json", "{\"q\": 2.0}"),
    ];
    for (name, text) in cases {
        let cfg = dir.path().join(name);
        fs::write(&cfg, text).unwrap();
        let out = dir.path().join(format!("out-{name}"));
        let o =
            hypent(&["counts", "--map", "baker3", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), exit::CONFIG, "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{name} produced artifacts");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: config"));
    }
}

#[test]
fn bad_map_documents_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("map.json");
    fs::write(&path, "{\"name\": \"x\"}").unwrap();
    let out = dir.path().join("out");
    let o = hypent(&["counts", "--map", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), exit::CONFIG);
    let o = hypent(&["counts", "--map", "nosuchmap", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), exit::CONFIG);
    assert!(!out.exists());
}

#[test]
fn map_documents_load_from_disk() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("baker3.json");
    fs::write(&path, serde_json::to_string(&builtin("baker3").unwrap()).unwrap()).unwrap();
    let (a, b) = (dir.path().join("file"), dir.path().join("builtin"));
    assert_eq!(
        code(&hypent(&["counts", "--map", path.to_str().unwrap(), "--n-max", "6", "--out", a.to_str().unwrap()])),
        0
    );
    assert_eq!(code(&hypent(&["counts", "--map", "baker3", "--n-max", "6", "--out", b.to_str().unwrap()])), 0);
    assert_eq!(fs::read(a.join("counts.csv")).unwrap(), fs::read(b.join("counts.csv")).unwrap());
}

#[test]
fn non_hyperbolic_maps_fail_certification() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("identity.json");
    let doc = r#"{"name": "identity", "ambient": "square",
        "domains": [[[0, 0], [1, 0], [1, 1], [0, 1]]],
        "branches": [{"domain": 0, "linear": [[1, 0], [0, 1]], "offset": [0, 0]}]}"#;
    fs::write(&path, doc).unwrap();
    let out = dir.path().join("out");
    let o = hypent(&["counts", "--map", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), exit::CERTIFICATION, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn cap_violations_have_their_own_exit_code() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cap.json");
    fs::write(&cfg, "{\"cap\": 50}").unwrap();
    let out = dir.path().join("out");
    let o = hypent(&["counts", "--map", "cat", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), exit::CAP, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&hypent(&["frobnicate"])), exit::USAGE);
    assert_eq!(code(&hypent(&["counts"])), exit::USAGE);
    assert_eq!(code(&hypent(&["counts", "--map", "cat", "--n-max", "ten"])), exit::USAGE);
}

#[test]
fn identical_seeds_give_identical_csv() {
    let dir = TempDir::new().unwrap();
    let go = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = hypent(&["bowen", "--map", "baker2u:0.4", "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), exit::OK, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("bowen.csv")).unwrap()
    };
    let a = go("a", "7");
    let b = go("b", "7");
    let c = go("c", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn mme_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let go = |name: &str| {
        let out = dir.path().join(name);
        assert_eq!(code(&hypent(&["mme", "--map", "cat", "--depth", "3", "--out", out.to_str().unwrap()])), 0);
        (fs::read(out.join("measure_mme.csv")).unwrap(), fs::read(out.join("ulam.coo")).unwrap())
    };
    assert_eq!(go("a"), go("b"));
}

#[test]
fn list_builtins_names_every_map() {
    let o = hypent(&["list-builtins"]);
    assert_eq!(code(&o), exit::OK);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["baker3", "cat", "baker2u:0.4"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    assert!(resolve_map("baker2u:0.4", &Tolerances::default()).is_ok());
    assert_eq!(text, hypent::list_builtins());
}

#[test]
fn estimators_agree_on_the_builtins() {
    let tol = Tolerances::default();
    let ln3 = 3f64.ln();
    let t = compare_estimators(&resolve_map("baker3", &tol).unwrap(), 10, 4).unwrap();
    for v in [t.hstar_fit, t.log_lambda, t.entropy] {
        assert!((v - ln3).abs() < 1e-6, "{t:?}");
    }
    assert!(t.passed);

    let ln2 = 2f64.ln();
    let t = compare_estimators(&resolve_map("baker2u:0.4", &tol).unwrap(), 10, 4).unwrap();
    for v in [t.hstar_fit, t.log_lambda, t.entropy] {
        assert!((v - ln2).abs() < 0.02, "{t:?}");
    }
    assert!(t.passed);

    let h = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    let t = compare_estimators(&resolve_map("cat", &tol).unwrap(), 10, 4).unwrap();
    assert!(t.spread < 0.05, "{t:?}");
    for v in [t.hstar_fit, t.log_lambda, t.entropy] {
        assert!((v - h).abs() < 0.05, "{t:?}");
    }
    assert_eq!(t.differences.len(), 3);
}

#[test]
fn compare_rejects_out_of_range_parameters() {
    let map = resolve_map("baker3", &Tolerances::default()).unwrap();
    assert!(matches!(compare_estimators(&map, 0, 4), Err(RunError::Config(_))));
    assert!(matches!(compare_estimators(&map, 10, 99), Err(RunError::Config(_))));
}

#[test]
fn constant_correlations_are_hard_checks() {
    let dir = TempDir::new().unwrap();
    let mut spec = ExperimentSpec::new(Experiment::Correlations, "baker3", dir.path().join("c"));
    spec.params.depth = 3;
    let report = run(spec).unwrap();
    let c = report.checks.iter().find(|c| c.name.starts_with("constant correlation")).unwrap();
    assert!(c.hard && c.passed, "{c:?}");
    assert_eq!(report.exit_code(), exit::OK);
}
