use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn polymer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polymer")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn report(dir: &Path, experiment: &str, seed: u64) -> Value {
    let text = fs::read_to_string(dir.join(experiment).join(format!("seed-{seed}")).join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Report with the wallclock field removed.
fn payload(dir: &Path, experiment: &str, seed: u64) -> Value {
    let mut r = report(dir, experiment, seed);
    r.as_object_mut().unwrap().remove("wallclock_s");
    r
}

const BURKE: &str = r#"{"experiment": "burke", "params": {"points": [[1.5, 0.3], [0.8, -0.2]]}, "seeds": [4], "n_samples": 20000}"#;

#[test]
fn list_is_stable_and_descriptive() {
    let a = polymer(&["list"]);
    assert!(a.status.success());
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split(" → ").next().unwrap()).collect();
    assert_eq!(names.len(), 12);
    assert_eq!(names[0], "burke");
    assert_eq!(names[11], "moments");
    assert!(text.contains("two-row-stationarity → two-row stationarity"));
    assert!(text.contains("she-identities → product form = chaos series = mild equation"));
    assert_eq!(polymer(&["list"]).stdout, a.stdout);
}

#[test]
fn run_writes_report_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "burke.json", BURKE);
    let out = tmp.path().join("out");
    let o = polymer(&["run", &cfg, "--out", out.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out, "burke", 4);
    for key in ["experiment", "paper_ref", "params", "seeds", "results", "wallclock_s"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["results"].as_array().unwrap().len(), 6);
    assert!(r["results"][0]["test"].as_str().unwrap().starts_with("ks:"));
    let resolved: Value = serde_json::from_str(&fs::read_to_string(out.join("burke/config.json")).unwrap()).unwrap();
    assert_eq!(resolved["seeds"], serde_json::json!([4]));
    assert_eq!(resolved["n_samples"], 20000);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "one_row.json",
        r#"{"experiment": "one-row-stationarity", "params": {"rows": [1, 2]}, "seeds": [2], "n_samples": 4000}"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(polymer(&["run", &cfg, "--out", a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(polymer(&["run", &cfg, "--out", b.to_str().unwrap(), "--workers", "3"]).status.code(), Some(0));
    assert_eq!(payload(&a, "one-row-stationarity", 2), payload(&b, "one-row-stationarity", 2));
    for table in ["one_row_m1.csv", "one_row_grid.csv"] {
        let fa = fs::read(a.join("one-row-stationarity/seed-2").join(table)).unwrap();
        let fb = fs::read(b.join("one-row-stationarity/seed-2").join(table)).unwrap();
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{table}");
    }
    // resuming from the checkpoint gives the same payload
    assert_eq!(polymer(&["run", &cfg, "--out", a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(payload(&a, "one-row-stationarity", 2), payload(&b, "one-row-stationarity", 2));
}

#[test]
fn seed_override_changes_outputs_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "burke.json", BURKE);
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    assert_eq!(polymer(&["run", &cfg, "--out", o, "--seed-override", "9"]).status.code(), Some(0));
    let first = payload(&out, "burke", 9);
    assert_ne!(first["results"], payload_or_run(&cfg, o, 4)["results"]);
    let again = tmp.path().join("again");
    assert_eq!(polymer(&["run", &cfg, "--out", again.to_str().unwrap(), "--seed-override", "9"]).status.code(), Some(0));
    assert_eq!(first, payload(&again, "burke", 9));
}

fn payload_or_run(cfg: &str, out: &str, seed: u64) -> Value {
    assert_eq!(polymer(&["run", cfg, "--out", out]).status.code(), Some(0));
    payload(Path::new(out), "burke", seed)
}

#[test]
fn bad_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    let cases = [
        ("malformed.json", r#"{"experiment": "burke", "#),
        ("unknown_key.json", r#"{"experiment": "burke", "samples": 5}"#),
        ("unknown_experiment.json", r#"{"experiment": "bruke"}"#),
        ("bad_param.json", r#"{"experiment": "burke", "params": {"pointz": []}}"#),
        ("invalid_value.json", r#"{"experiment": "burke", "params": {"points": [[-1.0, 0.0]]}, "n_samples": 10}"#),
    ];
    for (name, body) in cases {
        let cfg = write_config(tmp.path(), name, body);
        let r = polymer(&["run", &cfg, "--out", o]);
        assert_eq!(r.status.code(), Some(2), "{name}");
        assert!(String::from_utf8_lossy(&r.stderr).contains("error"), "{name}");
    }
    assert_eq!(polymer(&["run", tmp.path().join("absent.json").to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn failing_suite_exits_1_with_failure_records() {
    let tmp = tempfile::tempdir().unwrap();
    // zero tolerance on the 8th moment cannot pass
    let cfg = write_config(
        tmp.path(),
        "moments.json",
        r#"{"experiment": "moments", "params": {"second_moment_points": [], "ns": [100, 10000],
            "eighth_moment_n": 100, "eighth_moment_samples": 2000, "eighth_moment_tolerance": 0.0},
            "seeds": [1], "n_samples": 10}"#,
    );
    let out = tmp.path().join("out");
    let r = polymer(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    let failures: Value = serde_json::from_str(&fs::read_to_string(out.join("moments/seed-1/failures.json")).unwrap()).unwrap();
    let f = failures.as_array().unwrap();
    assert!(!f.is_empty());
    assert!(f.iter().all(|r| r["pass"] == false));
    // retried with the derived seed
    assert_eq!(report(&out, "moments", 1)["seeds"].as_array().unwrap().len(), 2);
}
