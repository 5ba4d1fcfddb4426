use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data");

fn chainvoice(home: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chainvoice"))
        .args(args)
        .env("CHAINVOICE_HOME", home)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn outcome(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("outcome.json")).unwrap()).unwrap()
}

#[test]
fn bundled_scenarios_pass() {
    let home = tempfile::tempdir().unwrap();
    let o = chainvoice(home.path(), &["scenario", "run"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("15/15 scenarios pass"));
}

#[test]
fn fitted_models_are_picked_up_from_home() {
    let home = tempfile::tempdir().unwrap();
    let o = chainvoice(home.path(), &["fit"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(home.path().join("models").is_dir());
    let o = chainvoice(home.path(), &["scenario", "run"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn unknown_node_is_named() {
    let home = tempfile::tempdir().unwrap();
    let path = home.path().join("bad.json");
    let set = json!({ "scenarios": [{
        "name": "ghost", "model": "supplier_profile", "evidence": { "Ghost": "Yes" },
        "targets": [{ "node": "SupplierProfile", "state": "LowRisk", "expected": 0.5, "tolerance": 0.01 }],
    }]});
    fs::write(&path, set.to_string()).unwrap();
    let o = chainvoice(
        home.path(),
        &["scenario", "run", "--scenarios", path.to_str().unwrap()],
    );
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("Ghost"), "{}", stderr(&o));
}

#[test]
fn empty_scenario_list_passes() {
    let home = tempfile::tempdir().unwrap();
    let path = home.path().join("empty.json");
    fs::write(&path, r#"{ "scenarios": [] }"#).unwrap();
    let o = chainvoice(
        home.path(),
        &["scenario", "run", "--scenarios", path.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("0/0 scenarios pass"));
}

#[test]
fn sim_happy_path_commits() {
    let home = tempfile::tempdir().unwrap();
    let out = home.path().join("run");
    let o = chainvoice(home.path(), &["sim", "run", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = outcome(&out);
    assert_eq!(v["decision"], "Fund");
    assert_eq!(v["settlement"]["amount"], 10_000);
    assert!(v["steps"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s["status"] == "done"));
    for f in [
        "world.json",
        "journal.jsonl",
        "trace.txt",
        "ledger/T2T3.jsonl",
        "ledger/T3Fin.jsonl",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn crash_before_step_eleven_leaves_no_trace() {
    let home = tempfile::tempdir().unwrap();
    let out = home.path().join("run");
    let o = chainvoice(
        home.path(),
        &[
            "sim",
            "run",
            "--fault-step",
            "11",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = outcome(&out);
    assert_eq!(v["pre_tx_digest"], v["final_digest"]);
    assert!(v.get("settlement").is_none());
    assert_eq!(v["steps"][10]["status"], "failed");
}

#[test]
fn fault_flags_are_validated() {
    let home = tempfile::tempdir().unwrap();
    let o = chainvoice(home.path(), &["sim", "run", "--fault-step", "13"]);
    assert_eq!(o.status.code(), Some(2));
    let o = chainvoice(
        home.path(),
        &["sim", "run", "--fault-step", "3", "--fault-phase", "commit"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_fixtures_file_is_an_error() {
    let home = tempfile::tempdir().unwrap();
    let missing = home.path().join("nope.json");
    let o = chainvoice(
        home.path(),
        &["sim", "run", "--fixtures", missing.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn bundled_inputs_match_defaults() {
    let home = tempfile::tempdir().unwrap();
    let (a, b) = (home.path().join("a"), home.path().join("b"));
    let o = chainvoice(home.path(), &["sim", "run", "--out", a.to_str().unwrap()]);
    assert!(o.status.success());
    let files = [
        format!("--world={DATA}/world.json"),
        format!("--request={DATA}/request.json"),
        format!("--fixtures={DATA}/fixtures.json"),
        format!("--models={DATA}/models"),
    ];
    let mut args = vec!["sim", "run", "--out", b.to_str().unwrap()];
    args.extend(files.iter().map(String::as_str));
    let o = chainvoice(home.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "outcome.json",
        "journal.jsonl",
        "world.json",
        "ledger/T2T3.jsonl",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn same_seed_same_artifacts() {
    let home = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let dir = home.path().join(name);
        let o = chainvoice(
            home.path(),
            &["sim", "run", "--seed", seed, "--out", dir.to_str().unwrap()],
        );
        assert!(o.status.success());
        fs::read(dir.join("world.json")).unwrap()
    };
    assert_eq!(run("a", "7"), run("b", "7"));
    assert_ne!(run("a", "7"), run("c", "8"));
}
