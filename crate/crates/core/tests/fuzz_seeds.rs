//! Every checked-in fuzz seed must be accepted by its parser.

use std::fs;
use std::path::Path;

use chainvoice_core::bn::{build_network, NetworkSpec};
use chainvoice_core::flow::{FinancingRequest, Fixtures};
use chainvoice_core::ledger::{parse_ledger_jsonl, verify_log, World, WorldConfig};
use chainvoice_core::model::ScenarioSet;
use chainvoice_core::oobn::{MasterDocument, OobnClass};
use chainvoice_core::xchain::Journal;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn document_seeds_parse() {
    for (name, text) in seeds("network_json") {
        build_network(&NetworkSpec::from_json(&text).unwrap())
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in seeds("oobn_class") {
        OobnClass::from_json(&text)
            .and_then(|c| c.validate())
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in seeds("oobn_master") {
        MasterDocument::from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in seeds("scenarios") {
        ScenarioSet::from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in seeds("request") {
        FinancingRequest::from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in seeds("fixtures") {
        Fixtures::from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn log_seeds_verify() {
    let world = World::bootstrap(&WorldConfig::standard()).unwrap();
    for (name, text) in seeds("world_config") {
        World::bootstrap(&WorldConfig::from_json(&text).unwrap())
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in seeds("ledger_jsonl") {
        let entries = parse_ledger_jsonl(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        verify_log(&entries, world.keys()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in seeds("journal_jsonl") {
        let j = Journal::from_jsonl(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(j.to_jsonl(), text, "{name}");
    }
}
