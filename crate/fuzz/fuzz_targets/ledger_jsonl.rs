#![no_main]

use std::sync::OnceLock;

use chainvoice_core::ledger::{parse_ledger_jsonl, verify_log, KeyRing, World, WorldConfig};
use libfuzzer_sys::fuzz_target;

fn keys() -> &'static KeyRing {
    static WORLD: OnceLock<World> = OnceLock::new();
    WORLD
        .get_or_init(|| World::bootstrap(&WorldConfig::standard()).expect("bundled world"))
        .keys()
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(entries) = parse_ledger_jsonl(text) {
        let _ = verify_log(&entries, keys());
    }
});
