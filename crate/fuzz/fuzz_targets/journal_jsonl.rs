#![no_main]

use chainvoice_core::xchain::Journal;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(journal) = Journal::from_jsonl(text) {
        // a parsed journal must survive a write/read cycle unchanged
        let again = Journal::from_jsonl(&journal.to_jsonl()).expect("round trip");
        assert_eq!(again.records(), journal.records());
        let _ = journal.open_count();
    }
});
