#![no_main]

use chainvoice_core::flow::Fixtures;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = Fixtures::from_json(text);
});
