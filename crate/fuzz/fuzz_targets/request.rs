#![no_main]

use chainvoice_core::flow::FinancingRequest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = FinancingRequest::from_json(text);
});
