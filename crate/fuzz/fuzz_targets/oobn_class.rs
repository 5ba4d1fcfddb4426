#![no_main]

use chainvoice_core::oobn::OobnClass;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(class) = OobnClass::from_json(text) {
        let _ = class.validate();
    }
});
