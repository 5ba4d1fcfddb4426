#![no_main]

use chainvoice_core::oobn::{flatten, MasterDocument, OobnClass, OobnError};
use libfuzzer_sys::fuzz_target;

const SUPPLIER_PROFILE: &str = include_str!("../../crates/core/data/models/supplier_profile.json");
const FINANCIAL_INCENTIVE: &str =
    include_str!("../../crates/core/data/models/financial_incentive.json");

fn load(file: &str) -> Result<OobnClass, OobnError> {
    match file {
        "supplier_profile.json" => OobnClass::from_json(SUPPLIER_PROFILE),
        "financial_incentive.json" => OobnClass::from_json(FINANCIAL_INCENTIVE),
        other => Err(OobnError::Parse(format!("no class file {other}"))),
    }
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(doc) = MasterDocument::from_json(text) else {
        return;
    };
    if let Ok(master) = doc.resolve(load) {
        let _ = flatten(&master);
    }
});
