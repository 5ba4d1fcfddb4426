#![no_main]

use chainvoice_core::model::{run_scenario, FinanceModel, ScenarioSet};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(set) = ScenarioSet::from_json(text) else {
        return;
    };
    let model = FinanceModel::golden();
    for s in set.scenarios() {
        let _ = run_scenario(model.network(s.model), s);
    }
});
