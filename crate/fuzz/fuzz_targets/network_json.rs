#![no_main]

use chainvoice_core::bn::{build_network, query, Evidence, NetworkSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = NetworkSpec::from_json(text) else {
        return;
    };
    let Ok(net) = build_network(&spec) else {
        return;
    };
    if let Some(node) = spec.nodes.first() {
        let _ = query(&net, &Evidence::new(), &node.id);
    }
});
