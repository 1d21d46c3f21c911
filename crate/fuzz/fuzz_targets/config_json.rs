#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        _ = nfce::SimulationConfig::from_json_str(text);
        // Also exercises the scenario section.
        _ = nfce_harness::parse_config(text);
    }
});
