#![no_main]

use libfuzzer_sys::fuzz_target;
use nfce_harness::results::write_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = nfce_harness::parse_results_csv(data) {
        let mut out = Vec::new();
        write_csv(&records, &mut out).expect("parsed records serialize");
    }
});
