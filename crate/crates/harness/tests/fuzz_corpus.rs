//! Replays the checked-in fuzz seeds through the same entry points the fuzz
//! targets use, so the seeds stay meaningful without a fuzzing toolchain.

use std::fs;
use std::path::PathBuf;

use nfce::dictionary::{encode_binary, parse_binary, parse_csv};
use nfce_harness::results::write_csv;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn config_seeds() {
    for (name, data) in seeds("config_json") {
        let text = std::str::from_utf8(&data).unwrap();
        let core = nfce::SimulationConfig::from_json_str(text);
        let full = nfce_harness::parse_config(text);
        assert_eq!(full.is_ok(), !name.starts_with("bad"), "{name}");
        assert!(core.is_ok(), "{name}");
    }
}

#[test]
fn dictionary_binary_seeds() {
    for (name, data) in seeds("dict_binary") {
        match parse_binary(&data) {
            Ok(m) => assert_eq!(encode_binary(&m), data, "{name}"),
            Err(_) => assert_eq!(name, "truncated"),
        }
    }
}

#[test]
fn dictionary_csv_seeds() {
    for (name, data) in seeds("dict_csv") {
        let (rows, cols) = (data[0] as usize % 17, data[1] as usize % 17);
        let parsed = parse_csv(&data[2..], rows, cols);
        assert_eq!(parsed.is_ok(), name != "duplicate", "{name}");
    }
}

#[test]
fn results_seeds() {
    for (name, data) in seeds("results_json") {
        assert_eq!(nfce_harness::parse_results_json(&data).is_ok(), name != "unknown_field", "{name}");
    }
    for (name, data) in seeds("results_csv") {
        match nfce_harness::parse_results_csv(&data) {
            Ok(records) => write_csv(&records, Vec::new()).unwrap(),
            Err(_) => assert_eq!(name, "bad_header"),
        }
    }
}
