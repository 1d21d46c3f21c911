#![no_main]

use libfuzzer_sys::fuzz_target;
use nfce::dictionary::parse_csv;

// First two bytes pick the expected shape; the rest is the CSV text.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let (rows, cols) = (data[0] as usize % 17, data[1] as usize % 17);
    if let Ok(m) = parse_csv(&data[2..], rows, cols) {
        assert_eq!((m.nrows(), m.ncols()), (rows, cols));
    }
});
