#![no_main]

use hpdg::harness::{parse_csv, render_table};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(t) = parse_csv(s) {
            assert!(t.rows.iter().all(|r| r.len() == t.header.len()));
            let _ = render_table(&t);
        }
    }
});
