#![no_main]

use hpdg::harness::{parse_p_range, DegreePolicy};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    match parse_p_range(s) {
        Ok(DegreePolicy::Random { lo, hi }) => assert!(1 <= lo && lo < hi),
        Ok(DegreePolicy::Fixed(p)) => assert!(p >= 1),
        Err(_) => {}
    }
});
