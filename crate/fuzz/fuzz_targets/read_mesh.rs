#![no_main]

use hpdg::mesh::{read_mesh, write_mesh};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(m) = read_mesh(s) {
        let again = read_mesh(&write_mesh(&m)).expect("written mesh reads back");
        assert_eq!(again.num_active(), m.num_active());
    }
});
