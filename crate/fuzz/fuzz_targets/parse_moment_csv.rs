#![no_main]

use driftkin::moments::{parse_moment_csv, write_moment_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_moment_csv(text) {
        // written tables parse back to the same rows
        let again = parse_moment_csv(&write_moment_csv(&rows)).expect("reparse");
        assert_eq!(rows, again);
    }
});
