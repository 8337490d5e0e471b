#![no_main]

use driftkin::scenario::{parse_scenario_str, Scenario};
use driftkin::Error;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    match parse_scenario_str(text) {
        Ok(s) => check(&s),
        Err(Error::Parse { line, column, .. }) => {
            assert!(line >= 1 && column >= 1);
            assert!(line <= text.lines().count().max(1) + 1);
        }
        Err(Error::Validation { key, .. }) => assert!(!key.is_empty()),
        Err(e) => panic!("unexpected error kind: {e}"),
    }
});

fn check(s: &Scenario) {
    assert!(s.field.b0 > 0.0 && s.field.b0.is_finite());
    assert!(s.numerics.epsilons.windows(2).all(|w| w[1] < w[0]));
    assert!(s.tolerances.values().all(|t| *t > 0.0 && t.is_finite()));
    // building the field must not panic for anything that validated
    let _ = s.field.build();
    let _ = s.distribution.build();
}
