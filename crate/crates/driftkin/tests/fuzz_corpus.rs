//! Replays the checked-in fuzz seeds through the parsers.

use std::path::Path;

use driftkin::moments::{parse_moment_csv, write_moment_csv};
use driftkin::scenario::parse_scenario_str;
use driftkin::Error;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.display().to_string(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn scenario_seeds_parse_or_fail_cleanly() {
    let mut ok = 0;
    for (name, text) in seeds("parse_scenario") {
        match parse_scenario_str(&text) {
            Ok(s) => {
                ok += 1;
                assert!(s.numerics.epsilons.windows(2).all(|w| w[1] < w[0]), "{name}");
                let _ = s.field.build();
            }
            Err(Error::Parse { line, column, .. }) => assert!(line >= 1 && column >= 1, "{name}"),
            Err(Error::Validation { key, .. }) => assert!(!key.is_empty(), "{name}"),
            Err(e) => panic!("{name}: {e}"),
        }
    }
    assert!(ok >= 1);
}

#[test]
fn moment_csv_seeds_round_trip() {
    let mut ok = 0;
    for (name, text) in seeds("parse_moment_csv") {
        if let Ok(rows) = parse_moment_csv(&text) {
            ok += 1;
            assert_eq!(parse_moment_csv(&write_moment_csv(&rows)).unwrap(), rows, "{name}");
        }
    }
    assert!(ok >= 1);
}
