//! Runs the five access-control scenarios shipped in `fixtures/scenarios`,
//! or any scenario files given on the command line.
//!
//! ```sh
//! cargo run --example scenarios
//! cargo run --example scenarios -- my_scenario.json
//! ```

use std::path::PathBuf;

use aabac::scenario::{run_scenario, ScenarioSpec};

fn main() {
    let mut files: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    if files.is_empty() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios");
        files = (1..=5).map(|i| dir.join(format!("scenario{i}.json"))).collect();
    }
    let mut failed = 0;
    for f in files {
        let text = std::fs::read_to_string(&f).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        let spec = ScenarioSpec::from_json(&text).unwrap();
        println!("{}: {}", spec.id, spec.policy_text);
        let report = run_scenario(&spec).unwrap();
        println!("{report}");
        failed += !report.passed() as usize;
    }
    std::process::exit(failed.min(1) as i32);
}
