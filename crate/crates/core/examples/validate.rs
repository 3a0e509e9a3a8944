//! Parses system descriptions and prints the validation report.

use delaylab::system::{validate_spec, SystemSpec};
use delaylab::DelaySystem;

const SPECS: [(&str, &str); 3] = [
    ("stable", r#"{"n": 1, "m": 1, "delays": [1.0], "A": [[[-1.0]], [[-0.5]]], "B": [[[1.0]], [[0.0]]], "omega": {"vertices": [[-1.0], [1.0]]}}"#),
    ("singular A_p", r#"{"n": 1, "m": 1, "delays": [1.0], "A": [[[-1.0]], [[0.0]]], "B": [[[1.0]], [[0.0]]], "omega": {"vertices": [[0.5], [1.0]]}}"#),
    ("bad entry", r#"{"n": 1, "m": 1, "delays": [1.0], "A": [[[-1.0]], [["x"]]], "B": [[[1.0]], [[0.0]]], "omega": {"vertices": [[0.0]]}}"#),
];

fn main() {
    for (name, text) in SPECS {
        println!("== {name}");
        let spec = match SystemSpec::from_json(text) {
            Ok(s) => s,
            Err(e) => {
                println!("   {e}");
                continue;
            }
        };
        let report = validate_spec(&spec).expect("dimensions are consistent");
        for f in &report.findings {
            println!("   {:<20} {:<5} {}", f.check, f.passed, f.detail);
        }
        let sys = DelaySystem::from_spec(&spec).expect("structurally valid");
        assert_eq!(DelaySystem::from_json(&sys.to_spec().to_json()).unwrap(), sys);
    }
}
