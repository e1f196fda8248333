//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. `ACCEPTANCE_ONLY=2,5` restricts the run.

use std::process::ExitCode;
use std::time::Instant;

use pilot_relax::checks::{Acceptance, CRITERIA};

fn selected() -> Vec<u8> {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(list) => list
            .split(',')
            .filter_map(|s| s.trim().parse().ok())
            .collect(),
        Err(_) => CRITERIA.to_vec(),
    }
}

fn main() -> ExitCode {
    let suite = Acceptance::default();
    let mut failed = 0;
    for id in selected() {
        let start = Instant::now();
        let outcome = suite.evaluate(id);
        println!("{outcome} [{:.0}s]", start.elapsed().as_secs_f64());
        if !outcome.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
