//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//! `cargo test --test acceptance -- 3 8` runs only the listed criteria.

use std::process::ExitCode;

use slitkit::acceptance::{Suite, CRITERIA};

fn main() -> ExitCode {
    let picked: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids: Vec<u32> = CRITERIA.iter().map(|(id, _)| *id).filter(|id| picked.is_empty() || picked.contains(id)).collect();
    let suite = Suite::new();
    let mut failed = Vec::new();
    for id in ids {
        let r = suite.run(id);
        println!("{}", r.line());
        if !r.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria PASS");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED criteria {failed:?}");
        ExitCode::FAILURE
    }
}
