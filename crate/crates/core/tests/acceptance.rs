//! Acceptance gate: every criterion at the stated sizes and tolerances,
//! one pass/fail line each followed by its sub-checks. Numeric arguments
//! select criteria by id (`cargo test --test acceptance -- 3 8`).

use std::process::ExitCode;

use seqcs::harness::verify::{Scale, CRITERIA};

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, _, f) in CRITERIA {
        if !only.is_empty() && !only.contains(id) {
            continue;
        }
        let report = f(Scale::Full);
        println!("{report}");
        ran += 1;
        if !report.passed() {
            failed.push(*id);
        }
    }
    println!(
        "acceptance: {} of {ran} criteria passed{}",
        ran - failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {failed:?}")
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
