//! Acceptance suite: runs every verification criterion at its pinned
//! tolerance and prints one TAP-style line per criterion.

use nilspectral::verify;

#[test]
fn acceptance_criteria() {
    let results = verify::run_all(false);
    println!("1..{}", results.len());
    let mut failed = Vec::new();
    for r in &results {
        println!("{}", r.tap_line());
        if !r.passed {
            failed.push(r.id);
        }
    }
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
