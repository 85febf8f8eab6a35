//! Acceptance criteria. Prints one line per criterion, then fails if any
//! criterion failed or ran over its time budget.

use jmflow::harness::verify::{determinism_check, run_checks, write_outputs, VerifyOptions};

fn main() {
    let opts = VerifyOptions {
        seed: 0,
        ..Default::default()
    };
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();

    let mut checks = run_checks(&opts);
    for c in &checks {
        println!("{}", c.line());
    }
    write_outputs(first.path(), &checks, opts.seed).unwrap();

    let again = run_checks(&opts);
    write_outputs(second.path(), &again, opts.seed).unwrap();
    let det = determinism_check(first.path(), second.path());
    println!("{}", det.line());
    checks.push(det);

    let failed: Vec<u32> = checks.iter().filter(|c| !c.ok()).map(|c| c.id).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        checks.len() - failed.len(),
        checks.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
