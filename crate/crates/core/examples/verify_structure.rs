//! Runs every oracle suite once and prints its verdict.

use lcn::verification::{run_suite, SUITES};

fn main() -> lcn::Result<()> {
    let mut all = true;
    for name in SUITES {
        let r = run_suite(name, 0, 1)?;
        all &= r.passed();
        println!(
            "{} {:<26} cases {:>7}  skipped {:>3}  max deviation {:.3e}  tolerance {:.0e}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.suite,
            r.cases,
            r.skipped,
            r.max_deviation,
            r.tolerance
        );
    }
    if !all {
        std::process::exit(1);
    }
    Ok(())
}
