//! Runs every acceptance criterion at full scale and prints one PASS/FAIL line each.

use std::process::ExitCode;
use std::time::Instant;

use dyadic_core::verify::{run_all, VerifySettings};

fn main() -> ExitCode {
    let settings = VerifySettings::default();
    let start = Instant::now();
    let mut failed = Vec::new();
    run_all(&settings, |o| {
        println!("{}", o.line());
        eprintln!("    [{:.0} s elapsed]", start.elapsed().as_secs_f64());
        if !o.passed {
            failed.push(o.id);
        }
    });
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
