//! Acceptance suite: one PASS/FAIL line per criterion.

mod algebra;
mod fifth;
mod simulation;
mod stopping;
mod support;
mod transport;

use std::panic::catch_unwind;
use std::process::ExitCode;
use std::time::Instant;

use support::Check;

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("simulation reproduction", simulation::reproduction),
        ("coupling recovery", simulation::coupling_recovery),
        ("rho = 0 equivalence", algebra::rho_zero_equivalence),
        ("global update algebra", algebra::global_update_algebra),
        ("kernel oracles", algebra::kernel_oracles),
        ("selection replay", algebra::selection_replay),
        ("transport equivalence", transport::transport_equivalence),
        ("privacy capture", transport::privacy_capture),
        ("fifth-order smoke", fifth::fifth_order_smoke),
        ("stopping rule", stopping::stopping_rule),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
