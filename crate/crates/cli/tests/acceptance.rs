//! Runs every acceptance criterion and prints one line per criterion.
//!
//! Checks flagged as known-unattainable are reported as FAIL but do not fail
//! the target. Anything else failing exits nonzero.

use concentra_cli::accept;

fn main() {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut unexpected = 0;
    for id in 1..=11 {
        let c = accept::run_criterion(id, 0, threads);
        println!("{}  ({:.1}s)", c.line(), c.seconds);
        unexpected += c.unexpected_failures().len();
    }
    if unexpected > 0 {
        eprintln!("{unexpected} unexpected failing check(s)");
        std::process::exit(1);
    }
}
