//! Full invariant battery at the default configuration, one line per check.

use std::process::ExitCode;
use std::time::Instant;

use rtmodes::config::RunConfig;
use rtmodes::verify::Battery;

fn main() -> ExitCode {
    let battery = Battery::new(RunConfig::defaults().expect("default configuration is valid"));
    let mut failed = Vec::new();
    for id in 1..=15 {
        let start = Instant::now();
        let check = battery.run(id);
        println!("{}  ({:.1}s)", check.line(), start.elapsed().as_secs_f64());
        if !check.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: 15/15 passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        ExitCode::FAILURE
    }
}
