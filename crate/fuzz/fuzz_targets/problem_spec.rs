#![no_main]
use libfuzzer_sys::fuzz_target;

use probint::config::ProblemConfig;

// Problem tables go through system construction and grid validation; the
// step size comes from the first float in the table.
fuzz_target!(|data: &str| {
    let Ok(problem) = toml::from_str::<ProblemConfig>(data) else {
        return;
    };
    if problem.params.len() > 64 || problem.x0.len() > 64 {
        return;
    }
    let h = problem.params.first().map_or(0.1, |p| p.abs());
    if let Ok(ivp) = problem.ivp(h) {
        assert!(ivp.n_steps >= 1);
        assert_eq!(ivp.x0.len(), ivp.system.dim());
    }
});
