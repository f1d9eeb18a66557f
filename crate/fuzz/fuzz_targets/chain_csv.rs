#![no_main]
use libfuzzer_sys::fuzz_target;

use probint::io::read_chain;

fuzz_target!(|data: &[u8]| {
    if let Ok(chain) = read_chain(data) {
        assert_eq!(chain.samples.len(), chain.accepted.len());
        assert_eq!(chain.samples.len(), chain.log_posterior.len());
    }
});
