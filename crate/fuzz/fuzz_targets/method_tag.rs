#![no_main]
use libfuzzer_sys::fuzz_target;

use probint::{MethodTag, SamplerMode};

fuzz_target!(|data: &str| {
    if let Ok(tag) = data.parse::<MethodTag>() {
        let shown = tag.to_string();
        assert_eq!(shown.parse::<MethodTag>().unwrap(), tag);
        assert!(tag.coefficients().is_ok());
    }
    let _ = data.parse::<SamplerMode>();
});
