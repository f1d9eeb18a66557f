#![no_main]
use libfuzzer_sys::fuzz_target;

use probint::config::ExperimentConfig;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = ExperimentConfig::from_toml(data) {
        let text = cfg.to_toml().expect("valid config serialises");
        if text.contains("nan") {
            return;
        }
        let back = ExperimentConfig::from_toml(&text).expect("serialised config parses");
        assert_eq!(cfg, back);
    }
});
