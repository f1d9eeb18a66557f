#![no_main]
use libfuzzer_sys::fuzz_target;

use probint::config::{calibration_from_toml, calibration_to_toml};

fuzz_target!(|data: &str| {
    if let Ok(cal) = calibration_from_toml(data) {
        let text = calibration_to_toml(&cal).unwrap();
        let back = calibration_from_toml(&text).unwrap();
        // NaN objectives are legal but never compare equal
        if cal
            .objectives
            .iter()
            .chain(&cal.spreads)
            .chain(&cal.grid)
            .all(|v| !v.is_nan())
            && !cal.target_error.is_nan()
        {
            assert_eq!(cal, back);
        }
    }
});
