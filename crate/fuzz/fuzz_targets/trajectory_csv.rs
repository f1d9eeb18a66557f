#![no_main]
use libfuzzer_sys::fuzz_target;

use probint::io::{read_trajectory, write_trajectory};

fuzz_target!(|data: &[u8]| {
    let Ok(path) = read_trajectory(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_trajectory(&mut buf, &path).unwrap();
    let back = read_trajectory(buf.as_slice()).expect("written trajectory reads back");
    assert_eq!(back.times.len(), path.times.len());
    for (a, b) in back.states.iter().zip(&path.states) {
        assert!(a
            .iter()
            .zip(b.iter())
            .all(|(x, y)| x == y || (x.is_nan() && y.is_nan())));
    }
});
