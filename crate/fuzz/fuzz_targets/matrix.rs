#![no_main]

use branchdiff::parse::{parse_matrix, parse_vector};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(v) = parse_vector(s) {
        assert!(!v.is_empty() && v.iter().all(|x| x.is_finite()));
    }
    if let Ok(m) = parse_matrix(s) {
        assert!(m.nrows() > 0 && m.ncols() > 0);
        assert!(m.iter().all(|x| x.is_finite()));
    }
});
