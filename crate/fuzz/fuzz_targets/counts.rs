#![no_main]

use branchdiff::parse::parse_counts;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = parse_counts(s) {
        let joined = c.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        assert_eq!(parse_counts(&joined).expect("canonical form parses"), c);
    }
});
