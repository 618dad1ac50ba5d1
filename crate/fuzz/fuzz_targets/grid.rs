#![no_main]

use branchdiff::parse::parse_grid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(g) = parse_grid(s) {
        assert!(g.len() >= 1);
        // Display must parse back to the same grid.
        let again = parse_grid(&g.to_string()).expect("display round-trips");
        assert_eq!(again.len(), g.len());
        if g.len() <= 4096 {
            let pts = g.points();
            assert!(pts.windows(2).all(|w| w[0] < w[1]));
        }
    }
});
