#![no_main]

use branchdiff::parse::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = Config::parse(s) {
        for section in c.sections().map(str::to_string).collect::<Vec<_>>() {
            let _ = c.get_f64(&section, "theta");
            let _ = c.get_u64(&section, "seed");
            let _ = c.get_grid(&section, "x");
            let _ = c.get_vector(&section, "pi");
            let _ = c.get_matrix(&section, "gamma");
        }
    }
});
