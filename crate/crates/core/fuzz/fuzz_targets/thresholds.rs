#![no_main]

use libfuzzer_sys::fuzz_target;
use medsurv::select::ThresholdsFile;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(t) = ThresholdsFile::parse(text) {
            assert!((0.0..=1.0).contains(&t.py_star) && (0.0..=1.0).contains(&t.pm_star));
            let _ = ThresholdsFile::parse(&t.to_text());
        }
    }
});
