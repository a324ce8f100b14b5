#![no_main]

use libfuzzer_sys::fuzz_target;
use medsurv::result::AnalysisResult;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(r) = AnalysisResult::from_json(text) {
            let _ = r.report();
        }
    }
});
