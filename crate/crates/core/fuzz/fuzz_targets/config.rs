#![no_main]

use libfuzzer_sys::fuzz_target;
use medsurv::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::parse(text) {
            // Whatever parses must survive a render/parse round trip.
            let again = RunConfig::parse(&cfg.to_text()).expect("rendered config parses");
            assert_eq!(again.to_text(), cfg.to_text());
        }
    }
});
