#![no_main]

use libfuzzer_sys::fuzz_target;
use medsurv::data::{parse_dataset, Schema};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ing) = parse_dataset(text, &Schema::default()) {
            let ds = ing.dataset;
            assert_eq!(ds.time.len(), ds.covariates.nrows());
            assert!(ds.time.iter().all(|t| t.is_finite()));
        }
    }
});
