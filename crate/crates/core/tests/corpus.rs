//! Every checked-in fuzz seed goes through its parser without panicking.

use std::path::PathBuf;

use medsurv::config::RunConfig;
use medsurv::data::{parse_dataset, Schema};
use medsurv::result::AnalysisResult;
use medsurv::select::ThresholdsFile;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn dataset_seeds() {
    for (name, text) in seeds("dataset_csv") {
        let parsed = parse_dataset(&text, &Schema::default());
        match name.as_str() {
            "sim_20rows.csv" => assert_eq!(parsed.unwrap().dataset.n(), 20),
            "missing_value.csv" => assert_eq!(parsed.unwrap().dropped_missing, 1),
            _ => assert!(parsed.is_err(), "{name}"),
        }
    }
}

#[test]
fn config_seeds_round_trip() {
    for (name, text) in seeds("config") {
        let cfg = RunConfig::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}

#[test]
fn threshold_seeds_round_trip() {
    for (name, text) in seeds("thresholds") {
        let t = ThresholdsFile::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(ThresholdsFile::parse(&t.to_text()).unwrap(), t);
    }
}

#[test]
fn result_seeds_parse_and_report() {
    for (name, text) in seeds("result_json") {
        let r = AnalysisResult::from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(r.report().contains("verdict:"));
        assert!(AnalysisResult::from_json(&text[..text.len() - 2]).is_err());
    }
}
