//! Run configuration, read from flat `key = value` text.
//!
//! Keys are grouped by dotted prefix, for example:
//!
//! ```text
//! mode = complex
//! k_min = 2
//! k_max = 5
//! tsne.perplexity = 30
//! boosting.rounds = 200
//! thresholds = calibrate
//! ```

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::learners::{BoostParams, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Cox model linear in (X, W, M); OLS mediator models.
    Linear,
    /// Boosted Cox outcome model; boosted mediator models.
    Complex,
}

/// Degrees of freedom and intercept convention for the subgroup LRTs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrtConvention {
    /// df equals the number of added parameters, 2(L - 1); mediator models
    /// carry an intercept.
    Parameters,
    /// df = L - 1 and no intercept in the mediator models, as printed in the
    /// original model statements.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Overrides the run seed for the embedding when set.
    pub seed: Option<u64>,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileTreeConfig {
    pub max_depth: usize,
    pub min_leaf_fraction: f64,
    pub min_leaf_floor: usize,
}

impl Default for ProfileTreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_leaf_fraction: 0.05,
            min_leaf_floor: 20,
        }
    }
}

impl ProfileTreeConfig {
    /// `max(floor, ceil(fraction · n))`.
    pub fn min_leaf(&self, n: usize) -> usize {
        let frac = (self.min_leaf_fraction * n as f64).ceil() as usize;
        self.min_leaf_floor.max(frac).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ThresholdSetting {
    Fixed { py_star: f64, pm_star: f64 },
    Calibrate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub k_min: usize,
    pub k_max: usize,
    pub kmeans_restarts: usize,
    pub tsne: TsneConfig,
    pub boosting: BoostParams,
    pub tree: ProfileTreeConfig,
    pub thresholds: ThresholdSetting,
    pub crossfit_folds: usize,
    pub rng_seed: u64,
    /// Weight of covariate distance in the dissimilarity, in [0, 1].
    pub blend: f64,
    pub lrt: LrtConvention,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Complex,
            k_min: 2,
            k_max: 5,
            kmeans_restarts: 10,
            tsne: TsneConfig::default(),
            boosting: BoostParams::default(),
            tree: ProfileTreeConfig::default(),
            thresholds: ThresholdSetting::Fixed {
                py_star: 0.05,
                pm_star: 0.05,
            },
            crossfit_folds: 0,
            rng_seed: 20240101,
            blend: 0.0,
            lrt: LrtConvention::Parameters,
        }
    }
}

fn value_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse::<T>()
        .map_err(|_| value_err(key, format!("cannot parse `{v}`")))
}

fn parse_prob(key: &str, v: &str) -> Result<f64, ConfigError> {
    let p: f64 = parse_num(key, v)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(value_err(key, "must lie in [0, 1]"));
    }
    Ok(p)
}

impl RunConfig {
    /// Parse configuration text; unspecified keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut py: Option<f64> = None;
        let mut pm: Option<f64> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
                line: lineno + 1,
                message: "expected `key = value`".into(),
            })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "mode" => {
                    cfg.mode = match v {
                        "linear" => Mode::Linear,
                        "complex" => Mode::Complex,
                        _ => return Err(value_err(key, "expected `linear` or `complex`")),
                    }
                }
                "k_min" => cfg.k_min = parse_num(key, v)?,
                "k_max" => cfg.k_max = parse_num(key, v)?,
                "k_range" => {
                    let (a, b) = v
                        .split_once("..")
                        .ok_or_else(|| value_err(key, "expected `min..max`"))?;
                    cfg.k_min = parse_num(key, a.trim())?;
                    cfg.k_max = parse_num(key, b.trim())?;
                }
                "kmeans.restarts" => cfg.kmeans_restarts = parse_num(key, v)?,
                "tsne.perplexity" => cfg.tsne.perplexity = parse_num(key, v)?,
                "tsne.iterations" => cfg.tsne.iterations = parse_num(key, v)?,
                "tsne.learning_rate" => cfg.tsne.learning_rate = parse_num(key, v)?,
                "tsne.seed" => cfg.tsne.seed = Some(parse_num(key, v)?),
                "boosting.rounds" => cfg.boosting.rounds = parse_num(key, v)?,
                "boosting.depth" => cfg.boosting.tree.max_depth = parse_num(key, v)?,
                "boosting.learning_rate" => cfg.boosting.learning_rate = parse_num(key, v)?,
                "boosting.min_child_weight" => cfg.boosting.tree.min_child_weight = parse_num(key, v)?,
                "boosting.lambda" => cfg.boosting.tree.lambda = parse_num(key, v)?,
                "tree.max_depth" => cfg.tree.max_depth = parse_num(key, v)?,
                "tree.min_leaf_fraction" => cfg.tree.min_leaf_fraction = parse_num(key, v)?,
                "tree.min_leaf_floor" => cfg.tree.min_leaf_floor = parse_num(key, v)?,
                "thresholds" => match v {
                    "calibrate" => cfg.thresholds = ThresholdSetting::Calibrate,
                    _ => {
                        return Err(value_err(
                            key,
                            "expected `calibrate`; use thresholds.py_star/pm_star for fixed values",
                        ))
                    }
                },
                "thresholds.py_star" => py = Some(parse_prob(key, v)?),
                "thresholds.pm_star" => pm = Some(parse_prob(key, v)?),
                "crossfit_folds" => cfg.crossfit_folds = parse_num(key, v)?,
                "rng_seed" => cfg.rng_seed = parse_num(key, v)?,
                "dissimilarity.blend" => cfg.blend = parse_prob(key, v)?,
                "lrt.convention" => {
                    cfg.lrt = match v {
                        "parameters" => LrtConvention::Parameters,
                        "printed" => LrtConvention::Printed,
                        _ => return Err(value_err(key, "expected `parameters` or `printed`")),
                    }
                }
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }
        match (py, pm) {
            (None, None) => {}
            (Some(py_star), Some(pm_star)) => cfg.thresholds = ThresholdSetting::Fixed { py_star, pm_star },
            _ => {
                return Err(ConfigError::Invalid(
                    "thresholds.py_star and thresholds.pm_star must be given together".into(),
                ))
            }
        }
        cfg.validate(None)?;
        Ok(cfg)
    }

    /// Render as configuration text that [`RunConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!(
                "mode = {}",
                match self.mode {
                    Mode::Linear => "linear",
                    Mode::Complex => "complex",
                }
            ),
            format!("k_min = {}", self.k_min),
            format!("k_max = {}", self.k_max),
            format!("kmeans.restarts = {}", self.kmeans_restarts),
            format!("tsne.perplexity = {}", self.tsne.perplexity),
            format!("tsne.iterations = {}", self.tsne.iterations),
            format!("tsne.learning_rate = {}", self.tsne.learning_rate),
        ];
        if let Some(s) = self.tsne.seed {
            lines.push(format!("tsne.seed = {s}"));
        }
        lines.extend([
            format!("boosting.rounds = {}", self.boosting.rounds),
            format!("boosting.depth = {}", self.boosting.tree.max_depth),
            format!("boosting.learning_rate = {}", self.boosting.learning_rate),
            format!("boosting.min_child_weight = {}", self.boosting.tree.min_child_weight),
            format!("boosting.lambda = {}", self.boosting.tree.lambda),
            format!("tree.max_depth = {}", self.tree.max_depth),
            format!("tree.min_leaf_fraction = {}", self.tree.min_leaf_fraction),
            format!("tree.min_leaf_floor = {}", self.tree.min_leaf_floor),
        ]);
        match self.thresholds {
            ThresholdSetting::Calibrate => lines.push("thresholds = calibrate".into()),
            ThresholdSetting::Fixed { py_star, pm_star } => {
                lines.push(format!("thresholds.py_star = {py_star}"));
                lines.push(format!("thresholds.pm_star = {pm_star}"));
            }
        }
        lines.extend([
            format!("crossfit_folds = {}", self.crossfit_folds),
            format!("rng_seed = {}", self.rng_seed),
            format!("dissimilarity.blend = {}", self.blend),
            format!(
                "lrt.convention = {}",
                match self.lrt {
                    LrtConvention::Parameters => "parameters",
                    LrtConvention::Printed => "printed",
                }
            ),
        ]);
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    /// Check invariants; `n` enables the sample-size dependent checks.
    pub fn validate(&self, n: Option<usize>) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.k_min < 2 {
            return bad("k_min must be at least 2");
        }
        if self.k_max < self.k_min {
            return bad("k_max must be >= k_min");
        }
        if self.kmeans_restarts == 0 {
            return bad("kmeans.restarts must be >= 1");
        }
        if !(self.tree.min_leaf_fraction > 0.0 && self.tree.min_leaf_fraction < 0.5) {
            return bad("tree.min_leaf_fraction must lie in (0, 0.5)");
        }
        if !(self.tsne.perplexity > 0.0) || !(self.tsne.learning_rate > 0.0) {
            return bad("t-SNE perplexity and learning rate must be positive");
        }
        if self.crossfit_folds == 1 {
            return bad("crossfit_folds must be 0 (off) or >= 2");
        }
        if !(self.boosting.learning_rate > 0.0) || !(self.boosting.tree.lambda >= 0.0) {
            return bad("boosting learning rate must be positive and lambda nonnegative");
        }
        if let Some(n) = n {
            if 3.0 * self.tsne.perplexity >= n as f64 {
                return bad("perplexity must be below n / 3");
            }
            if self.k_max > n {
                return bad("k_max exceeds the number of subjects");
            }
        }
        Ok(())
    }

    pub fn boost_params(&self) -> BoostParams {
        self.boosting
    }

    pub fn tree_params(&self) -> TreeParams {
        self.boosting.tree
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn parses_sections_and_comments() {
        let text = "# test\nmode = linear\nk_range = 3..4\ntsne.perplexity = 10 # small\nthresholds.py_star = 0.01\nthresholds.pm_star = 0.02\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.mode, Mode::Linear);
        assert_eq!((cfg.k_min, cfg.k_max), (3, 4));
        assert_eq!(cfg.tsne.perplexity, 10.0);
        assert_eq!(
            cfg.thresholds,
            ThresholdSetting::Fixed {
                py_star: 0.01,
                pm_star: 0.02
            }
        );
    }

    #[test]
    fn rejects_invalid() {
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(
            RunConfig::parse("mode"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(RunConfig::parse("k_min = 1").is_err());
        assert!(RunConfig::parse("tree.min_leaf_fraction = 0.5").is_err());
        assert!(RunConfig::parse("thresholds.py_star = 0.1").is_err());
        assert!(RunConfig::parse("thresholds.py_star = 1.5\nthresholds.pm_star = 0.1").is_err());
        assert!(RunConfig::parse("crossfit_folds = 1").is_err());
        let cfg = RunConfig::default();
        assert!(cfg.validate(Some(90)).is_err());
        assert!(cfg.validate(Some(91)).is_ok());
    }

    #[test]
    fn min_leaf_rule() {
        let t = ProfileTreeConfig::default();
        assert_eq!(t.min_leaf(100), 20);
        assert_eq!(t.min_leaf(1000), 50);
        assert_eq!(t.min_leaf(1001), 51);
    }

    proptest! {
        #[test]
        fn parser_never_panics(text in "[a-z_.=0-9 #\\n-]{0,120}") {
            let _ = RunConfig::parse(&text);
        }
    }
}
