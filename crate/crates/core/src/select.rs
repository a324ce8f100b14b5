//! Subgroup likelihood-ratio tests, the selection metric, and threshold
//! calibration from null replicates.

use std::cmp::Ordering;
use std::fmt;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::config::LrtConvention;
use crate::cox::{cox_fit_linear_with, RiskSets};
use crate::error::ConfigError;
use crate::numstats::{chisq_sf, ols_fit};

/// Statistic and p-values of one nested-model comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub statistic: f64,
    /// Parameter-count difference, 2(L - 1).
    pub df_parameters: u32,
    /// As printed, L - 1.
    pub df_printed: u32,
    pub p_parameters: f64,
    pub p_printed: f64,
    /// The p-value under the configured convention.
    pub p: f64,
    /// The full model fit the data exactly; p is reported as 0.
    pub degenerate: bool,
}

impl LrtResult {
    fn new(statistic: f64, leaves: usize, convention: LrtConvention, degenerate: bool) -> Self {
        let df_parameters = 2 * (leaves as u32 - 1);
        let df_printed = leaves as u32 - 1;
        let (p_parameters, p_printed) = if degenerate {
            (0.0, 0.0)
        } else {
            let x = statistic.max(0.0);
            (
                chisq_sf(x, df_parameters).expect("df >= 1"),
                chisq_sf(x, df_printed).expect("df >= 1"),
            )
        };
        let p = match convention {
            LrtConvention::Parameters => p_parameters,
            LrtConvention::Printed => p_printed,
        };
        Self {
            statistic,
            df_parameters,
            df_printed,
            p_parameters,
            p_printed,
            p,
            degenerate,
        }
    }
}

/// Why a candidate profile cannot be scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Invalid {
    SingleLeaf,
    SparseCell { leaf: usize, treated: bool, count: usize },
    FitFailed(String),
    NonConvergence,
    Separation,
    PerfectFit,
    RankDeficient,
}

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Invalid::SingleLeaf => write!(f, "single leaf"),
            Invalid::SparseCell { leaf, treated, count } => write!(
                f,
                "leaf {leaf} {} arm has {count} qualifying rows",
                if *treated { "treated" } else { "control" }
            ),
            Invalid::FitFailed(m) => write!(f, "fit failed: {m}"),
            Invalid::NonConvergence => write!(f, "Cox fit did not converge"),
            Invalid::Separation => write!(f, "monotone likelihood (separation)"),
            Invalid::PerfectFit => write!(f, "mediator model fits exactly"),
            Invalid::RankDeficient => write!(f, "rank-deficient mediator design"),
        }
    }
}

fn leaf_count(leaves: &[usize]) -> usize {
    leaves.iter().max().map_or(0, |m| m + 1)
}

/// Columns `[W, D_1..D_{L-1}, D_1·W..D_{L-1}·W]`, optionally after an
/// intercept. Leaf 0 is the reference.
fn subgroup_design(w: &[bool], leaves: &[usize], l: usize, intercept: bool, full: bool) -> Array2<f64> {
    let n = w.len();
    let off = usize::from(intercept);
    let q = off + 1 + if full { 2 * (l - 1) } else { 0 };
    let mut d = Array2::<f64>::zeros((n, q));
    for i in 0..n {
        if intercept {
            d[[i, 0]] = 1.0;
        }
        let wi = if w[i] { 1.0 } else { 0.0 };
        d[[i, off]] = wi;
        if full && leaves[i] > 0 {
            d[[i, off + leaves[i]]] = 1.0;
            d[[i, off + l - 1 + leaves[i]]] = wi;
        }
    }
    d
}

fn cell_counts(w: &[bool], leaves: &[usize], l: usize, include: impl Fn(usize) -> bool) -> Vec<[usize; 2]> {
    let mut c = vec![[0usize; 2]; l];
    for i in 0..w.len() {
        if include(i) {
            c[leaves[i]][usize::from(w[i])] += 1;
        }
    }
    c
}

fn check_cells(counts: &[[usize; 2]], min: usize) -> Result<(), Invalid> {
    for (leaf, c) in counts.iter().enumerate() {
        for (arm, &count) in c.iter().enumerate() {
            if count < min {
                return Err(Invalid::SparseCell {
                    leaf,
                    treated: arm == 1,
                    count,
                });
            }
        }
    }
    Ok(())
}

/// Outcome test: Cox `[W]` against `[W, leaf, leaf×W]`.
pub fn lrt_outcome(
    rs: &RiskSets,
    event: &[bool],
    w: &[bool],
    leaves: &[usize],
    convention: LrtConvention,
) -> Result<LrtResult, Invalid> {
    let l = leaf_count(leaves);
    if l < 2 {
        return Err(Invalid::SingleLeaf);
    }
    check_cells(&cell_counts(w, leaves, l, |i| event[i]), 2)?;
    let fit = |full: bool| {
        let design = subgroup_design(w, leaves, l, false, full);
        let f = cox_fit_linear_with(rs, design.view()).map_err(|e| Invalid::FitFailed(e.to_string()))?;
        if f.diverged {
            Err(Invalid::Separation)
        } else if !f.converged {
            Err(Invalid::NonConvergence)
        } else {
            Ok(f.partial_loglik)
        }
    };
    let l1 = fit(false)?;
    let l2 = fit(true)?;
    Ok(LrtResult::new(-2.0 * (l1 - l2), l, convention, false))
}

/// Mediator test: OLS `[1, W]` against `[1, W, leaf, leaf×W]` (intercepts
/// dropped under the printed convention); statistic `n·log(rss_reduced / rss_full)`.
pub fn lrt_mediator(m: &[f64], w: &[bool], leaves: &[usize], convention: LrtConvention) -> Result<LrtResult, Invalid> {
    let l = leaf_count(leaves);
    if l < 2 {
        return Err(Invalid::SingleLeaf);
    }
    check_cells(&cell_counts(w, leaves, l, |_| true), 1)?;
    let intercept = convention == LrtConvention::Parameters;
    let y = Array1::from(m.to_vec());
    let fit = |full: bool| {
        let design = subgroup_design(w, leaves, l, intercept, full);
        ols_fit(design.view(), y.view()).map_err(|e| match e {
            crate::error::NumError::RankDeficient(_) => Invalid::RankDeficient,
            other => Invalid::FitFailed(other.to_string()),
        })
    };
    let reduced = fit(false)?;
    let full = fit(true)?;
    if full.perfect_fit || reduced.perfect_fit {
        return Err(Invalid::PerfectFit);
    }
    let stat = m.len() as f64 * (reduced.rss / full.rss).ln();
    Ok(LrtResult::new(stat, l, convention, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub py_star: f64,
    pub pm_star: f64,
}

/// One candidate profile's test results and selection metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileScore {
    pub k: usize,
    pub restart: usize,
    pub leaf_count: usize,
    pub outcome: Option<LrtResult>,
    pub mediator: Option<LrtResult>,
    /// 1 when invalid.
    pub py: f64,
    /// 1 when invalid.
    pub pm: f64,
    pub metric: f64,
    pub valid: bool,
    pub reason: Option<String>,
}

impl ProfileScore {
    pub fn passes(&self) -> bool {
        self.metric > 0.0
    }
}

/// `metric = 1(pY < pY*)·1(pM < pM*)·pM` for valid candidates, else 0.
///
/// A passing candidate whose pM underflowed to 0 keeps the smallest positive
/// metric so that passing and `metric > 0` stay equivalent.
pub fn score_profile(
    k: usize,
    restart: usize,
    leaf_count: usize,
    outcome: Result<LrtResult, Invalid>,
    mediator: Result<LrtResult, Invalid>,
    thresholds: Thresholds,
) -> ProfileScore {
    let invalid = |reason: &Invalid, outcome: Option<LrtResult>, mediator: Option<LrtResult>| ProfileScore {
        k,
        restart,
        leaf_count,
        outcome,
        mediator,
        py: 1.0,
        pm: 1.0,
        metric: 0.0,
        valid: false,
        reason: Some(reason.to_string()),
    };
    let (o, m) = match (outcome, mediator) {
        (Ok(o), Ok(m)) => (o, m),
        (Err(e), m) => return invalid(&e, None, m.ok()),
        (Ok(o), Err(e)) => return invalid(&e, Some(o), None),
    };
    let pass = o.p < thresholds.py_star && m.p < thresholds.pm_star;
    ProfileScore {
        k,
        restart,
        leaf_count,
        outcome: Some(o),
        mediator: Some(m),
        py: o.p,
        pm: m.p,
        metric: if pass { m.p.max(f64::MIN_POSITIVE) } else { 0.0 },
        valid: true,
        reason: None,
    }
}

/// Selection order: smaller pM, then smaller pY, then smaller k, then
/// smaller restart.
pub fn selection_order(a: &ProfileScore, b: &ProfileScore) -> Ordering {
    a.pm.total_cmp(&b.pm)
        .then(a.py.total_cmp(&b.py))
        .then(a.k.cmp(&b.k))
        .then(a.restart.cmp(&b.restart))
}

/// Index of the selected candidate, or `None` when none passes.
pub fn select_profile(scores: &[ProfileScore]) -> Option<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.passes())
        .min_by(|a, b| selection_order(a.1, b.1))
        .map(|(i, _)| i)
}

/// Per-replicate candidate p-values from one null pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullReplicate {
    /// `(pY, pM)` for each valid candidate.
    pub candidates: Vec<(f64, f64)>,
}

impl NullReplicate {
    pub fn min_py(&self) -> f64 {
        self.candidates.iter().map(|c| c.0).fold(1.0, f64::min)
    }

    pub fn min_pm(&self) -> f64 {
        self.candidates.iter().map(|c| c.1).fold(1.0, f64::min)
    }

    pub fn detects(&self, t: Thresholds) -> bool {
        self.candidates.iter().any(|&(py, pm)| py < t.py_star && pm < t.pm_star)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub thresholds: Thresholds,
    /// Fraction of replicates that would be declared heterogeneous.
    pub joint_rate: f64,
    pub shrink_steps: usize,
}

const SHRINK: f64 = 0.8;

/// Thresholds from null replicates: each is the order statistic of its
/// min-p distribution at index `floor(alpha·R)`, so that at most
/// `floor(alpha·R)` replicates fall strictly below it; both are then shrunk
/// together until the joint detection rate is at most `alpha`.
pub fn thresholds_from_null(reps: &[NullReplicate], alpha: f64) -> Calibration {
    let r = reps.len();
    let quantile = |mut v: Vec<f64>| -> f64 {
        if alpha <= 0.0 || v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        let idx = ((alpha * r as f64).floor() as usize).min(r - 1);
        if (alpha * r as f64).floor() as usize >= r {
            return 1.0;
        }
        v[idx]
    };
    let mut t = Thresholds {
        py_star: quantile(reps.iter().map(NullReplicate::min_py).collect()),
        pm_star: quantile(reps.iter().map(NullReplicate::min_pm).collect()),
    };
    let rate = |t: Thresholds| reps.iter().filter(|rep| rep.detects(t)).count() as f64 / r.max(1) as f64;
    let mut joint = rate(t);
    let mut steps = 0;
    while joint > alpha && steps < 1000 {
        t.py_star *= SHRINK;
        t.pm_star *= SHRINK;
        joint = rate(t);
        steps += 1;
    }
    Calibration {
        thresholds: t,
        joint_rate: joint,
        shrink_steps: steps,
    }
}

/// Contents of a thresholds file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsFile {
    pub py_star: f64,
    pub pm_star: f64,
    pub alpha: f64,
    pub n_reps: usize,
    pub method: String,
    pub seed: u64,
    pub joint_rate: Option<f64>,
}

impl ThresholdsFile {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            py_star: self.py_star,
            pm_star: self.pm_star,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "pY_star = {:?}\npM_star = {:?}\nalpha = {:?}\nn_reps = {}\nmethod = {}\nseed = {}\n",
            self.py_star, self.pm_star, self.alpha, self.n_reps, self.method, self.seed
        );
        if let Some(j) = self.joint_rate {
            s.push_str(&format!("joint_rate = {j:?}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut py = None;
        let mut pm = None;
        let mut alpha = None;
        let mut n_reps = None;
        let mut method = None;
        let mut seed = None;
        let mut joint = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: lineno + 1,
                    message: "expected `key = value`".into(),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            let bad = |m: &str| ConfigError::Value {
                key: k.to_string(),
                message: m.to_string(),
            };
            let prob = |v: &str| -> Result<f64, ConfigError> {
                let p: f64 = v.parse().map_err(|_| bad("not a number"))?;
                if (0.0..=1.0).contains(&p) {
                    Ok(p)
                } else {
                    Err(bad("must lie in [0, 1]"))
                }
            };
            match k {
                "pY_star" => py = Some(prob(v)?),
                "pM_star" => pm = Some(prob(v)?),
                "alpha" => alpha = Some(prob(v)?),
                "joint_rate" => joint = Some(prob(v)?),
                "n_reps" => n_reps = Some(v.parse().map_err(|_| bad("not a count"))?),
                "seed" => seed = Some(v.parse().map_err(|_| bad("not an integer"))?),
                "method" => method = Some(v.to_string()),
                _ => return Err(ConfigError::UnknownKey(k.to_string())),
            }
        }
        let need = |name: &str| ConfigError::Invalid(format!("thresholds file lacks `{name}`"));
        Ok(Self {
            py_star: py.ok_or_else(|| need("pY_star"))?,
            pm_star: pm.ok_or_else(|| need("pM_star"))?,
            alpha: alpha.ok_or_else(|| need("alpha"))?,
            n_reps: n_reps.ok_or_else(|| need("n_reps"))?,
            method: method.ok_or_else(|| need("method"))?,
            seed: seed.ok_or_else(|| need("seed"))?,
            joint_rate: joint,
        })
    }
}
