//! The analysis result document, its text report and figure-data files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{LrtConvention, RunConfig};
use crate::data::{Ingested, SurvivalDataset};
use crate::error::{Error, Result};
use crate::niecc::{counterfactual_survival, OutcomeDiagnostics, Setting};
use crate::numstats::{mean, quantile_sorted};
use crate::pipeline::PipelineRun;
use crate::profile::{tree_rules, LeafRule, ProfileTree};
use crate::select::ProfileScore;

pub const SCHEMA_VERSION: &str = "medsurv-result/1";
const GRID_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInfo {
    pub py_star: f64,
    pub pm_star: f64,
    /// Where the thresholds came from (file path, config, or default).
    pub source: String,
    pub calibrated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n: usize,
    pub p: usize,
    pub events: usize,
    pub treated: usize,
    pub event_rate: f64,
    pub covariate_names: Vec<String>,
    pub dropped_missing: usize,
    pub rejected_mediator_timing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsOut {
    pub niecc: Vec<f64>,
    pub dte: Vec<f64>,
    pub tte: Vec<f64>,
    pub crossfit_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingOut {
    pub coords: Vec<[f64; 2]>,
    pub kl_divergence: f64,
    pub kl_history: Vec<(usize, f64)>,
    pub max_perplexity_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Heterogeneous,
    Homogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedProfile {
    pub k: usize,
    pub restart: usize,
    pub cluster_labels: Vec<usize>,
    pub leaves: Vec<usize>,
    pub tree: ProfileTree,
    pub rules: Vec<LeafRule>,
    pub score: ProfileScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub s11: Vec<f64>,
    pub s10: Vec<f64>,
    pub s00: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub id: usize,
    pub rule: String,
    pub size: usize,
    pub members: Vec<usize>,
    pub mean_niecc: f64,
    pub mean_dte: f64,
    pub mean_tte: f64,
    /// Display window for the NIECC distribution.
    pub niecc_p10: f64,
    pub niecc_p90: f64,
    pub curves: Curves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub version: String,
    pub tie_policy: String,
    pub baseline_estimator: String,
    pub df_policy: String,
    pub mediator_model_intercept: bool,
    pub permutation_scheme: String,
    pub dissimilarity: String,
    pub embedding: String,
    pub mediator_timing: String,
    pub outcome_diagnostics: OutcomeDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub schema_version: String,
    pub config: RunConfig,
    pub thresholds: ThresholdInfo,
    pub data: DataSummary,
    pub effects: EffectsOut,
    pub embedding: EmbeddingOut,
    pub candidates: Vec<ProfileScore>,
    pub verdict: Verdict,
    pub selected: Option<SelectedProfile>,
    pub time_grid: Vec<f64>,
    pub subgroups: Vec<SubgroupSummary>,
    pub metadata: Metadata,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// 200 evenly spaced times from 0 to the 95th percentile of follow-up.
pub fn time_grid(time: &[f64]) -> Vec<f64> {
    let end = quantile_sorted(&sorted(time), 0.95);
    (0..GRID_POINTS)
        .map(|k| end * k as f64 / (GRID_POINTS - 1) as f64)
        .collect()
}

/// Assemble the result document from a finished run.
pub fn build_result(
    ds: &SurvivalDataset,
    ingest: Option<&Ingested>,
    config: &RunConfig,
    run: &PipelineRun,
    thresholds: ThresholdInfo,
    seed: u64,
) -> Result<AnalysisResult> {
    let est = &run.effects.estimates;
    let grid = time_grid(&ds.time);
    let selected = run.selected_candidate().map(|c| SelectedProfile {
        k: c.k,
        restart: c.restart,
        cluster_labels: c.clustering.labels.clone(),
        leaves: c.leaves.clone(),
        tree: c.tree.clone(),
        rules: tree_rules(&c.tree, &ds.covariate_names),
        score: c.score.clone(),
    });
    let groups: Vec<(String, Vec<usize>)> = match &selected {
        Some(s) => s
            .rules
            .iter()
            .map(|r| {
                let members = (0..ds.n()).filter(|&i| s.leaves[i] == r.leaf_id).collect();
                (r.text.clone(), members)
            })
            .collect(),
        None => vec![("all subjects".to_string(), (0..ds.n()).collect())],
    };
    let mut subgroups = Vec::with_capacity(groups.len());
    for (id, (rule, members)) in groups.into_iter().enumerate() {
        let pick = |v: &[f64]| -> Vec<f64> { members.iter().map(|&i| v[i]).collect() };
        let niecc = pick(&est.niecc);
        let rows = ds.covariates.select(ndarray::Axis(0), &members);
        let curve =
            |s: Setting| counterfactual_survival(&run.effects.outcome, &run.effects.mediator, rows.view(), s, &grid);
        let sn = sorted(&niecc);
        subgroups.push(SubgroupSummary {
            id,
            rule,
            size: members.len(),
            mean_niecc: mean(&niecc),
            mean_dte: mean(&pick(&est.dte)),
            mean_tte: mean(&pick(&est.tte)),
            niecc_p10: quantile_sorted(&sn, 0.10),
            niecc_p90: quantile_sorted(&sn, 0.90),
            curves: Curves {
                s11: curve(Setting::TreatedWithTreatedMediator)?,
                s10: curve(Setting::TreatedWithControlMediator)?,
                s00: curve(Setting::ControlWithControlMediator)?,
            },
            members,
        });
    }
    Ok(AnalysisResult {
        schema_version: SCHEMA_VERSION.to_string(),
        config: config.clone(),
        thresholds,
        data: DataSummary {
            n: ds.n(),
            p: ds.p(),
            events: ds.n_events(),
            treated: ds.n_treated(),
            event_rate: ds.event_rate(),
            covariate_names: ds.covariate_names.clone(),
            dropped_missing: ingest.map_or(0, |i| i.dropped_missing),
            rejected_mediator_timing: ingest.map_or(0, |i| i.rejected_mediator_timing),
        },
        effects: EffectsOut {
            niecc: est.niecc.clone(),
            dte: est.dte.clone(),
            tte: est.tte.clone(),
            crossfit_folds: est.crossfit_folds,
        },
        embedding: EmbeddingOut {
            coords: run.embedding.coords.rows().into_iter().map(|r| [r[0], r[1]]).collect(),
            kl_divergence: run.embedding.kl_divergence,
            kl_history: run.embedding.kl_history.clone(),
            max_perplexity_error: run.embedding.max_perplexity_error,
        },
        candidates: run.candidates.iter().map(|c| c.score.clone()).collect(),
        verdict: if selected.is_some() {
            Verdict::Heterogeneous
        } else {
            Verdict::Homogeneous
        },
        selected,
        time_grid: grid,
        subgroups,
        metadata: Metadata {
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            tie_policy: "breslow".into(),
            baseline_estimator: "breslow".into(),
            df_policy: match config.lrt {
                LrtConvention::Parameters => "parameters: df = 2(L-1); printed df = L-1 also reported".into(),
                LrtConvention::Printed => "printed: df = L-1; parameter-count df = 2(L-1) also reported".into(),
            },
            mediator_model_intercept: config.lrt == LrtConvention::Parameters,
            permutation_scheme: "joint permutation of covariate rows; treatment, mediator and outcome fixed".into(),
            dissimilarity: format!(
                "(1-b)|niecc_i-niecc_j|/IQR + b||x_i-x_j||/sqrt(p), b = {}",
                config.blend
            ),
            embedding: "exact t-SNE on the NIECC dissimilarity (custom-distance input)".into(),
            mediator_timing:
                "rows with follow-up strictly below mediator time are rejected when a timing column is given".into(),
            outcome_diagnostics: run.effects.outcome.diagnostics.clone(),
        },
    })
}

impl AnalysisResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }

    /// Parse a result document, checking the schema version first.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
            Error::Schema(format!(
                "malformed or truncated result file ({e}); expected schema {SCHEMA_VERSION}"
            ))
        })?;
        match value.get("schema_version").and_then(|v| v.as_str()) {
            Some(SCHEMA_VERSION) => {}
            Some(other) => {
                return Err(Error::Schema(format!(
                    "result file has schema {other}; this build reads {SCHEMA_VERSION}"
                )))
            }
            None => {
                return Err(Error::Schema(format!(
                    "result file lacks schema_version; expected {SCHEMA_VERSION}"
                )))
            }
        }
        let result: Self = serde_json::from_value(value)
            .map_err(|e| Error::Schema(format!("result file does not match schema {SCHEMA_VERSION}: {e}")))?;
        result.check_consistency()?;
        Ok(result)
    }

    /// Cross-field checks that serde cannot express.
    fn check_consistency(&self) -> Result<()> {
        let n = self.data.n;
        let bad = |m: String| Err(Error::Schema(m));
        let e = &self.effects;
        if e.niecc.len() != n || e.dte.len() != n || e.tte.len() != n || self.embedding.coords.len() != n {
            return bad(format!("per-subject arrays do not all have length n = {n}"));
        }
        if let Some(sel) = &self.selected {
            if sel.leaves.len() != n || sel.cluster_labels.len() != n {
                return bad("selected profile labels do not have length n".into());
            }
        }
        for g in &self.subgroups {
            if g.members.iter().any(|&i| i >= n) {
                return bad(format!("subgroup {} lists a member outside 0..{n}", g.id));
            }
            let k = self.time_grid.len();
            if g.curves.s11.len() != k || g.curves.s10.len() != k || g.curves.s00.len() != k {
                return bad(format!("subgroup {} curves do not match the time grid", g.id));
            }
        }
        Ok(())
    }

    /// Subgroup sizes and mean effects recomputed from member lists.
    pub fn derived_subgroup_means(&self) -> Vec<(usize, usize, f64, f64, f64)> {
        self.subgroups
            .iter()
            .map(|g| {
                let pick = |v: &[f64]| -> Vec<f64> { g.members.iter().map(|&i| v[i]).collect() };
                (
                    g.id,
                    g.members.len(),
                    mean(&pick(&self.effects.niecc)),
                    mean(&pick(&self.effects.dte)),
                    mean(&pick(&self.effects.tte)),
                )
            })
            .collect()
    }

    /// Deterministic plain-text report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "medsurv analysis report ({})", self.schema_version);
        let _ = writeln!(
            s,
            "data: n = {}, covariates = {}, events = {}, treated = {}",
            self.data.n, self.data.p, self.data.events, self.data.treated
        );
        let _ = writeln!(
            s,
            "thresholds: pY* = {:e}, pM* = {:e} ({}{})",
            self.thresholds.py_star,
            self.thresholds.pm_star,
            self.thresholds.source,
            if self.thresholds.calibrated {
                ""
            } else {
                ", UNCALIBRATED"
            }
        );
        if self.metadata.outcome_diagnostics.rare_event_warning {
            let _ = writeln!(
                s,
                "warning: event rate {:.1}% exceeds 30%; the rare-event approximation may not hold",
                100.0 * self.metadata.outcome_diagnostics.event_rate
            );
        }
        match (&self.verdict, &self.selected) {
            (Verdict::Heterogeneous, Some(sel)) => {
                let _ = writeln!(s, "verdict: heterogeneous mediation detected");
                let _ = writeln!(
                    s,
                    "selected profile: k = {}, restart = {}, leaves = {}, pY = {:e}, pM = {:e}",
                    sel.k, sel.restart, sel.tree.leaf_count, sel.score.py, sel.score.pm
                );
                let _ = writeln!(s, "rules:");
                for r in &sel.rules {
                    let _ = writeln!(
                        s,
                        "  leaf {}: {} (n = {}, cluster {})",
                        r.leaf_id, r.text, r.size, r.majority_label
                    );
                }
            }
            _ => {
                let _ = writeln!(s, "verdict: no heterogeneous mediation detected");
            }
        }
        let _ = writeln!(s, "subgroups:");
        let _ = writeln!(s, "  id  size  mean_niecc  mean_dte  mean_tte  rule");
        for (g, (_, size, mn, md, mt)) in self.subgroups.iter().zip(self.derived_subgroup_means()) {
            let _ = writeln!(
                s,
                "  {:>2}  {:>4}  {:>10.4}  {:>8.4}  {:>8.4}  {}",
                g.id, size, mn, md, mt, g.rule
            );
        }
        let _ = writeln!(s, "candidates:");
        let _ = writeln!(s, "   k  restart  leaves  pY          pM          metric      status");
        for c in &self.candidates {
            let status = c
                .reason
                .clone()
                .unwrap_or_else(|| if c.passes() { "pass".into() } else { "gated".into() });
            let _ = writeln!(
                s,
                "  {:>2}  {:>7}  {:>6}  {:<10.3e}  {:<10.3e}  {:<10.3e}  {}",
                c.k, c.restart, c.leaf_count, c.py, c.pm, c.metric, status
            );
        }
        s
    }

    /// Write the figure-data files into `dir`.
    pub fn write_figures(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let leaf_of = |i: usize| self.selected.as_ref().map_or(0, |s| s.leaves[i]);
        let cluster_of = |i: usize| self.selected.as_ref().map_or(0, |s| s.cluster_labels[i]);

        let mut niecc = String::from("row,niecc,dte,tte\n");
        for i in 0..self.effects.niecc.len() {
            let _ = writeln!(
                niecc,
                "{},{:?},{:?},{:?}",
                i, self.effects.niecc[i], self.effects.dte[i], self.effects.tte[i]
            );
        }
        std::fs::write(dir.join("niecc.csv"), niecc)?;

        let mut emb = String::from("row,x,y,cluster,leaf\n");
        for (i, c) in self.embedding.coords.iter().enumerate() {
            let _ = writeln!(emb, "{},{:?},{:?},{},{}", i, c[0], c[1], cluster_of(i), leaf_of(i));
        }
        std::fs::write(dir.join("embedding.csv"), emb)?;

        let mut dist = String::from("subgroup,row,niecc\n");
        for g in &self.subgroups {
            for &i in &g.members {
                let v = self.effects.niecc[i];
                if v >= g.niecc_p10 && v <= g.niecc_p90 {
                    let _ = writeln!(dist, "{},{},{:?}", g.id, i, v);
                }
            }
        }
        std::fs::write(dir.join("niecc_distribution.csv"), dist)?;

        let mut curves = String::from("subgroup,setting,time,survival\n");
        for g in &self.subgroups {
            for (label, v) in [
                (Setting::TreatedWithTreatedMediator.label(), &g.curves.s11),
                (Setting::TreatedWithControlMediator.label(), &g.curves.s10),
                (Setting::ControlWithControlMediator.label(), &g.curves.s00),
            ] {
                for (t, s) in self.time_grid.iter().zip(v) {
                    let _ = writeln!(curves, "{},{},{:?},{:?}", g.id, label, t, s);
                }
            }
        }
        std::fs::write(dir.join("curves.csv"), curves)?;

        let mut rules = String::new();
        for g in &self.subgroups {
            let _ = writeln!(
                rules,
                "subgroup {} (n = {}, mean NIECC {:.4}): {}",
                g.id, g.size, g.mean_niecc, g.rule
            );
        }
        std::fs::write(dir.join("rules.txt"), rules)?;
        Ok(())
    }
}
