//! The end-to-end subgroup search: effects, embedding, clustering,
//! profiling and scoring, plus threshold calibration built on it.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::cox::RiskSets;
use crate::data::{fit_standardization, SurvivalDataset};
use crate::embed::{kmeans_run, niecc_dissimilarity, tsne_embed, Clustering, Embedding};
use crate::error::{Error, Result};
use crate::niecc::{estimate_effects, EffectFit};
use crate::numstats::RngStream;
use crate::profile::{fit_cart, leaf_assign, ProfileTree};
use crate::select::{
    lrt_mediator, lrt_outcome, score_profile, select_profile, thresholds_from_null, Calibration, Invalid, LrtResult,
    NullReplicate, ProfileScore, Thresholds,
};
use crate::simgen::{gen_scenario_stream, ScenarioSpec};

/// One (k, restart) clustering with its profile tree and score.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub k: usize,
    pub restart: usize,
    pub clustering: Clustering,
    pub tree: ProfileTree,
    pub leaves: Vec<usize>,
    pub score: ProfileScore,
}

/// Everything the search produces before it is summarized for output.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub effects: EffectFit,
    pub embedding: Embedding,
    pub candidates: Vec<Candidate>,
    pub selected: Option<usize>,
    pub thresholds: Thresholds,
}

impl PipelineRun {
    pub fn selected_candidate(&self) -> Option<&Candidate> {
        self.selected.map(|i| &self.candidates[i])
    }

    pub fn null_replicate(&self) -> NullReplicate {
        NullReplicate {
            candidates: self
                .candidates
                .iter()
                .filter(|c| c.score.valid)
                .map(|c| (c.score.py, c.score.pm))
                .collect(),
        }
    }

    /// Smallest pM over valid candidates (1 when none is valid).
    pub fn min_pm(&self) -> f64 {
        self.null_replicate().min_pm()
    }
}

/// Stream used for the embedding and clustering steps of a run.
pub fn analysis_stream(seed: u64) -> RngStream {
    RngStream::new(seed, "analysis")
}

type LrtPair = (
    std::result::Result<LrtResult, Invalid>,
    std::result::Result<LrtResult, Invalid>,
);

/// Run the full search with fixed thresholds.
pub fn run_pipeline(
    ds: &SurvivalDataset,
    config: &RunConfig,
    thresholds: Thresholds,
    rng: &RngStream,
) -> Result<PipelineRun> {
    config.validate(Some(ds.n()))?;
    ds.validate_for_fitting()?;
    let effects = estimate_effects(ds, config, &rng.substream("effects"))?;

    let x_std = if config.blend > 0.0 {
        fit_standardization(&ds.covariates).apply(&ds.covariates)
    } else {
        ds.covariates.clone()
    };
    let d = niecc_dissimilarity(&effects.estimates.niecc, x_std.view(), config.blend);
    let tsne_rng = match config.tsne.seed {
        Some(s) => RngStream::new(s, "tsne"),
        None => rng.substream("tsne"),
    };
    let embedding = tsne_embed(
        &d,
        config.tsne.perplexity,
        config.tsne.iterations,
        config.tsne.learning_rate,
        &tsne_rng,
    )
    .map_err(|e| Error::numerical("embed", e))?;

    let min_leaf = config.tree.min_leaf(ds.n());
    let pairs: Vec<(usize, usize)> = (config.k_min..=config.k_max)
        .flat_map(|k| (0..config.kmeans_restarts).map(move |r| (k, r)))
        .collect();
    let fitted: Vec<(usize, usize, Clustering, ProfileTree, Vec<usize>)> = pairs
        .par_iter()
        .map(|&(k, r)| -> Result<_> {
            let clustering = kmeans_run(embedding.coords.view(), k, &rng.substream(&format!("kmeans/{k}/{r}")))
                .map_err(|e| Error::numerical("embed", e))?;
            let tree = fit_cart(
                ds.covariates.view(),
                &clustering.labels,
                config.tree.max_depth,
                min_leaf,
            )
            .map_err(|e| Error::numerical("profile", e))?;
            let leaves = leaf_assign(&tree, ds.covariates.view()).map_err(|e| Error::numerical("profile", e))?;
            Ok((k, r, clustering, tree, leaves))
        })
        .collect::<Result<_>>()?;

    // Identical leaf partitions share their test results.
    let mut unique: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let slot: Vec<usize> = fitted
        .iter()
        .map(|f| {
            *index.entry(f.4.clone()).or_insert_with(|| {
                unique.push(f.4.clone());
                unique.len() - 1
            })
        })
        .collect();
    let rs = RiskSets::new(&ds.time, &ds.event).map_err(|e| Error::numerical("select", e))?;
    let tests: Vec<LrtPair> = unique
        .par_iter()
        .map(|leaves| {
            (
                lrt_outcome(&rs, &ds.event, &ds.treatment, leaves, config.lrt),
                lrt_mediator(&ds.mediator, &ds.treatment, leaves, config.lrt),
            )
        })
        .collect();

    let candidates: Vec<Candidate> = fitted
        .into_iter()
        .zip(slot)
        .map(|((k, restart, clustering, tree, leaves), s)| {
            let (o, m) = tests[s].clone();
            let score = score_profile(k, restart, tree.leaf_count, o, m, thresholds);
            Candidate {
                k,
                restart,
                clustering,
                tree,
                leaves,
                score,
            }
        })
        .collect();
    let scores: Vec<ProfileScore> = candidates.iter().map(|c| c.score.clone()).collect();
    let selected = select_profile(&scores);
    Ok(PipelineRun {
        effects,
        embedding,
        candidates,
        selected,
        thresholds,
    })
}

/// Calibration output with the per-replicate p-values behind it.
#[derive(Debug, Clone)]
pub struct CalibrationRun {
    pub calibration: Calibration,
    pub replicates: Vec<NullReplicate>,
    /// Replicates whose pipeline failed; they count as non-detections.
    pub failed: usize,
}

fn calibrate_from(results: Vec<Result<NullReplicate>>, alpha: f64) -> CalibrationRun {
    let mut failed = 0;
    let replicates: Vec<NullReplicate> = results
        .into_iter()
        .map(|r| {
            r.unwrap_or_else(|e| {
                log::warn!("calibration replicate failed: {e}");
                failed += 1;
                NullReplicate { candidates: Vec::new() }
            })
        })
        .collect();
    CalibrationRun {
        calibration: thresholds_from_null(&replicates, alpha),
        replicates,
        failed,
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(crate::error::ConfigError::Value {
            key: "alpha".into(),
            message: "must lie in [0, 1]".into(),
        }));
    }
    Ok(())
}

/// Data stream of null-simulation replicate `r`.
pub fn null_sim_stream(seed: u64, r: usize) -> RngStream {
    RngStream::new(seed, "calibrate/null-sim").substream(&format!("rep{r}"))
}

/// Thresholds from `n_reps` simulated homogeneous datasets. The scenario
/// must be Null or Global; this is not checked.
pub fn calibrate_null_sim(
    spec: &ScenarioSpec,
    config: &RunConfig,
    n_reps: usize,
    alpha: f64,
    seed: u64,
) -> Result<CalibrationRun> {
    check_alpha(alpha)?;
    spec.validate()
        .map_err(|m| Error::Config(crate::error::ConfigError::Invalid(m)))?;
    let rng = analysis_stream(seed);
    let open = Thresholds {
        py_star: 1.0,
        pm_star: 1.0,
    };
    let results: Vec<Result<NullReplicate>> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let sim = gen_scenario_stream(spec, &null_sim_stream(seed, r))?;
            Ok(run_pipeline(&sim.dataset, config, open, &rng)?.null_replicate())
        })
        .collect();
    Ok(calibrate_from(results, alpha))
}

/// Covariate-row permutation of replicate `r`.
pub fn permutation_for(seed: u64, r: usize, n: usize) -> Vec<usize> {
    RngStream::new(seed, "calibrate/permutation")
        .substream(&format!("perm{r}"))
        .permutation(n)
}

/// Thresholds from `n_perms` datasets whose covariate rows are permuted
/// jointly while treatment, mediator and outcome stay in place.
pub fn calibrate_permutation(
    ds: &SurvivalDataset,
    config: &RunConfig,
    n_perms: usize,
    alpha: f64,
    seed: u64,
) -> Result<CalibrationRun> {
    check_alpha(alpha)?;
    let rng = analysis_stream(seed);
    let open = Thresholds {
        py_star: 1.0,
        pm_star: 1.0,
    };
    let results: Vec<Result<NullReplicate>> = (0..n_perms)
        .into_par_iter()
        .map(|r| {
            let permuted = ds.with_permuted_covariates(&permutation_for(seed, r, ds.n()));
            Ok(run_pipeline(&permuted, config, open, &rng)?.null_replicate())
        })
        .collect();
    Ok(calibrate_from(results, alpha))
}
