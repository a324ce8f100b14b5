//! Outcome and mediator models and the plug-in estimate of the natural
//! indirect effect conditional on covariates (NIECC).
//!
//! With outcome log-relative hazard `g(x, w, m)` and per-arm mediator means
//! `m0(x)`, `m1(x)`, the estimates for subject `i` are
//!
//! * `niecc = g(x, 1, m1(x)) - g(x, 1, m0(x))`
//! * `dte   = g(x, 1, m0(x)) - g(x, 0, m0(x))`
//! * `tte   = niecc + dte`
//!
//! all on the log-hazard scale and constant in time.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::cox::{cox_fit_linear, BaselineHazard, RiskSets};
use crate::data::SurvivalDataset;
use crate::error::{Error, NumError, Result};
use crate::learners::{boost_fit, BoostTarget, BoostedModel, Loss};
use crate::numstats::{ols_fit, RngStream};

const RARE_EVENT_WARNING: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OutcomeFunction {
    Linear {
        beta_x: Vec<f64>,
        beta_w: f64,
        beta_m: f64,
    },
    /// Boosted over features `(x_1..x_p, w, m)`.
    Boosted {
        model: BoostedModel,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDiagnostics {
    pub event_rate: f64,
    /// Event rate above 30%; the log-hazard decomposition assumes rare events.
    pub rare_event_warning: bool,
    pub iterations: usize,
    pub converged: bool,
    pub partial_loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub mode: Mode,
    pub function: OutcomeFunction,
    pub baseline: BaselineHazard,
    pub diagnostics: OutcomeDiagnostics,
}

impl OutcomeModel {
    /// Fitted log-relative hazard.
    pub fn ghat(&self, x: &[f64], w: f64, m: f64) -> f64 {
        match &self.function {
            OutcomeFunction::Linear { beta_x, beta_w, beta_m } => {
                let xb: f64 = x.iter().zip(beta_x).map(|(a, b)| a * b).sum();
                xb + beta_w * w + beta_m * m
            }
            OutcomeFunction::Boosted { model } => {
                let mut row = Vec::with_capacity(x.len() + 2);
                row.extend_from_slice(x);
                row.push(w);
                row.push(m);
                model.predict_row(&row)
            }
        }
    }

    fn indirect(&self, x: &[f64], m1: f64, m0: f64) -> f64 {
        match &self.function {
            OutcomeFunction::Linear { beta_m, .. } => beta_m * (m1 - m0),
            OutcomeFunction::Boosted { .. } => self.ghat(x, 1.0, m1) - self.ghat(x, 1.0, m0),
        }
    }

    fn direct(&self, x: &[f64], m0: f64) -> f64 {
        match &self.function {
            OutcomeFunction::Linear { beta_w, .. } => *beta_w,
            OutcomeFunction::Boosted { .. } => self.ghat(x, 1.0, m0) - self.ghat(x, 0.0, m0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArmFunction {
    /// Intercept first, then one coefficient per covariate.
    Linear {
        coefficients: Vec<f64>,
    },
    Boosted {
        model: BoostedModel,
    },
}

impl ArmFunction {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            ArmFunction::Linear { coefficients } => {
                coefficients[0] + x.iter().zip(&coefficients[1..]).map(|(a, b)| a * b).sum::<f64>()
            }
            ArmFunction::Boosted { model } => model.predict_row(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediatorModel {
    pub control: ArmFunction,
    pub treated: ArmFunction,
    /// Residual standard deviation per arm (control, treated).
    pub residual_sd: [f64; 2],
}

impl MediatorModel {
    pub fn m0(&self, x: &[f64]) -> f64 {
        self.control.predict(x)
    }

    pub fn m1(&self, x: &[f64]) -> f64 {
        self.treated.predict(x)
    }

    /// Estimated treatment effect on the mediator.
    pub fn effect(&self, x: &[f64]) -> f64 {
        self.m1(x) - self.m0(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    pub niecc: Vec<f64>,
    pub dte: Vec<f64>,
    pub tte: Vec<f64>,
    pub crossfit_folds: usize,
}

fn outcome_features(ds: &SurvivalDataset) -> Array2<f64> {
    let (n, p) = (ds.n(), ds.p());
    let mut f = Array2::<f64>::zeros((n, p + 2));
    f.slice_mut(s![.., ..p]).assign(&ds.covariates);
    for i in 0..n {
        f[[i, p]] = if ds.treatment[i] { 1.0 } else { 0.0 };
        f[[i, p + 1]] = ds.mediator[i];
    }
    f
}

/// Fit the Cox outcome model `λ(t | x, w, m) = λ0(t) exp(g(x, w, m))`.
pub fn fit_outcome_model(ds: &SurvivalDataset, mode: Mode, config: &RunConfig) -> Result<OutcomeModel> {
    ds.validate_for_fitting()?;
    let features = outcome_features(ds);
    let p = ds.p();
    let rs = RiskSets::new(&ds.time, &ds.event).map_err(|e| Error::numerical("outcome", e))?;
    let (function, eta, iterations, converged) = match mode {
        Mode::Linear => {
            if ds.mediator.iter().all(|m| *m == ds.mediator[0]) {
                return Err(Error::numerical(
                    "outcome",
                    NumError::Domain("degenerate mediator: constant column cannot identify its coefficient".into()),
                ));
            }
            let fit =
                cox_fit_linear(features.view(), &ds.time, &ds.event).map_err(|e| Error::numerical("outcome", e))?;
            if !fit.converged {
                return Err(Error::numerical(
                    "outcome",
                    NumError::NonConvergence(format!(
                        "linear Cox fit stopped after {} iterations (max |score| {:.3e})",
                        fit.iterations, fit.gradient_max
                    )),
                ));
            }
            let eta = features.dot(&ndarray::Array1::from(fit.coefficients.clone())).to_vec();
            let function = OutcomeFunction::Linear {
                beta_x: fit.coefficients[..p].to_vec(),
                beta_w: fit.coefficients[p],
                beta_m: fit.coefficients[p + 1],
            };
            (function, eta, fit.iterations, true)
        }
        Mode::Complex => {
            let model = if config.boosting.rounds == 0 {
                BoostedModel::constant(Loss::Cox, 0.0, p + 2)
            } else {
                boost_fit(
                    features.view(),
                    BoostTarget::Cox {
                        time: &ds.time,
                        event: &ds.event,
                    },
                    &config.boosting,
                )
                .map_err(|e| Error::numerical("outcome", e))?
            };
            let eta = model
                .predict(features.view())
                .map_err(|e| Error::numerical("outcome", e))?;
            let rounds = model.trees.len();
            (OutcomeFunction::Boosted { model }, eta, rounds, true)
        }
    };
    let baseline = rs.breslow(&eta, &ds.time).map_err(|e| Error::numerical("outcome", e))?;
    let partial_loglik = rs.partial_loglik(&eta).map_err(|e| Error::numerical("outcome", e))?;
    let event_rate = ds.event_rate();
    let rare_event_warning = event_rate > RARE_EVENT_WARNING;
    if rare_event_warning {
        log::warn!(
            "event rate {:.1}% exceeds 30%; the indirect-effect decomposition assumes rare events",
            100.0 * event_rate
        );
    }
    Ok(OutcomeModel {
        mode,
        function,
        baseline,
        diagnostics: OutcomeDiagnostics {
            event_rate,
            rare_event_warning,
            iterations,
            converged,
            partial_loglik,
        },
    })
}

fn fit_arm(x: ArrayView2<'_, f64>, m: &[f64], mode: Mode, config: &RunConfig, arm: &str) -> Result<(ArmFunction, f64)> {
    let (n, p) = x.dim();
    match mode {
        Mode::Linear => {
            if n <= p + 1 {
                return Err(Error::numerical(
                    "mediator",
                    NumError::Domain(format!(
                        "{arm} arm has {n} rows; a linear fit on {p} covariates needs more than {}",
                        p + 1
                    )),
                ));
            }
            let mut design = Array2::<f64>::ones((n, p + 1));
            design.slice_mut(s![.., 1..]).assign(&x);
            let fit =
                ols_fit(design.view(), ndarray::ArrayView1::from(m)).map_err(|e| Error::numerical("mediator", e))?;
            let sd = (fit.rss / (n - p - 1) as f64).sqrt();
            Ok((
                ArmFunction::Linear {
                    coefficients: fit.coefficients.to_vec(),
                },
                sd,
            ))
        }
        Mode::Complex => {
            if n == 0 {
                return Err(Error::numerical(
                    "mediator",
                    NumError::Domain(format!("{arm} arm is empty")),
                ));
            }
            let model =
                boost_fit(x, BoostTarget::Squared(m), &config.boosting).map_err(|e| Error::numerical("mediator", e))?;
            let pred = model.predict(x).map_err(|e| Error::numerical("mediator", e))?;
            let rss: f64 = pred.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum();
            Ok((ArmFunction::Boosted { model }, (rss / n as f64).sqrt()))
        }
    }
}

/// Fit `M ~ X` separately in each arm.
pub fn fit_mediator_model(ds: &SurvivalDataset, mode: Mode, config: &RunConfig) -> Result<MediatorModel> {
    let arm_rows = |treated: bool| -> Vec<usize> { (0..ds.n()).filter(|&i| ds.treatment[i] == treated).collect() };
    let mut fits = Vec::with_capacity(2);
    for (treated, name) in [(false, "control"), (true, "treated")] {
        let rows = arm_rows(treated);
        if rows.is_empty() {
            return Err(Error::numerical(
                "mediator",
                NumError::Domain(format!("{name} arm is empty")),
            ));
        }
        let x = ds.covariates.select(ndarray::Axis(0), &rows);
        let m: Vec<f64> = rows.iter().map(|&i| ds.mediator[i]).collect();
        fits.push(fit_arm(x.view(), &m, mode, config, name)?);
    }
    let (treated, sd1) = fits.pop().expect("two arms");
    let (control, sd0) = fits.pop().expect("two arms");
    Ok(MediatorModel {
        control,
        treated,
        residual_sd: [sd0, sd1],
    })
}

/// Plug-in NIECC, DTE and TTE for every row of `x`.
pub fn compute_niecc(outcome: &OutcomeModel, mediator: &MediatorModel, x: ArrayView2<'_, f64>) -> EffectEstimates {
    let n = x.nrows();
    let mut niecc = Vec::with_capacity(n);
    let mut dte = Vec::with_capacity(n);
    let mut tte = Vec::with_capacity(n);
    for row in x.rows() {
        let row = row.to_vec();
        let (m1, m0) = (mediator.m1(&row), mediator.m0(&row));
        let ie = outcome.indirect(&row, m1, m0);
        let de = outcome.direct(&row, m0);
        niecc.push(ie);
        dte.push(de);
        tte.push(ie + de);
    }
    EffectEstimates {
        niecc,
        dte,
        tte,
        crossfit_folds: 0,
    }
}

/// Fitted models together with the effect estimates they produced.
#[derive(Debug, Clone)]
pub struct EffectFit {
    pub outcome: OutcomeModel,
    pub mediator: MediatorModel,
    pub estimates: EffectEstimates,
}

/// Fit both models and estimate effects, with optional K-fold cross-fitting.
///
/// With `config.crossfit_folds = K >= 2` each row's effects come from models
/// fit on the other K - 1 folds; the returned models are full-data fits used
/// for counterfactual curves.
pub fn estimate_effects(ds: &SurvivalDataset, config: &RunConfig, rng: &RngStream) -> Result<EffectFit> {
    let outcome = fit_outcome_model(ds, config.mode, config)?;
    let mediator = fit_mediator_model(ds, config.mode, config)?;
    let folds = config.crossfit_folds;
    let estimates = if folds >= 2 {
        let perm = rng.substream("crossfit").permutation(ds.n());
        let mut fold_of = vec![0usize; ds.n()];
        for (k, &i) in perm.iter().enumerate() {
            fold_of[i] = k % folds;
        }
        let mut est = EffectEstimates {
            niecc: vec![0.0; ds.n()],
            dte: vec![0.0; ds.n()],
            tte: vec![0.0; ds.n()],
            crossfit_folds: folds,
        };
        for fold in 0..folds {
            let train: Vec<usize> = (0..ds.n()).filter(|&i| fold_of[i] != fold).collect();
            let test: Vec<usize> = (0..ds.n()).filter(|&i| fold_of[i] == fold).collect();
            let sub = ds.select_rows(&train);
            let o = fit_outcome_model(&sub, config.mode, config)?;
            let m = fit_mediator_model(&sub, config.mode, config)?;
            let xt = ds.covariates.select(ndarray::Axis(0), &test);
            let e = compute_niecc(&o, &m, xt.view());
            for (k, &i) in test.iter().enumerate() {
                est.niecc[i] = e.niecc[k];
                est.dte[i] = e.dte[k];
                est.tte[i] = e.tte[k];
            }
        }
        est
    } else {
        compute_niecc(&outcome, &mediator, ds.covariates.view())
    };
    Ok(EffectFit {
        outcome,
        mediator,
        estimates,
    })
}

/// Treatment level of the outcome model and of the mediator distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    /// S(1, M(1))
    TreatedWithTreatedMediator,
    /// S(1, M(0))
    TreatedWithControlMediator,
    /// S(0, M(0))
    ControlWithControlMediator,
}

impl Setting {
    pub const ALL: [Setting; 3] = [
        Setting::TreatedWithTreatedMediator,
        Setting::TreatedWithControlMediator,
        Setting::ControlWithControlMediator,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Setting::TreatedWithTreatedMediator => "S(1,M(1))",
            Setting::TreatedWithControlMediator => "S(1,M(0))",
            Setting::ControlWithControlMediator => "S(0,M(0))",
        }
    }
}

/// Covariate-standardized counterfactual survival over a subgroup:
/// `S(t) = mean_i exp(-Λ0(t) exp(g(x_i, w, m_{w'}(x_i))))`.
pub fn counterfactual_survival(
    outcome: &OutcomeModel,
    mediator: &MediatorModel,
    rows: ArrayView2<'_, f64>,
    setting: Setting,
    grid: &[f64],
) -> Result<Vec<f64>> {
    if rows.nrows() == 0 {
        return Err(Error::numerical(
            "niecc",
            NumError::Domain("counterfactual survival needs a nonempty subgroup".into()),
        ));
    }
    let risks: Vec<f64> = rows
        .rows()
        .into_iter()
        .map(|r| {
            let x = r.to_vec();
            let (w, m) = match setting {
                Setting::TreatedWithTreatedMediator => (1.0, mediator.m1(&x)),
                Setting::TreatedWithControlMediator => (1.0, mediator.m0(&x)),
                Setting::ControlWithControlMediator => (0.0, mediator.m0(&x)),
            };
            outcome.ghat(&x, w, m).exp()
        })
        .collect();
    let n = risks.len() as f64;
    Ok(grid
        .iter()
        .map(|&t| {
            let h = outcome.baseline.cumulative_at(t);
            risks.iter().map(|r| (-h * r).exp()).sum::<f64>() / n
        })
        .collect())
}
