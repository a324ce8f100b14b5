//! Cox proportional-hazards machinery: Breslow partial likelihood, its
//! per-subject derivatives in the linear predictor, Newton-Raphson fitting
//! for linear designs, and the Breslow baseline cumulative hazard.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::NumError;
use crate::numstats::Cholesky;

const GRAD_TOL: f64 = 1e-6;
const MAX_NEWTON: usize = 50;
const MAX_HALVINGS: usize = 20;
const RIDGE: f64 = 1e-8;
const DIVERGENCE_BOUND: f64 = 50.0;

/// Subjects ordered by decreasing follow-up time, grouped by tied times.
///
/// Every member of a group shares the same time; the risk set at that time
/// is the union of this group and all groups before it.
#[derive(Debug, Clone)]
pub struct RiskSets {
    order: Vec<usize>,
    /// `[start, end)` ranges into `order`, in decreasing time.
    groups: Vec<(usize, usize)>,
    events: Vec<bool>,
    n_events: usize,
}

impl RiskSets {
    pub fn new(time: &[f64], event: &[bool]) -> Result<Self, NumError> {
        if time.len() != event.len() {
            return Err(NumError::Dimension(format!(
                "{} times but {} event indicators",
                time.len(),
                event.len()
            )));
        }
        let n_events = event.iter().filter(|d| **d).count();
        if n_events == 0 {
            return Err(NumError::Domain("partial likelihood needs at least one event".into()));
        }
        if time.iter().any(|t| !t.is_finite()) {
            return Err(NumError::NonFinite("follow-up time".into()));
        }
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]).then(a.cmp(&b)));
        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=order.len() {
            if k == order.len() || time[order[k]] != time[order[start]] {
                groups.push((start, k));
                start = k;
            }
        }
        Ok(Self {
            order,
            groups,
            events: event.to_vec(),
            n_events,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    fn check_eta(&self, eta: &[f64]) -> Result<f64, NumError> {
        if eta.len() != self.len() {
            return Err(NumError::Dimension(format!(
                "linear predictor has length {}, expected {}",
                eta.len(),
                self.len()
            )));
        }
        let mut max = f64::NEG_INFINITY;
        for &e in eta {
            if !e.is_finite() {
                return Err(NumError::NonFinite("linear predictor".into()));
            }
            max = max.max(e);
        }
        Ok(max)
    }

    /// Log partial likelihood with Breslow ties.
    pub fn partial_loglik(&self, eta: &[f64]) -> Result<f64, NumError> {
        let shift = self.check_eta(eta)?;
        let mut risk = 0.0;
        let mut ll = 0.0;
        for &(s, e) in &self.groups {
            let members = &self.order[s..e];
            for &i in members {
                risk += (eta[i] - shift).exp();
            }
            let log_risk = risk.ln();
            for &i in members {
                if self.events[i] {
                    ll += eta[i] - shift - log_risk;
                }
            }
        }
        Ok(ll)
    }

    /// Per-subject gradient and Hessian diagonal of the negative log partial
    /// likelihood with respect to the linear predictor.
    pub fn grad_hess(&self, eta: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NumError> {
        let shift = self.check_eta(eta)?;
        let n = self.len();
        let mut group_risk = Vec::with_capacity(self.groups.len());
        let mut risk = 0.0;
        for &(s, e) in &self.groups {
            for &i in &self.order[s..e] {
                risk += (eta[i] - shift).exp();
            }
            group_risk.push(risk);
        }
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut cum = 0.0;
        let mut cum2 = 0.0;
        for (g, &(s, e)) in self.groups.iter().enumerate().rev() {
            let members = &self.order[s..e];
            let d = members.iter().filter(|&&i| self.events[i]).count() as f64;
            if d > 0.0 {
                let r = group_risk[g];
                cum += d / r;
                cum2 += d / (r * r);
            }
            for &i in members {
                let w = (eta[i] - shift).exp();
                grad[i] = w * cum - if self.events[i] { 1.0 } else { 0.0 };
                hess[i] = (w * cum - w * w * cum2).max(0.0);
            }
        }
        Ok((grad, hess))
    }

    /// Breslow estimate of the baseline cumulative hazard at the given predictor.
    pub fn breslow(&self, eta: &[f64], time: &[f64]) -> Result<BaselineHazard, NumError> {
        let shift = self.check_eta(eta)?;
        let mut jumps = Vec::new();
        let mut risk = 0.0;
        for &(s, e) in &self.groups {
            let members = &self.order[s..e];
            for &i in members {
                risk += (eta[i] - shift).exp();
            }
            let d = members.iter().filter(|&&i| self.events[i]).count() as f64;
            if d > 0.0 {
                jumps.push((time[members[0]], d * (-shift).exp() / risk));
            }
        }
        jumps.reverse();
        let mut cumulative = Vec::with_capacity(jumps.len());
        let mut acc = 0.0;
        for &(_, j) in &jumps {
            acc += j;
            cumulative.push(acc);
        }
        Ok(BaselineHazard {
            event_times: jumps.iter().map(|(t, _)| *t).collect(),
            cumulative,
        })
    }
}

/// Log partial likelihood `sum_{delta_i = 1} [eta_i - log sum_{U_j >= U_i} exp(eta_j)]`.
pub fn cox_partial_loglik(eta: &[f64], time: &[f64], event: &[bool]) -> Result<f64, NumError> {
    RiskSets::new(time, event)?.partial_loglik(eta)
}

/// Gradient and Hessian diagonal of the negative log partial likelihood in `eta`.
pub fn cox_grad_hess(eta: &[f64], time: &[f64], event: &[bool]) -> Result<(Vec<f64>, Vec<f64>), NumError> {
    RiskSets::new(time, event)?.grad_hess(eta)
}

/// Step function estimate of the baseline cumulative hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    /// Distinct event times, ascending.
    pub event_times: Vec<f64>,
    /// Cumulative hazard just after each event time.
    pub cumulative: Vec<f64>,
}

impl BaselineHazard {
    /// Right-continuous evaluation; zero before the first event time.
    pub fn cumulative_at(&self, t: f64) -> f64 {
        let k = self.event_times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }
}

pub fn breslow_baseline(eta: &[f64], time: &[f64], event: &[bool]) -> Result<BaselineHazard, NumError> {
    RiskSets::new(time, event)?.breslow(eta, time)
}

/// Outcome of a Newton-Raphson Cox fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxLinearFit {
    pub coefficients: Vec<f64>,
    pub partial_loglik: f64,
    pub null_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// A ridge of 1e-8 was added to a singular information matrix.
    pub ridge: bool,
    /// Coefficients left the plausible range (monotone likelihood).
    pub diverged: bool,
    pub gradient_max: f64,
}

struct NewtonState {
    loglik: f64,
    score: Array1<f64>,
    info: Array2<f64>,
}

fn newton_state(rs: &RiskSets, design: ArrayView2<'_, f64>, beta: &Array1<f64>) -> Result<NewtonState, NumError> {
    let q = design.ncols();
    let eta: Vec<f64> = design.dot(beta).to_vec();
    let shift = rs.check_eta(&eta)?;
    let mut risk = 0.0;
    let mut a = Array1::<f64>::zeros(q);
    let mut b = Array2::<f64>::zeros((q, q));
    let mut loglik = 0.0;
    let mut score = Array1::<f64>::zeros(q);
    let mut info = Array2::<f64>::zeros((q, q));
    for &(s, e) in &rs.groups {
        let members = &rs.order[s..e];
        for &i in members {
            let w = (eta[i] - shift).exp();
            risk += w;
            let x = design.row(i);
            for j in 0..q {
                let wx = w * x[j];
                a[j] += wx;
                for k in 0..=j {
                    b[[j, k]] += wx * x[k];
                }
            }
        }
        let mut d = 0.0;
        for &i in members {
            if rs.events[i] {
                d += 1.0;
                loglik += eta[i] - shift;
                score.scaled_add(1.0, &design.row(i));
            }
        }
        if d > 0.0 {
            loglik -= d * risk.ln();
            for j in 0..q {
                let aj = a[j] / risk;
                score[j] -= d * aj;
                for k in 0..=j {
                    let v = d * (b[[j, k]] / risk - aj * a[k] / risk);
                    info[[j, k]] += v;
                }
            }
        }
    }
    for j in 0..q {
        for k in 0..j {
            info[[k, j]] = info[[j, k]];
        }
    }
    Ok(NewtonState { loglik, score, info })
}

fn max_abs(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Newton-Raphson maximization of the partial likelihood for `eta = design · beta`.
///
/// Starts at zero, halves steps that decrease the likelihood, and stops when
/// the score's sup-norm drops to 1e-6 or after 50 iterations.
pub fn cox_fit_linear(design: ArrayView2<'_, f64>, time: &[f64], event: &[bool]) -> Result<CoxLinearFit, NumError> {
    let rs = RiskSets::new(time, event)?;
    cox_fit_linear_with(&rs, design)
}

pub fn cox_fit_linear_with(rs: &RiskSets, design: ArrayView2<'_, f64>) -> Result<CoxLinearFit, NumError> {
    let (n, q) = design.dim();
    if n != rs.len() {
        return Err(NumError::Dimension(format!(
            "design has {n} rows, survival data has {}",
            rs.len()
        )));
    }
    if rs.n_events() < q {
        return Err(NumError::Domain(format!(
            "{} events cannot identify {q} coefficients",
            rs.n_events()
        )));
    }
    for (j, col) in design.columns().into_iter().enumerate() {
        if n > 0 && col.iter().all(|v| *v == col[0]) {
            return Err(NumError::Domain(format!(
                "design column {j} is constant; the baseline hazard absorbs intercepts"
            )));
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite(format!("design column {j}")));
        }
    }

    let mut beta = Array1::<f64>::zeros(q);
    let mut state = newton_state(rs, design, &beta)?;
    let null_loglik = state.loglik;
    let mut ridge = false;
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;

    while iterations < MAX_NEWTON {
        if max_abs(&state.score) <= GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let chol = match Cholesky::factor(state.info.view()) {
            Ok(c) => c,
            Err(_) => {
                ridge = true;
                let ridged = &state.info + &(Array2::<f64>::eye(q) * RIDGE);
                match Cholesky::factor(ridged.view()) {
                    Ok(c) => c,
                    Err(_) => break,
                }
            }
        };
        let step = chol.solve(state.score.view())?;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &beta + &(&step * scale);
            if max_abs(&trial) > DIVERGENCE_BOUND {
                scale *= 0.5;
                diverged = true;
                continue;
            }
            let next = newton_state(rs, design, &trial)?;
            if next.loglik >= state.loglik - 1e-12 * state.loglik.abs().max(1.0) {
                accepted = Some((trial, next));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((b, s)) => {
                let improvement = s.loglik - state.loglik;
                beta = b;
                state = s;
                diverged = false;
                if improvement.abs() < 1e-14 && max_abs(&state.score) > GRAD_TOL {
                    // Stalled: no further progress available.
                    break;
                }
            }
            None => break,
        }
    }
    if !converged && max_abs(&state.score) <= GRAD_TOL {
        converged = true;
    }
    if max_abs(&beta) > DIVERGENCE_BOUND {
        diverged = true;
    }
    if diverged {
        converged = false;
    }

    Ok(CoxLinearFit {
        coefficients: beta.to_vec(),
        partial_loglik: state.loglik,
        null_loglik,
        iterations,
        converged,
        ridge,
        diverged,
        gradient_max: max_abs(&state.score),
    })
}
