//! Simulation scenarios with known effect functions.
//!
//! Event times follow a Weibull proportional-hazards model with cumulative
//! hazard `Λ(t | η) = (t / λ)^ν · exp(η)`; censoring is independent
//! exponential with its rate tuned to a target censoring fraction.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{DataError, NumError};
use crate::numstats::RngStream;

pub const N_COVARIATES: usize = 10;

/// Outcome coefficients on X in the linear family.
const LINEAR_BETA_X: [f64; N_COVARIATES] = [0.0, 0.0, 0.0, 0.0, 0.4, -0.4, 0.3, -0.3, 0.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    Heterogeneous,
    Global,
    Null,
    All1,
    Part1,
    All2,
    Part2,
}

impl Scenario {
    pub const LINEAR: [Scenario; 3] = [Scenario::Heterogeneous, Scenario::Global, Scenario::Null];
    pub const COMPLEX: [Scenario; 6] = [
        Scenario::All1,
        Scenario::Part1,
        Scenario::All2,
        Scenario::Part2,
        Scenario::Global,
        Scenario::Null,
    ];

    pub fn valid_for(family: Family) -> &'static [Scenario] {
        match family {
            Family::Linear => &Self::LINEAR,
            Family::Complex => &Self::COMPLEX,
        }
    }

    /// Mediation confined to the quadrant `X1 > 0, X2 > 0`.
    pub fn is_heterogeneous(&self) -> bool {
        !matches!(self, Scenario::Global | Scenario::Null)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Linear => "linear",
            Family::Complex => "complex",
        })
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Family::Linear),
            "complex" => Ok(Family::Complex),
            _ => Err(format!("unknown family `{s}`; valid: linear, complex")),
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let all = [
            Scenario::Heterogeneous,
            Scenario::Global,
            Scenario::Null,
            Scenario::All1,
            Scenario::Part1,
            Scenario::All2,
            Scenario::Part2,
        ];
        all.iter()
            .find(|sc| sc.to_string().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| {
                let names: Vec<String> = all.iter().map(|s| s.to_string()).collect();
                format!("unknown scenario `{s}`; valid: {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub family: Family,
    pub scenario: Scenario,
    pub n: usize,
    pub nu: f64,
    pub lambda_scale: f64,
    pub censoring_rate_target: f64,
    pub a_m: f64,
    pub a_w: f64,
    pub a_het: f64,
}

impl ScenarioSpec {
    pub fn new(family: Family, scenario: Scenario, n: usize) -> Self {
        Self {
            family,
            scenario,
            n,
            nu: 2.0,
            lambda_scale: 1.0 / 300.0,
            censoring_rate_target: 0.25,
            a_m: 0.5,
            a_w: 0.5,
            a_het: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !Scenario::valid_for(self.family).contains(&self.scenario) {
            let names: Vec<String> = Scenario::valid_for(self.family).iter().map(|s| s.to_string()).collect();
            return Err(format!(
                "scenario {} is not part of the {} family; valid: {}",
                self.scenario,
                self.family,
                names.join(", ")
            ));
        }
        if self.n < 2 {
            return Err("n must be at least 2".into());
        }
        if !(self.nu > 0.0) || !(self.lambda_scale > 0.0) {
            return Err("Weibull shape and scale must be positive".into());
        }
        if !(0.0..0.9).contains(&self.censoring_rate_target) {
            return Err("censoring target must lie in [0, 0.9)".into());
        }
        Ok(())
    }

    /// Effect functions evaluated at one covariate row.
    pub fn kappas(&self, x: &[f64]) -> Kappas {
        let quadrant = x[0] > 0.0 && x[1] > 0.0;
        let q = if quadrant { 1.0 } else { 0.0 };
        let (a_m, a_w, a_het) = (self.a_m, self.a_w, self.a_het);
        match self.family {
            Family::Linear => {
                let k1: f64 = x.iter().zip(LINEAR_BETA_X).map(|(a, b)| a * b).sum();
                let k5 = match self.scenario {
                    Scenario::Heterogeneous => a_het * q,
                    Scenario::Global => a_het,
                    _ => 0.0,
                };
                Kappas {
                    k1,
                    k2: a_w,
                    k3: a_m,
                    k4: x[0],
                    k5,
                }
            }
            Family::Complex => {
                let k1 = 0.4 * x[4] - 0.4 * if x[5] > 0.0 { 1.0 } else { 0.0 } + 0.3 * (x[6] * x[6] - 1.0);
                let (k2, k3, k5) = match self.scenario {
                    Scenario::All1 => (0.0, a_m, a_het * q),
                    Scenario::Part1 => (a_w, a_m, a_het * q),
                    Scenario::All2 => (0.0, a_m * (1.0 + 0.5 * x[2]), a_het * q),
                    Scenario::Part2 => (a_w * (1.0 + 0.5 * x[3]), a_m * (1.0 + 0.5 * x[2]), a_het * q),
                    Scenario::Global => (0.0, a_m, a_het),
                    _ => (a_w, a_m, 0.0),
                };
                Kappas {
                    k1,
                    k2,
                    k3,
                    k4: x[0],
                    k5,
                }
            }
        }
    }

    fn active(&self, x: &[f64]) -> bool {
        match self.scenario {
            Scenario::Global => true,
            Scenario::Null => false,
            _ => x[0] > 0.0 && x[1] > 0.0,
        }
    }
}

/// `g = κ1 + κ2·W + κ3·M` and `M = κ4 + κ5·W + ε`. The mediator baseline
/// `κ4(X) = X1` is shared by every scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappas {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub dataset: SurvivalDataset,
    pub spec: ScenarioSpec,
    pub true_niecc: Vec<f64>,
    pub true_dte: Vec<f64>,
    pub true_tte: Vec<f64>,
    pub active_region: Vec<bool>,
    /// Exponential censoring rate used (0 when uncensored).
    pub censoring_hazard: f64,
}

/// Weibull inversion: `T = λ·(−ln u · e^{−η})^{1/ν}`.
pub fn weibull_time(u: f64, eta: f64, nu: f64, lambda_scale: f64) -> f64 {
    lambda_scale * (-u.ln() * (-eta).exp()).powf(1.0 / nu)
}

/// Expected censored fraction `mean(1 − exp(−r·T_i))` for rate `r`.
fn expected_censoring(times: &[f64], rate: f64) -> f64 {
    times.iter().map(|t| -(-rate * t).exp_m1()).sum::<f64>() / times.len() as f64
}

/// Exponential censoring rate whose expected censored fraction on `times`
/// equals `target`, by bisection on the log rate.
pub fn tune_censoring(times: &[f64], target: f64) -> Result<f64, NumError> {
    if target <= 0.0 {
        return Ok(0.0);
    }
    if times.is_empty() || !(target < 1.0) {
        return Err(NumError::Domain(format!("censoring target {target} is unattainable")));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let (mut lo, mut hi) = ((1e-12 / median).ln(), (1e12 / median).ln());
    if expected_censoring(times, hi.exp()) < target || expected_censoring(times, lo.exp()) > target {
        return Err(NumError::Domain(format!("censoring target {target} is unattainable")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_censoring(times, mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

struct Draws {
    x: Array2<f64>,
    w: Vec<bool>,
    m: Vec<f64>,
    t: Vec<f64>,
}

fn draw(spec: &ScenarioSpec, n: usize, rng: &RngStream) -> Draws {
    let mut xs = rng.substream("covariates");
    let x = Array2::from_shape_fn((n, N_COVARIATES), |_| xs.normal());
    let mut ws = rng.substream("treatment");
    let w: Vec<bool> = (0..n).map(|_| ws.bernoulli(0.5)).collect();
    let mut es = rng.substream("mediator-noise");
    let mut us = rng.substream("event");
    let mut m = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for (row, &treated) in x.rows().into_iter().zip(&w) {
        let k = spec.kappas(&row.to_vec());
        let wi = if treated { 1.0 } else { 0.0 };
        let mi = k.k4 + k.k5 * wi + es.normal();
        let eta = k.k1 + k.k2 * wi + k.k3 * mi;
        m.push(mi);
        t.push(weibull_time(us.uniform_open(), eta, spec.nu, spec.lambda_scale).max(f64::MIN_POSITIVE));
    }
    Draws { x, w, m, t }
}

/// Generate one replicate from a stream; identical streams give identical data.
pub fn gen_scenario_stream(spec: &ScenarioSpec, rng: &RngStream) -> Result<SimulatedDataset, DataError> {
    spec.validate().map_err(DataError::Invariant)?;
    let n = spec.n;
    let pilot = draw(spec, 20 * n, &rng.substream("pilot"));
    let rate = tune_censoring(&pilot.t, spec.censoring_rate_target).map_err(|e| DataError::Invariant(e.to_string()))?;
    let d = draw(spec, n, rng);
    let mut cs = rng.substream("censoring");
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for &ti in &d.t {
        let c = if rate > 0.0 {
            (cs.exponential() / rate).max(f64::MIN_POSITIVE)
        } else {
            f64::INFINITY
        };
        time.push(ti.min(c));
        event.push(ti <= c);
    }
    let mut true_niecc = Vec::with_capacity(n);
    let mut true_dte = Vec::with_capacity(n);
    let mut active_region = Vec::with_capacity(n);
    for row in d.x.rows() {
        let row = row.to_vec();
        let k = spec.kappas(&row);
        true_niecc.push(k.k3 * k.k5);
        true_dte.push(k.k2);
        active_region.push(spec.active(&row));
    }
    let true_tte = true_niecc.iter().zip(&true_dte).map(|(a, b)| a + b).collect();
    let names = (1..=N_COVARIATES).map(|j| format!("X{j}")).collect();
    let dataset = SurvivalDataset::new(time, event, d.w, d.m, d.x, names)?;
    Ok(SimulatedDataset {
        dataset,
        spec: *spec,
        true_niecc,
        true_dte,
        true_tte,
        active_region,
        censoring_hazard: rate,
    })
}

pub fn gen_scenario(spec: &ScenarioSpec, seed: u64) -> Result<SimulatedDataset, DataError> {
    gen_scenario_stream(spec, &RngStream::new(seed, "scenario"))
}

pub fn censoring_rate(ds: &SurvivalDataset) -> f64 {
    1.0 - ds.n_events() as f64 / ds.n() as f64
}

impl SimulatedDataset {
    /// Sidecar truth file: row id, true_niecc, true_dte, true_tte, active_region.
    pub fn truth_csv(&self) -> String {
        let mut s = String::from("row,true_niecc,true_dte,true_tte,active_region\n");
        for i in 0..self.true_niecc.len() {
            s.push_str(&format!(
                "{},{:?},{:?},{:?},{}\n",
                i,
                self.true_niecc[i],
                self.true_dte[i],
                self.true_tte[i],
                u8::from(self.active_region[i])
            ));
        }
        s
    }
}
