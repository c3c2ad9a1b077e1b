//! Choice of the surrogate loss family and its parameters by sequential
//! model-based optimization on a holdout split of the training data.

use std::io::Write;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::evaluation::charge;
use crate::exec;
use crate::forest::{fit_forest, ForestParams, MaxFeatures, Variance};
use crate::loss::{ranges, LossSpec};
use crate::rng::{derive_seed, rng_from};
use crate::scenario::View;
use crate::selectors::SurvivalSelector;
use crate::survival::{expected_loss, StepFunction, SurvivalConversion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneBudget {
    pub n_evaluations: usize,
    pub inner_validation_fraction: f64,
    pub seed: u64,
}

impl Default for TuneBudget {
    fn default() -> Self {
        TuneBudget {
            n_evaluations: 50,
            inner_validation_fraction: 0.3,
            seed: 0,
        }
    }
}

impl TuneBudget {
    pub fn validate(&self) -> Result<()> {
        if self.n_evaluations < 2 {
            return invalid("tuning needs n_evaluations ≥ 2");
        }
        if !(self.inner_validation_fraction > 0.0 && self.inner_validation_fraction < 1.0) {
            return invalid("inner_validation_fraction must lie in (0, 1)");
        }
        Ok(())
    }

    /// Size of the initial quasi-random design: 10% of the budget, at least 2.
    pub fn n_initial(&self) -> usize {
        (self.n_evaluations as f64 * 0.1).ceil().max(2.0).min(self.n_evaluations as f64) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub loss: LossSpec,
    pub validation_par10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: LossSpec,
    pub best_par10: f64,
    pub trace: Vec<TraceEntry>,
    /// Every candidate scored the same; `best` is then the first one.
    pub degenerate: bool,
    /// Scenario indices of the inner split, for auditing.
    pub inner_train: Vec<usize>,
    pub inner_validation: Vec<usize>,
}

/// Point of the search space: family flag and two coordinates in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
struct Point {
    polynomial: bool,
    u: [f64; 2],
}

fn log_scale((lo, hi): (f64, f64), u: f64) -> f64 {
    (lo.ln() + u.clamp(0.0, 1.0) * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
}

impl Point {
    fn loss(&self) -> LossSpec {
        if self.polynomial {
            LossSpec::Polynomial {
                alpha: log_scale(ranges::POLY_ALPHA, self.u[0]),
            }
        } else {
            LossSpec::CappedLog {
                alpha: log_scale(ranges::LOG_ALPHA, self.u[0]),
                beta: log_scale(ranges::LOG_BETA, self.u[1]),
            }
        }
    }

    /// One-hot family followed by the family's log-normalized parameters;
    /// inactive parameters are 0.
    fn encode(&self) -> Vec<f64> {
        let (p, l) = (f64::from(u8::from(self.polynomial)), f64::from(u8::from(!self.polynomial)));
        vec![p, l, p * self.u[0], l * self.u[0], l * self.u[1]]
    }
}

/// Radical inverse of `index` in `base`.
fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Halton points in bases 2, 3, 5 with a seeded random shift modulo 1.
fn initial_design(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = rng_from(seed);
    let shift: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    (1..=n as u64)
        .map(|k| {
            let h = [halton(k, 2), halton(k, 3), halton(k, 5)];
            let s: Vec<f64> = h.iter().zip(&shift).map(|(a, b)| (a + b).fract()).collect();
            Point {
                polynomial: s[0] < 0.5,
                u: [s[1], s[2]],
            }
        })
        .collect()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best` under `N(mu, sigma²)`.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    if !(sigma > 0.0) {
        return (best - mu).max(0.0);
    }
    let z = (best - mu) / sigma;
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (best - mu) * std_normal_cdf(z) + sigma * pdf
}

/// Predicted survival functions for the validation instances, fitted once.
struct Validation<'a> {
    view: View<'a>,
    sfs: Vec<Vec<StepFunction>>,
}

impl Validation<'_> {
    /// Mean PAR10 on the validation instances of the selector induced by
    /// `loss`, feature costs included.
    fn score(&self, loss: &LossSpec) -> Result<f64> {
        let s = self.view.scenario;
        let mut total = 0.0;
        for (k, &i) in self.view.instances.iter().enumerate() {
            let scores = self.sfs[k]
                .iter()
                .map(|sf| expected_loss(sf, loss, s.cutoff))
                .collect::<Result<Vec<_>>>()?;
            total += charge(s, i, crate::argmin(&scores), true).par10;
        }
        Ok(total / self.view.len() as f64)
    }
}

const N_RANDOM_CANDIDATES: usize = 500;
const N_LOCAL_CANDIDATES: usize = 100;
const LOCAL_STEP: f64 = 0.05;

fn surrogate_params(seed: u64) -> ForestParams {
    ForestParams {
        n_trees: 32,
        max_features: MaxFeatures::All,
        min_samples_leaf: 1,
        min_uncensored_leaf: 1,
        max_depth: None,
        bootstrap: true,
        seed,
    }
}

/// Proposes the next point by maximizing expected improvement under a
/// regression-forest response surface over random and local candidates.
fn propose(history: &[(Point, f64)], seed: u64) -> Result<Point> {
    let x: Vec<Vec<f64>> = history.iter().map(|(p, _)| p.encode()).collect();
    let y: Vec<f64> = history.iter().map(|(_, v)| *v).collect();
    let model = fit_forest(&x, &Variance::new(&y), None, &surrogate_params(derive_seed(seed, 1)))?;
    let (incumbent, best) = history
        .iter()
        .fold((history[0].0, f64::INFINITY), |acc, (p, v)| if *v < acc.1 { (*p, *v) } else { acc });

    let mut rng = rng_from(derive_seed(seed, 2));
    let mut candidates: Vec<Point> = (0..N_RANDOM_CANDIDATES)
        .map(|_| Point {
            polynomial: rng.random::<bool>(),
            u: [rng.random(), rng.random()],
        })
        .collect();
    for _ in 0..N_LOCAL_CANDIDATES {
        let mut p = incumbent;
        for u in &mut p.u {
            *u = (*u + LOCAL_STEP * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0);
        }
        candidates.push(p);
    }
    let ei = candidates
        .iter()
        .map(|c| {
            let (mu, var) = model.predict_mean_var(&c.encode())?;
            Ok(expected_improvement(mu, var.max(0.0).sqrt(), best))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(candidates[crate::argmin_by(&ei, |v| -v)])
}

/// Splits `view` into inner-train and inner-validation, fits one survival
/// forest per algorithm on the inner-train part and searches the polynomial
/// and capped-log families for the loss whose induced selector has the
/// lowest validation PAR10.
pub fn tune_surrogate(
    view: View<'_>,
    budget: &TuneBudget,
    forest: &ForestParams,
    conversion: SurvivalConversion,
) -> Result<TuneResult> {
    budget.validate()?;
    let n = view.len();
    if n < 2 {
        return invalid("tuning needs at least two training instances");
    }
    let n_val = ((n as f64 * budget.inner_validation_fraction).round() as usize).clamp(1, n - 1);
    let mut ids = view.instances.to_vec();
    ids.shuffle(&mut rng_from(derive_seed(budget.seed, 0)));
    let inner_validation = ids[..n_val].to_vec();
    let inner_train = ids[n_val..].to_vec();

    let train_view = View::new(view.scenario, &inner_train);
    let (imputer, models) = SurvivalSelector::fit_models(train_view, forest, conversion)?;
    let selector = SurvivalSelector::from_models(imputer, models, LossSpec::Identity);
    let sfs = exec::map_slice(&inner_validation, |&i| selector.predict_survival(&view.scenario.features[i]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let validation = Validation {
        view: View::new(view.scenario, &inner_validation),
        sfs,
    };

    let design = initial_design(budget.n_initial(), derive_seed(budget.seed, 3));
    let scores = exec::map_slice(&design, |p| validation.score(&p.loss()));
    let mut history: Vec<(Point, f64)> = design.into_iter().zip(scores).map(|(p, s)| s.map(|s| (p, s))).collect::<Result<_>>()?;
    while history.len() < budget.n_evaluations {
        let p = propose(&history, derive_seed(budget.seed, 100 + history.len() as u64))?;
        let v = validation.score(&p.loss())?;
        history.push((p, v));
    }

    let trace: Vec<TraceEntry> = history
        .iter()
        .map(|(p, v)| TraceEntry {
            loss: p.loss(),
            validation_par10: *v,
        })
        .collect();
    let k = crate::argmin_by(&trace, |e| e.validation_par10);
    let degenerate = trace.iter().all(|e| e.validation_par10 == trace[0].validation_par10);
    if degenerate {
        info!("all {} tuning candidates scored the same; keeping the first", trace.len());
    }
    Ok(TuneResult {
        best: trace[k].loss,
        best_par10: trace[k].validation_par10,
        trace,
        degenerate,
        inner_train,
        inner_validation,
    })
}

/// Trace as CSV: evaluation index, family, parameters, validation PAR10.
pub fn write_trace_csv<W: Write>(result: &TuneResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let e = |err: csv::Error| Error::InvalidArgument(format!("writing trace: {err}"));
    w.write_record(["index", "family", "alpha", "beta", "loss", "validation_par10"]).map_err(e)?;
    for (k, t) in result.trace.iter().enumerate() {
        let (family, alpha, beta) = match t.loss {
            LossSpec::Polynomial { alpha } => ("polynomial", alpha.to_string(), String::new()),
            LossSpec::CappedLog { alpha, beta } => ("capped_log", alpha.to_string(), beta.to_string()),
            _ => ("other", String::new(), String::new()),
        };
        w.write_record([
            k.to_string(),
            family.to_string(),
            alpha,
            beta,
            t.loss.to_string(),
            t.validation_par10.to_string(),
        ])
        .map_err(e)?;
    }
    w.flush().map_err(|err| Error::InvalidArgument(format!("writing trace: {err}")))
}
