//! Scenarios: the instances × algorithms runtime matrix with censor flags,
//! instance features, feature costs and the cutoff.

mod arff;
mod aslib;
mod csvfmt;
mod synth;

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::rng_from;

pub use arff::{parse_arff, Arff, ArffValue, AttrKind, Attribute};
pub use aslib::load_aslib;
pub use csvfmt::{load_csv, write_csv};
pub use synth::{generate_synthetic, FeatureModel, RuntimeDistribution, SyntheticAlgorithm, SyntheticScenario, SyntheticSpec};

/// Observed runtimes below this fraction of the cutoff are floored to it so
/// that every observation lies in (0, C].
const MIN_RUNTIME_FRACTION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub algorithms: Vec<String>,
    pub instances: Vec<String>,
    pub feature_names: Vec<String>,
    /// Row per instance; `NaN` marks a missing value.
    pub features: Vec<Vec<f64>>,
    /// Seconds spent computing the features of each instance.
    pub feature_costs: Vec<f64>,
    /// `runtimes[i][a]` in seconds, always in (0, cutoff].
    pub runtimes: Vec<Vec<f64>>,
    pub censored: Vec<Vec<bool>>,
    pub cutoff: f64,
    /// Fold index in `1..=k` per instance, when the scenario ships one.
    pub folds: Option<Vec<usize>>,
}

/// Applies the censoring rule to a raw run: anything that did not finish with
/// status "ok" strictly below the cutoff becomes `(cutoff, true)`.
pub fn censor_run(runtime: Option<f64>, ok: bool, cutoff: f64) -> (f64, bool) {
    match runtime {
        Some(t) if ok && t.is_finite() && t < cutoff => (t.max(cutoff * MIN_RUNTIME_FRACTION), false),
        _ => (cutoff, true),
    }
}

impl Scenario {
    pub fn n_instances(&self) -> usize {
        self.instances.len()
    }

    pub fn n_algorithms(&self) -> usize {
        self.algorithms.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// PAR10 score of a single recorded run.
    pub fn par10(&self, instance: usize, algorithm: usize) -> f64 {
        if self.censored[instance][algorithm] {
            10.0 * self.cutoff
        } else {
            self.runtimes[instance][algorithm]
        }
    }

    /// Instances on which every algorithm timed out.
    pub fn is_unsolvable(&self, instance: usize) -> bool {
        self.censored[instance].iter().all(|&c| c)
    }

    pub fn algorithm_index(&self, name: &str) -> Option<usize> {
        self.algorithms.iter().position(|a| a == name)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.instances.len();
        if n == 0 {
            return Err(Error::Consistency("scenario has no instances".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Consistency("scenario has no algorithms".into()));
        }
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(Error::Consistency(format!("cutoff must be positive, got {}", self.cutoff)));
        }
        if self.features.len() != n || self.feature_costs.len() != n || self.runtimes.len() != n || self.censored.len() != n {
            return Err(Error::Consistency("per-instance tables differ in length".into()));
        }
        let d = self.feature_names.len();
        let m = self.algorithms.len();
        for (i, name) in self.instances.iter().enumerate() {
            if self.features[i].len() != d {
                return Err(Error::Consistency(format!(
                    "instance {name} has {} features, expected {d}",
                    self.features[i].len()
                )));
            }
            if !(self.feature_costs[i] >= 0.0) {
                return Err(Error::Consistency(format!("instance {name} has a negative feature cost")));
            }
            if self.runtimes[i].len() != m || self.censored[i].len() != m {
                return Err(Error::Consistency(format!("instance {name} lacks runs for some algorithms")));
            }
            for a in 0..m {
                let y = self.runtimes[i][a];
                if !(y > 0.0 && y <= self.cutoff) {
                    return Err(Error::Consistency(format!(
                        "runtime {y} of {} on {name} outside (0, C]",
                        self.algorithms[a]
                    )));
                }
                if self.censored[i][a] != (y == self.cutoff) {
                    return Err(Error::Consistency(format!(
                        "censor flag of {} on {name} disagrees with y = C",
                        self.algorithms[a]
                    )));
                }
            }
        }
        if let Some(folds) = &self.folds {
            if folds.len() != n || folds.contains(&0) {
                return Err(Error::Consistency("fold assignment must give every instance a fold ≥ 1".into()));
            }
        }
        Ok(())
    }

    /// Restricts the scenario to the given instance indices (in that order).
    pub fn subset(&self, instances: &[usize]) -> Scenario {
        Scenario {
            name: self.name.clone(),
            algorithms: self.algorithms.clone(),
            instances: instances.iter().map(|&i| self.instances[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            features: instances.iter().map(|&i| self.features[i].clone()).collect(),
            feature_costs: instances.iter().map(|&i| self.feature_costs[i]).collect(),
            runtimes: instances.iter().map(|&i| self.runtimes[i].clone()).collect(),
            censored: instances.iter().map(|&i| self.censored[i].clone()).collect(),
            cutoff: self.cutoff,
            folds: self.folds.as_ref().map(|f| instances.iter().map(|&i| f[i]).collect()),
        }
    }
}

/// Borrowed view of a scenario restricted to a subset of its instances, e.g.
/// the training folds of one cross-validation split.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub scenario: &'a Scenario,
    pub instances: &'a [usize],
}

impl<'a> View<'a> {
    pub fn new(scenario: &'a Scenario, instances: &'a [usize]) -> Self {
        View { scenario, instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn cutoff(&self) -> f64 {
        self.scenario.cutoff
    }

    pub fn n_algorithms(&self) -> usize {
        self.scenario.n_algorithms()
    }

    pub fn raw_features(&self) -> Vec<&'a [f64]> {
        self.instances.iter().map(|&i| self.scenario.features[i].as_slice()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub name: String,
    pub n_instances: usize,
    pub n_unsolvable: usize,
    pub n_algorithms: usize,
    pub n_features: usize,
    pub cutoff: f64,
    pub pct_censored: f64,
}

pub fn compute_stats(s: &Scenario) -> ScenarioStats {
    let n_unsolvable = (0..s.n_instances()).filter(|&i| s.is_unsolvable(i)).count();
    let censored: usize = s.censored.iter().map(|row| row.iter().filter(|&&c| c).count()).sum();
    let cells = s.n_instances() * s.n_algorithms();
    ScenarioStats {
        name: s.name.clone(),
        n_instances: s.n_instances(),
        n_unsolvable,
        n_algorithms: s.n_algorithms(),
        n_features: s.n_features(),
        cutoff: s.cutoff,
        pct_censored: if cells == 0 { 0.0 } else { 100.0 * censored as f64 / cells as f64 },
    }
}

/// Fold index (1-based) per instance. A fold assignment shipped with the
/// scenario is returned as is; otherwise instances are shuffled with `seed`
/// and cut into `k` contiguous, near-equal parts.
pub fn make_folds(s: &Scenario, k: usize, seed: u64) -> Result<Vec<usize>> {
    if let Some(folds) = &s.folds {
        return Ok(folds.clone());
    }
    let n = s.n_instances();
    if k < 2 {
        return invalid(format!("need at least 2 folds, got {k}"));
    }
    if k > n {
        return invalid(format!("{k} folds requested for {n} instances"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos * k / n + 1;
    }
    Ok(folds)
}

/// Number of distinct folds in an assignment.
pub fn fold_count(folds: &[usize]) -> usize {
    folds.iter().copied().max().unwrap_or(0)
}

/// Loads a scenario directory: the ASlib layout when `description.txt` is
/// present, otherwise the CSV trio.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    if !path.is_dir() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "scenario directory not found"),
        ));
    }
    let scenario = if path.join("description.txt").exists() {
        load_aslib(path)?
    } else if path.join("runs.csv").exists() {
        load_csv(path)?
    } else {
        return Err(Error::format(
            path.join("description.txt").display().to_string(),
            "missing required file (neither description.txt nor runs.csv found)",
        ));
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Small hand-built scenario used across unit tests.
    pub fn tiny(runtimes: Vec<Vec<f64>>, cutoff: f64) -> Scenario {
        let n = runtimes.len();
        let m = runtimes[0].len();
        let censored = runtimes.iter().map(|r| r.iter().map(|&y| y >= cutoff).collect()).collect();
        let runtimes = runtimes.into_iter().map(|r| r.into_iter().map(|y| y.min(cutoff)).collect()).collect();
        Scenario {
            name: "tiny".into(),
            algorithms: (0..m).map(|a| format!("a{a}")).collect(),
            instances: (0..n).map(|i| format!("i{i}")).collect(),
            feature_names: vec!["f0".into()],
            features: (0..n).map(|i| vec![i as f64]).collect(),
            feature_costs: vec![0.0; n],
            runtimes,
            censored,
            cutoff,
            folds: None,
        }
    }

    #[test]
    fn censor_rule() {
        assert_eq!(censor_run(Some(12.5), true, 100.0), (12.5, false));
        assert_eq!(censor_run(Some(12.5), false, 100.0), (100.0, true));
        assert_eq!(censor_run(Some(150.0), true, 100.0), (100.0, true));
        assert_eq!(censor_run(Some(100.0), true, 100.0), (100.0, true));
        assert_eq!(censor_run(None, true, 100.0), (100.0, true));
        let (y, c) = censor_run(Some(0.0), true, 100.0);
        assert!(y > 0.0 && !c);
    }

    #[test]
    fn stats_single_unsolvable() {
        let s = tiny(vec![vec![5.0, 5.0]], 5.0);
        let st = compute_stats(&s);
        assert_eq!(st.n_unsolvable, 1);
        assert_eq!(st.pct_censored, 100.0);
    }

    #[test]
    fn stats_no_censoring() {
        let s = tiny(vec![vec![1.0, 2.0], vec![3.0, 4.0]], 10.0);
        let st = compute_stats(&s);
        assert_eq!(st.pct_censored, 0.0);
        assert_eq!(st.n_unsolvable, 0);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn folds_equal_sizes_and_deterministic() {
        let s = tiny((0..100).map(|i| vec![1.0 + i as f64]).collect(), 1000.0);
        let f = make_folds(&s, 10, 3).unwrap();
        for k in 1..=10 {
            assert_eq!(f.iter().filter(|&&x| x == k).count(), 10);
        }
        assert_eq!(f, make_folds(&s, 10, 3).unwrap());
        assert_ne!(f, make_folds(&s, 10, 4).unwrap());
    }

    #[test]
    fn folds_passthrough_and_errors() {
        let mut s = tiny((0..4).map(|i| vec![1.0 + i as f64]).collect(), 1000.0);
        assert!(make_folds(&s, 5, 0).is_err());
        assert!(make_folds(&s, 1, 0).is_err());
        s.folds = Some(vec![2, 1, 2, 1]);
        assert_eq!(make_folds(&s, 10, 0).unwrap(), vec![2, 1, 2, 1]);
    }

    #[test]
    fn validate_catches_flag_mismatch() {
        let mut s = tiny(vec![vec![1.0, 2.0]], 10.0);
        s.censored[0][1] = true;
        assert!(matches!(s.validate(), Err(Error::Consistency(_))));
    }
}
