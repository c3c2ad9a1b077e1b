//! Loader for the ASlib directory layout.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use log::warn;

use super::arff::{parse_arff, Arff, ArffValue};
use super::{censor_run, Scenario};
use crate::error::{Error, Result};

/// One run as read from disk, before the censoring rule is applied.
#[derive(Debug, Clone)]
pub(super) struct RawRun {
    pub runtime: Option<f64>,
    pub ok: bool,
    pub repetition: u32,
}

/// Accumulates the pieces of a scenario from whichever files provide them and
/// checks them against each other.
#[derive(Debug, Default)]
pub(super) struct RawScenario {
    pub name: String,
    pub cutoff: f64,
    pub feature_names: Vec<String>,
    pub instances: Vec<String>,
    pub features: HashMap<String, Vec<f64>>,
    pub costs: HashMap<String, f64>,
    pub algorithms: Vec<String>,
    pub runs: HashMap<(String, String), RawRun>,
    pub folds: HashMap<String, usize>,
    pub runs_file: String,
}

impl RawScenario {
    pub fn add_instance(&mut self, id: String, features: Vec<f64>) {
        if !self.features.contains_key(&id) {
            self.instances.push(id.clone());
            self.features.insert(id, features);
        }
    }

    /// Keeps the lowest repetition seen for each (instance, algorithm).
    pub fn add_run(&mut self, instance: String, algorithm: String, run: RawRun) {
        if !self.algorithms.contains(&algorithm) {
            self.algorithms.push(algorithm.clone());
        }
        let key = (instance, algorithm);
        match self.runs.get(&key) {
            Some(prev) if prev.repetition <= run.repetition => {}
            _ => {
                self.runs.insert(key, run);
            }
        }
    }

    pub fn build(self) -> Result<Scenario> {
        if self.runs.is_empty() {
            return Err(Error::format(self.runs_file, "no algorithm runs"));
        }
        let known: HashSet<&String> = self.instances.iter().collect();
        let in_runs: HashSet<&String> = self.runs.keys().map(|(i, _)| i).collect();
        let mut missing_features: Vec<&String> = in_runs.difference(&known).copied().collect();
        let mut missing_runs: Vec<&String> = known.difference(&in_runs).copied().collect();
        if !missing_features.is_empty() || !missing_runs.is_empty() {
            missing_features.sort();
            missing_runs.sort();
            return Err(Error::Consistency(format!(
                "instances with runs but no features: {}; instances with features but no runs: {}",
                list_some(&missing_features),
                list_some(&missing_runs)
            )));
        }

        let cutoff = self.cutoff;
        let mut runtimes = Vec::with_capacity(self.instances.len());
        let mut censored = Vec::with_capacity(self.instances.len());
        let mut n_missing = 0usize;
        for inst in &self.instances {
            let mut row_y = Vec::with_capacity(self.algorithms.len());
            let mut row_c = Vec::with_capacity(self.algorithms.len());
            for alg in &self.algorithms {
                let (y, c) = match self.runs.get(&(inst.clone(), alg.clone())) {
                    Some(run) => censor_run(run.runtime, run.ok, cutoff),
                    None => {
                        n_missing += 1;
                        (cutoff, true)
                    }
                };
                row_y.push(y);
                row_c.push(c);
            }
            runtimes.push(row_y);
            censored.push(row_c);
        }
        if n_missing > 0 {
            warn!("{}: {n_missing} (instance, algorithm) runs missing; recorded as censored at C", self.name);
        }

        let folds = if self.folds.is_empty() {
            None
        } else {
            let mut f = Vec::with_capacity(self.instances.len());
            for inst in &self.instances {
                match self.folds.get(inst) {
                    Some(&k) => f.push(k),
                    None => return Err(Error::Consistency(format!("instance {inst} has no fold assignment"))),
                }
            }
            if f.contains(&0) {
                f.iter_mut().for_each(|k| *k += 1);
            }
            Some(f)
        };

        let features = self.instances.iter().map(|i| self.features[i].clone()).collect();
        let feature_costs = self.instances.iter().map(|i| self.costs.get(i).copied().unwrap_or(0.0)).collect();
        Ok(Scenario {
            name: self.name,
            algorithms: self.algorithms,
            instances: self.instances,
            feature_names: self.feature_names,
            features,
            feature_costs,
            runtimes,
            censored,
            cutoff,
            folds,
        })
    }
}

fn list_some(items: &[&String]) -> String {
    if items.is_empty() {
        return "none".into();
    }
    let shown: Vec<&str> = items.iter().take(10).map(|s| s.as_str()).collect();
    if items.len() > 10 {
        format!("{} (+{} more)", shown.join(", "), items.len() - 10)
    } else {
        shown.join(", ")
    }
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::format(path.display().to_string(), "missing required file"));
    }
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

fn read_arff(dir: &Path, name: &str) -> Result<Arff> {
    let text = read(dir, name)?;
    parse_arff(&text, &dir.join(name).display().to_string())
}

fn require_column(arff: &Arff, name: &str, file: &str) -> Result<usize> {
    arff.column(name)
        .ok_or_else(|| Error::format(file, format!("missing column `{name}`")))
}

fn text_at(row: &[ArffValue], col: usize, file: &str) -> Result<String> {
    row[col]
        .as_text()
        .ok_or_else(|| Error::format(file, format!("missing value in column {col}")))
}

fn repetition_at(row: &[ArffValue], col: Option<usize>) -> u32 {
    col.and_then(|c| row[c].as_f64()).map(|r| r as u32).unwrap_or(1)
}

/// Parses the `key: value` lines of `description.txt`. Nested YAML lists are
/// skipped.
pub(super) fn parse_description(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter(|l| !l.starts_with(char::is_whitespace) && !l.trim_start().starts_with('-'))
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().trim_matches(|c| c == '"' || c == '\'').to_string()))
        .collect()
}

pub fn load_aslib(dir: impl AsRef<Path>) -> Result<Scenario> {
    let dir = dir.as_ref();
    let desc_file = dir.join("description.txt").display().to_string();
    let desc = parse_description(&read(dir, "description.txt")?);
    let cutoff: f64 = desc
        .get("algorithm_cutoff_time")
        .ok_or_else(|| Error::format(&desc_file, "missing algorithm_cutoff_time"))?
        .parse()
        .map_err(|_| Error::format(&desc_file, "algorithm_cutoff_time is not a number"))?;
    let name = desc.get("scenario_id").cloned().unwrap_or_else(|| {
        dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    });

    let mut raw = RawScenario {
        name,
        cutoff,
        ..Default::default()
    };

    let feat_file = dir.join("feature_values.arff").display().to_string();
    let feats = read_arff(dir, "feature_values.arff")?;
    let id_col = require_column(&feats, "instance_id", &feat_file)?;
    let rep_col = feats.column("repetition");
    let value_cols: Vec<usize> = (0..feats.attributes.len()).filter(|&c| c != id_col && Some(c) != rep_col).collect();
    raw.feature_names = value_cols.iter().map(|&c| feats.attributes[c].name.clone()).collect();
    let mut feat_rep: HashMap<String, u32> = HashMap::new();
    for row in &feats.rows {
        let id = text_at(row, id_col, &feat_file)?;
        let rep = repetition_at(row, rep_col);
        let values: Vec<f64> = value_cols.iter().map(|&c| row[c].as_f64().unwrap_or(f64::NAN)).collect();
        match feat_rep.get(&id) {
            Some(&r) if r <= rep => continue,
            Some(_) => {
                raw.features.insert(id.clone(), values);
            }
            None => raw.add_instance(id.clone(), values),
        }
        feat_rep.insert(id, rep);
    }

    let runs_file = dir.join("algorithm_runs.arff").display().to_string();
    raw.runs_file = runs_file.clone();
    let runs = read_arff(dir, "algorithm_runs.arff")?;
    let inst_col = require_column(&runs, "instance_id", &runs_file)?;
    let alg_col = require_column(&runs, "algorithm", &runs_file)?;
    let status_col = require_column(&runs, "runstatus", &runs_file)?;
    let rep_col = runs.column("repetition");
    let perf_col = (0..runs.attributes.len())
        .find(|&c| c != inst_col && c != alg_col && c != status_col && Some(c) != rep_col)
        .ok_or_else(|| Error::format(&runs_file, "no performance column"))?;
    for row in &runs.rows {
        let status = text_at(row, status_col, &runs_file)?;
        raw.add_run(
            text_at(row, inst_col, &runs_file)?,
            text_at(row, alg_col, &runs_file)?,
            RawRun {
                runtime: row[perf_col].as_f64(),
                ok: status.eq_ignore_ascii_case("ok"),
                repetition: repetition_at(row, rep_col),
            },
        );
    }

    if dir.join("feature_costs.arff").exists() {
        let cost_file = dir.join("feature_costs.arff").display().to_string();
        let costs = read_arff(dir, "feature_costs.arff")?;
        let id_col = require_column(&costs, "instance_id", &cost_file)?;
        let rep_col = costs.column("repetition");
        let mut seen: HashSet<String> = HashSet::new();
        for row in &costs.rows {
            let id = text_at(row, id_col, &cost_file)?;
            if !seen.insert(id.clone()) {
                continue;
            }
            let total: f64 = (0..costs.attributes.len())
                .filter(|&c| c != id_col && Some(c) != rep_col)
                .filter_map(|c| row[c].as_f64())
                .sum();
            raw.costs.insert(id, total);
        }
    }

    if dir.join("cv.arff").exists() {
        let cv_file = dir.join("cv.arff").display().to_string();
        let cv = read_arff(dir, "cv.arff")?;
        let id_col = require_column(&cv, "instance_id", &cv_file)?;
        let fold_col = require_column(&cv, "fold", &cv_file)?;
        for row in &cv.rows {
            let id = text_at(row, id_col, &cv_file)?;
            let fold = row[fold_col]
                .as_f64()
                .ok_or_else(|| Error::format(&cv_file, "missing fold value"))?;
            raw.folds.entry(id).or_insert(fold as usize);
        }
    }

    raw.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn fixture(dir: &Path) {
        write(dir, "description.txt", "scenario_id: TOY\nperformance_type:\n  - runtime\nalgorithm_cutoff_time: 100\n");
        write(
            dir,
            "feature_values.arff",
            "@relation f\n@attribute instance_id string\n@attribute repetition numeric\n@attribute f1 numeric\n@attribute f2 numeric\n@data\ni1,1,0.5,?\ni2,1,1.5,2\ni3,1,3,4\n",
        );
        write(
            dir,
            "algorithm_runs.arff",
            "@relation r\n@attribute instance_id string\n@attribute repetition numeric\n@attribute algorithm string\n@attribute runtime numeric\n@attribute runstatus {ok,timeout,memout,crash}\n@data\n\
             i1,1,A,12.5,ok\ni1,1,B,100,timeout\ni2,1,A,3,memout\ni2,1,B,150,ok\ni3,1,A,1,ok\ni3,2,A,50,ok\ni3,1,B,2,ok\n",
        );
        write(
            dir,
            "feature_costs.arff",
            "@relation c\n@attribute instance_id string\n@attribute repetition numeric\n@attribute g1 numeric\n@attribute g2 numeric\n@data\ni1,1,1,2\ni2,1,?,0.5\n",
        );
        write(dir, "cv.arff", "@relation cv\n@attribute instance_id string\n@attribute repetition numeric\n@attribute fold numeric\n@data\ni1,1,1\ni2,1,2\ni3,1,1\n");
    }

    #[test]
    fn loads_toy_scenario() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        let s = load_aslib(tmp.path()).unwrap();
        s.validate().unwrap();
        assert_eq!(s.name, "TOY");
        assert_eq!(s.cutoff, 100.0);
        assert_eq!(s.algorithms, vec!["A", "B"]);
        assert_eq!(s.instances, vec!["i1", "i2", "i3"]);
        assert!(s.features[0][1].is_nan());
        assert_eq!((s.runtimes[0][0], s.censored[0][0]), (12.5, false));
        assert_eq!((s.runtimes[0][1], s.censored[0][1]), (100.0, true));
        // memout censored, ok above C clamped and censored
        assert!(s.censored[1][0] && s.censored[1][1]);
        // first repetition kept
        assert_eq!(s.runtimes[2][0], 1.0);
        assert_eq!(s.feature_costs, vec![3.0, 0.5, 0.0]);
        assert_eq!(s.folds, Some(vec![1, 2, 1]));
        let again = load_aslib(tmp.path()).unwrap();
        assert_eq!((&again.runtimes, &again.censored), (&s.runtimes, &s.censored));
        assert_eq!(format!("{:?}", again.features), format!("{:?}", s.features));
    }

    #[test]
    fn missing_file_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        fs::remove_file(tmp.path().join("feature_values.arff")).unwrap();
        let err = load_aslib(tmp.path()).unwrap_err().to_string();
        assert!(err.contains("feature_values.arff"), "{err}");
    }

    #[test]
    fn empty_runs_is_format_error() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        write(
            tmp.path(),
            "algorithm_runs.arff",
            "@relation r\n@attribute instance_id string\n@attribute algorithm string\n@attribute runtime numeric\n@attribute runstatus string\n@data\n",
        );
        assert!(matches!(load_aslib(tmp.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn inconsistent_instances_listed() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        write(
            tmp.path(),
            "algorithm_runs.arff",
            "@relation r\n@attribute instance_id string\n@attribute algorithm string\n@attribute runtime numeric\n@attribute runstatus string\n@data\ni1,A,1,ok\nghost,A,1,ok\n",
        );
        match load_aslib(tmp.path()) {
            Err(Error::Consistency(msg)) => assert!(msg.contains("ghost") && msg.contains("i2")),
            other => panic!("expected consistency error, got {other:?}"),
        }
    }
}
