//! Cross-validated PAR10 evaluation and report emission.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::rng::derive_seed;
use crate::scenario::{fold_count, make_folds, Scenario, View};
use crate::selectors::{fit_selector, vbs_choice, SbsSelector, SelectorConfig, SelectorKind};

/// Outcome of running algorithm `a` on instance `i` as charged by the harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Charge {
    /// Feature cost (when features were needed) plus the recorded runtime.
    pub charged: f64,
    pub timed_out: bool,
    pub par10: f64,
}

/// Charges a selection. The run times out when it was censored or when the
/// feature cost pushes the total past the cutoff.
pub fn charge(s: &Scenario, instance: usize, algorithm: usize, uses_features: bool) -> Charge {
    let cost = if uses_features { s.feature_costs[instance] } else { 0.0 };
    let charged = cost + s.runtimes[instance][algorithm];
    let timed_out = s.censored[instance][algorithm] || charged > s.cutoff;
    Charge {
        charged,
        timed_out,
        par10: if timed_out { 10.0 * s.cutoff } else { charged },
    }
}

/// `(model − vbs) / (sbs − vbs)`. When the SBS already matches the VBS the
/// score is 0 for a model that matches too and `+∞` otherwise.
pub fn normalized_par10(model: f64, vbs: f64, sbs: f64) -> f64 {
    if sbs > vbs {
        (model - vbs) / (sbs - vbs)
    } else if model <= vbs {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub fold: usize,
    pub instance: String,
    pub selected: String,
    pub charged: f64,
    pub timed_out: bool,
    pub par10: f64,
    pub vbs_par10: f64,
    pub sbs_par10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_test: usize,
    pub par10: f64,
    pub vbs_par10: f64,
    pub sbs_par10: f64,
    pub npar10: f64,
    pub timeouts: usize,
    pub solved: usize,
    /// Set when the selector could not be fitted on this fold.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scenario: String,
    pub selector: String,
    pub seed: u64,
    pub folds: Vec<FoldReport>,
    pub records: Vec<InstanceRecord>,
    /// Test instances dropped because no algorithm solves them.
    pub n_unsolvable_removed: usize,
    pub par10: f64,
    pub vbs_par10: f64,
    pub sbs_par10: f64,
    pub npar10: f64,
    pub timeouts: usize,
    pub solved: usize,
}

impl EvaluationReport {
    pub fn failed_folds(&self) -> Vec<usize> {
        self.folds.iter().filter(|f| f.error.is_some()).map(|f| f.fold).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.folds.iter().all(|f| f.error.is_none())
    }

    /// Unweighted mean of the per-fold PAR10 values.
    pub fn fold_mean_par10(&self) -> f64 {
        let ok: Vec<f64> = self.folds.iter().filter(|f| f.error.is_none()).map(|f| f.par10).collect();
        ok.iter().sum::<f64>() / ok.len() as f64
    }

    /// `true` when the SBS matches the VBS so nPAR10 is not informative.
    pub fn sbs_optimal(&self) -> bool {
        self.sbs_par10 <= self.vbs_par10
    }
}

struct Pooled {
    par10: f64,
    vbs: f64,
    sbs: f64,
    timeouts: usize,
}

fn pool(records: &[InstanceRecord]) -> Pooled {
    let n = records.len() as f64;
    let mean = |f: fn(&InstanceRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    Pooled {
        par10: mean(|r| r.par10),
        vbs: mean(|r| r.vbs_par10),
        sbs: mean(|r| r.sbs_par10),
        timeouts: records.iter().filter(|r| r.timed_out).count(),
    }
}

fn evaluate_fold(
    config: &SelectorConfig,
    s: &Scenario,
    folds: &[usize],
    fold: usize,
    seed: u64,
) -> std::result::Result<Vec<InstanceRecord>, String> {
    let train: Vec<usize> = (0..s.n_instances()).filter(|&i| folds[i] != fold).collect();
    let test: Vec<usize> = (0..s.n_instances()).filter(|&i| folds[i] == fold && !s.is_unsolvable(i)).collect();
    if train.is_empty() {
        return Err("fold leaves no training instances".into());
    }
    let view = View::new(s, &train);
    let sbs = SbsSelector::fit(view).choice();
    let fitted = match config.kind {
        SelectorKind::Oracle => None,
        _ => Some(fit_selector(config, view, derive_seed(seed, fold as u64)).map_err(|e| e.to_string())?),
    };
    test.iter()
        .map(|&i| {
            let (a, uses_features) = match &fitted {
                None => (vbs_choice(s, i), false),
                Some(sel) => (sel.select(&s.features[i]).map_err(|e| e.to_string())?, sel.uses_features()),
            };
            let c = charge(s, i, a, uses_features);
            Ok(InstanceRecord {
                fold,
                instance: s.instances[i].clone(),
                selected: s.algorithms[a].clone(),
                charged: c.charged,
                timed_out: c.timed_out,
                par10: c.par10,
                vbs_par10: charge(s, i, vbs_choice(s, i), false).par10,
                sbs_par10: charge(s, i, sbs, false).par10,
            })
        })
        .collect()
}

/// k-fold cross-validation of one selector on one scenario. Folds come from
/// the scenario when it defines them and are drawn from `seed` otherwise.
/// A fold whose selector fails is reported with its error and left out of
/// the pooled scores.
pub fn evaluate_selector(config: &SelectorConfig, s: &Scenario, k_folds: usize, seed: u64) -> Result<EvaluationReport> {
    let folds = make_folds(s, k_folds, seed)?;
    let k = fold_count(&folds);
    let per_fold = exec::map_range(k, |f| evaluate_fold(config, s, &folds, f + 1, seed));

    let mut records = Vec::new();
    let mut reports = Vec::with_capacity(k);
    for (f, outcome) in per_fold.into_iter().enumerate() {
        let fold = f + 1;
        match outcome {
            Ok(recs) => {
                let p = pool(&recs);
                reports.push(FoldReport {
                    fold,
                    n_test: recs.len(),
                    par10: p.par10,
                    vbs_par10: p.vbs,
                    sbs_par10: p.sbs,
                    npar10: normalized_par10(p.par10, p.vbs, p.sbs),
                    timeouts: p.timeouts,
                    solved: recs.len() - p.timeouts,
                    error: None,
                });
                records.extend(recs);
            }
            Err(e) => {
                log::error!("{} on {}: fold {fold} failed: {e}", config.label(), s.name);
                reports.push(FoldReport {
                    fold,
                    n_test: 0,
                    par10: f64::NAN,
                    vbs_par10: f64::NAN,
                    sbs_par10: f64::NAN,
                    npar10: f64::NAN,
                    timeouts: 0,
                    solved: 0,
                    error: Some(e),
                });
            }
        }
    }
    let p = pool(&records);
    let n_unsolvable_removed = (0..s.n_instances()).filter(|&i| s.is_unsolvable(i)).count();
    Ok(EvaluationReport {
        scenario: s.name.clone(),
        selector: config.label(),
        seed,
        folds: reports,
        n_unsolvable_removed,
        par10: p.par10,
        vbs_par10: p.vbs,
        sbs_par10: p.sbs,
        npar10: normalized_par10(p.par10, p.vbs, p.sbs),
        timeouts: p.timeouts,
        solved: records.len() - p.timeouts,
        records,
    })
}

/// Evaluates every (scenario, selector) cell; cells run in parallel and
/// come back in scenario-major order.
pub fn evaluate_grid(
    configs: &[SelectorConfig],
    scenarios: &[Scenario],
    k_folds: usize,
    seed: u64,
) -> Vec<Result<EvaluationReport>> {
    let cells: Vec<(usize, usize)> = (0..scenarios.len()).flat_map(|s| (0..configs.len()).map(move |c| (s, c))).collect();
    exec::map_slice(&cells, |&(s, c)| evaluate_selector(&configs[c], &scenarios[s], k_folds, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub selector: String,
    pub n_scenarios: usize,
    pub median_npar10: f64,
    pub mean_npar10: f64,
    pub mean_rank: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// 1-based ranks, tied values sharing the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Median and mean nPAR10 and mean within-scenario rank per selector,
/// sorted by mean rank. Every selector must appear on every scenario.
pub fn aggregate(reports: &[EvaluationReport]) -> Result<Vec<SummaryRow>> {
    let mut cells: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut selectors: Vec<&str> = Vec::new();
    let mut scenarios: BTreeSet<&str> = BTreeSet::new();
    for r in reports {
        if cells.insert((r.scenario.as_str(), r.selector.as_str()), r.npar10).is_some() {
            return Err(Error::Aggregation(format!("duplicate cell ({}, {})", r.scenario, r.selector)));
        }
        if !selectors.contains(&r.selector.as_str()) {
            selectors.push(&r.selector);
        }
        scenarios.insert(&r.scenario);
    }
    let gaps: Vec<String> = scenarios
        .iter()
        .flat_map(|sc| selectors.iter().map(move |se| (*sc, *se)))
        .filter(|k| !cells.contains_key(k))
        .map(|(sc, se)| format!("({sc}, {se})"))
        .collect();
    if !gaps.is_empty() {
        return Err(Error::Aggregation(format!("missing cells: {}", gaps.join(", "))));
    }

    let mut rank_sum = vec![0.0; selectors.len()];
    for sc in &scenarios {
        let vals: Vec<f64> = selectors.iter().map(|se| cells[&(*sc, *se)]).collect();
        for (acc, r) in rank_sum.iter_mut().zip(average_ranks(&vals)) {
            *acc += r;
        }
    }
    let n = scenarios.len();
    let mut rows: Vec<SummaryRow> = selectors
        .iter()
        .enumerate()
        .map(|(k, se)| {
            let mut vals: Vec<f64> = scenarios.iter().map(|sc| cells[&(*sc, *se)]).collect();
            SummaryRow {
                selector: se.to_string(),
                n_scenarios: n,
                mean_npar10: vals.iter().sum::<f64>() / n as f64,
                median_npar10: median(&mut vals),
                mean_rank: rank_sum[k] / n as f64,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank).then_with(|| a.selector.cmp(&b.selector)));
    Ok(rows)
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// One row per (scenario, selector).
pub fn write_cells_csv(reports: &[EvaluationReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let e = |err| csv_err(path, err);
    w.write_record([
        "scenario",
        "selector",
        "n_test",
        "par10",
        "vbs_par10",
        "sbs_par10",
        "npar10",
        "fold_mean_par10",
        "timeouts",
        "solved",
        "unsolvable_removed",
        "failed_folds",
    ])
    .map_err(e)?;
    for r in reports {
        let failed: Vec<String> = r.failed_folds().iter().map(usize::to_string).collect();
        w.write_record([
            r.scenario.clone(),
            r.selector.clone(),
            r.records.len().to_string(),
            r.par10.to_string(),
            r.vbs_par10.to_string(),
            r.sbs_par10.to_string(),
            r.npar10.to_string(),
            r.fold_mean_par10().to_string(),
            r.timeouts.to_string(),
            r.solved.to_string(),
            r.n_unsolvable_removed.to_string(),
            failed.join(";"),
        ])
        .map_err(e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

/// Long format: one row per (scenario, selector, test instance).
pub fn write_instances_csv(reports: &[EvaluationReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let e = |err| csv_err(path, err);
    w.write_record(["scenario", "selector", "fold", "instance", "selected", "charged", "timed_out", "par10"])
        .map_err(e)?;
    for r in reports {
        for rec in &r.records {
            w.write_record([
                r.scenario.clone(),
                r.selector.clone(),
                rec.fold.to_string(),
                rec.instance.clone(),
                rec.selected.clone(),
                rec.charged.to_string(),
                rec.timed_out.to_string(),
                rec.par10.to_string(),
            ])
            .map_err(e)?;
        }
    }
    w.flush().map_err(|err| Error::io(path, err))
}

/// Per-fold breakdown of every cell.
pub fn write_folds_csv(reports: &[EvaluationReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let e = |err| csv_err(path, err);
    w.write_record(["scenario", "selector", "fold", "n_test", "par10", "vbs_par10", "sbs_par10", "npar10", "timeouts", "error"])
        .map_err(e)?;
    for r in reports {
        for f in &r.folds {
            w.write_record([
                r.scenario.clone(),
                r.selector.clone(),
                f.fold.to_string(),
                f.n_test.to_string(),
                f.par10.to_string(),
                f.vbs_par10.to_string(),
                f.sbs_par10.to_string(),
                f.npar10.to_string(),
                f.timeouts.to_string(),
                f.error.clone().unwrap_or_default(),
            ])
            .map_err(e)?;
        }
    }
    w.flush().map_err(|err| Error::io(path, err))
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let e = |err| csv_err(path, err);
    w.write_record(["selector", "n_scenarios", "median_npar10", "mean_npar10", "mean_rank"]).map_err(e)?;
    for r in rows {
        w.write_record([
            r.selector.clone(),
            r.n_scenarios.to_string(),
            r.median_npar10.to_string(),
            r.mean_npar10.to_string(),
            r.mean_rank.to_string(),
        ])
        .map_err(e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

/// The aggregate table as JSON. Non-finite numbers are written as strings
/// (`"inf"`) since JSON has no literal for them.
pub fn write_summary_json(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let num = |v: f64| {
        if v.is_finite() {
            serde_json::json!(v)
        } else {
            serde_json::json!(v.to_string())
        }
    };
    let table: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "selector": r.selector,
                "n_scenarios": r.n_scenarios,
                "median_npar10": num(r.median_npar10),
                "mean_npar10": num(r.mean_npar10),
                "mean_rank": num(r.mean_rank),
            })
        })
        .collect();
    let mut f = create(path)?;
    let text = serde_json::to_string_pretty(&serde_json::json!({ "summary": table }))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
