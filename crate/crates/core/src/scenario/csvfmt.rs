//! CSV trio used for synthetic scenarios.
//!
//! * `meta.csv`: `key,value` rows; `scenario_id` and `cutoff` are read.
//! * `runs.csv`: `instance_id,algorithm,runtime,status` with status `ok` or
//!   anything else for a failed run.
//! * `features.csv`: `instance_id`, optional `fold` and `feature_cost`
//!   columns, then one column per feature. Empty cells or `?` are missing.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::aslib::{RawRun, RawScenario};
use super::Scenario;
use crate::error::{Error, Result};

fn reader(dir: &Path, name: &str) -> Result<(csv::Reader<fs::File>, String)> {
    let path = dir.join(name);
    let label = path.display().to_string();
    if !path.exists() {
        return Err(Error::format(label, "missing required file"));
    }
    let rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&path)
        .map_err(|e| Error::format(&label, e.to_string()))?;
    Ok((rdr, label))
}

fn header_index(headers: &csv::StringRecord, name: &str, file: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::format(file, format!("missing column `{name}`")))
}

fn parse_cell(cell: &str) -> Option<f64> {
    match cell {
        "" | "?" => None,
        c => c.parse().ok(),
    }
}

pub fn load_csv(dir: impl AsRef<Path>) -> Result<Scenario> {
    let dir = dir.as_ref();

    let (mut meta, meta_file) = reader(dir, "meta.csv")?;
    let mut kv = HashMap::new();
    for rec in meta.records() {
        let rec = rec.map_err(|e| Error::format(&meta_file, e.to_string()))?;
        if rec.len() >= 2 {
            kv.insert(rec[0].to_string(), rec[1].to_string());
        }
    }
    let cutoff: f64 = kv
        .get("cutoff")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(&meta_file, "missing or non-numeric `cutoff`"))?;
    let mut raw = RawScenario {
        name: kv.get("scenario_id").cloned().unwrap_or_else(|| "unnamed".into()),
        cutoff,
        ..Default::default()
    };

    let (mut feats, feat_file) = reader(dir, "features.csv")?;
    let headers = feats.headers().map_err(|e| Error::format(&feat_file, e.to_string()))?.clone();
    let id_col = header_index(&headers, "instance_id", &feat_file)?;
    let fold_col = headers.iter().position(|h| h == "fold");
    let cost_col = headers.iter().position(|h| h == "feature_cost");
    let value_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != id_col && Some(c) != fold_col && Some(c) != cost_col)
        .collect();
    raw.feature_names = value_cols.iter().map(|&c| headers[c].to_string()).collect();
    for rec in feats.records() {
        let rec = rec.map_err(|e| Error::format(&feat_file, e.to_string()))?;
        let id = rec[id_col].to_string();
        if let Some(c) = fold_col {
            let fold = rec[c]
                .parse::<usize>()
                .map_err(|_| Error::format(&feat_file, format!("bad fold for {id}")))?;
            raw.folds.insert(id.clone(), fold);
        }
        if let Some(c) = cost_col {
            raw.costs.insert(id.clone(), parse_cell(&rec[c]).unwrap_or(0.0));
        }
        let values = value_cols.iter().map(|&c| parse_cell(&rec[c]).unwrap_or(f64::NAN)).collect();
        raw.add_instance(id, values);
    }

    let (mut runs, runs_file) = reader(dir, "runs.csv")?;
    raw.runs_file = runs_file.clone();
    let headers = runs.headers().map_err(|e| Error::format(&runs_file, e.to_string()))?.clone();
    let inst = header_index(&headers, "instance_id", &runs_file)?;
    let alg = header_index(&headers, "algorithm", &runs_file)?;
    let rt = header_index(&headers, "runtime", &runs_file)?;
    let st = header_index(&headers, "status", &runs_file)?;
    for rec in runs.records() {
        let rec = rec.map_err(|e| Error::format(&runs_file, e.to_string()))?;
        raw.add_run(
            rec[inst].to_string(),
            rec[alg].to_string(),
            RawRun {
                runtime: parse_cell(&rec[rt]),
                ok: rec[st].eq_ignore_ascii_case("ok"),
                repetition: 1,
            },
        );
    }
    raw.build()
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn write_csv(s: &Scenario, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let io = |name: &str, e: csv::Error| Error::format(dir.join(name).display().to_string(), e.to_string());

    let mut meta = csv::Writer::from_path(dir.join("meta.csv")).map_err(|e| io("meta.csv", e))?;
    meta.write_record(["key", "value"]).map_err(|e| io("meta.csv", e))?;
    meta.write_record(["scenario_id", &s.name]).map_err(|e| io("meta.csv", e))?;
    meta.write_record(["cutoff", &fmt(s.cutoff)]).map_err(|e| io("meta.csv", e))?;
    meta.flush().map_err(|e| Error::io(dir.join("meta.csv"), e))?;

    let mut feats = csv::Writer::from_path(dir.join("features.csv")).map_err(|e| io("features.csv", e))?;
    let mut header = vec!["instance_id".to_string()];
    if s.folds.is_some() {
        header.push("fold".into());
    }
    header.push("feature_cost".into());
    header.extend(s.feature_names.iter().cloned());
    feats.write_record(&header).map_err(|e| io("features.csv", e))?;
    for (i, id) in s.instances.iter().enumerate() {
        let mut row = vec![id.clone()];
        if let Some(f) = &s.folds {
            row.push(f[i].to_string());
        }
        row.push(fmt(s.feature_costs[i]));
        row.extend(s.features[i].iter().map(|&v| fmt(v)));
        feats.write_record(&row).map_err(|e| io("features.csv", e))?;
    }
    feats.flush().map_err(|e| Error::io(dir.join("features.csv"), e))?;

    let mut runs = csv::Writer::from_path(dir.join("runs.csv")).map_err(|e| io("runs.csv", e))?;
    runs.write_record(["instance_id", "algorithm", "runtime", "status"]).map_err(|e| io("runs.csv", e))?;
    for (i, id) in s.instances.iter().enumerate() {
        for (a, alg) in s.algorithms.iter().enumerate() {
            let status = if s.censored[i][a] { "timeout" } else { "ok" };
            runs.write_record([id.as_str(), alg.as_str(), &fmt(s.runtimes[i][a]), status])
                .map_err(|e| io("runs.csv", e))?;
        }
    }
    runs.flush().map_err(|e| Error::io(dir.join("runs.csv"), e))?;
    Ok(())
}
