//! Result files: one JSON document per run plus plot-ready CSV tables.
//!
//! Floats are written with 9 significant digits so reports are stable across
//! platforms and diff cleanly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Result;
use crate::experiments::{
    ComparisonReport, CurveSet, GroupComparison, SelectionResult, Study1Report, Study2Report, Study3Report, TrialResult,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const SIGNIFICANT_DIGITS: usize = 9;

pub const RESULTS_FILE: &str = "results.json";
pub const LOSS_DIFFS_FILE: &str = "loss_diffs.csv";
pub const PAIRWISE_FILE: &str = "pairwise_p.csv";
pub const PAIRWISE_HOLM_FILE: &str = "pairwise_p_holm.csv";
pub const SELECTION_FILE: &str = "selection_path.json";

pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Rounds every float in a JSON tree in place.
pub fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// `{"schema_version", "command", "results"}` with rounded floats.
pub fn envelope<T: Serialize>(command: &str, results: &T) -> Result<Value> {
    let mut v = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "results": serde_json::to_value(results)?,
    });
    round_value(&mut v);
    Ok(v)
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        round_sig(x).to_string()
    }
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Long-format table of per-trial losses and loss differences.
pub fn write_loss_diffs(path: &Path, trials: &[TrialResult]) -> Result<()> {
    let mut rows = Vec::new();
    for t in trials {
        for (model, nll) in &t.nll {
            rows.push(vec![t.trial_index.to_string(), model.clone(), fmt(*nll), fmt(t.loss_diff[model])]);
        }
        if let Some(v) = t.true_nll {
            rows.push(vec![t.trial_index.to_string(), "true-params".into(), fmt(v), String::new()]);
        }
    }
    write_rows(path, &strings(&["trial", "model", "nll", "loss_diff"]), &rows)
}

/// Symmetric p-value matrix with group names on both axes.
pub fn write_pairwise(path: &Path, names: &[String], matrix: &[Vec<f64>]) -> Result<()> {
    let mut header = vec!["model".to_string()];
    header.extend(names.iter().cloned());
    let rows: Vec<Vec<String>> = names
        .iter()
        .zip(matrix)
        .map(|(n, row)| std::iter::once(n.clone()).chain(row.iter().map(|&p| fmt(p))).collect())
        .collect();
    write_rows(path, &header, &rows)
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// `curves_<trait>.csv` (mean curve), `curves_<trait>_trials.csv` and one
/// `curves_surface_<x>_<y>_<level>.csv` per surface.
pub fn write_curves(dir: &Path, set: &CurveSet) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for c in &set.curves {
        let name = file_safe(&c.trait_name);
        let path = dir.join(format!("curves_{name}.csv"));
        let rows: Vec<Vec<String>> =
            c.grid.iter().zip(&c.mean).map(|(g, p)| vec![fmt(*g), fmt(p.pi), fmt(p.d), fmt(p.peak)]).collect();
        write_rows(&path, &strings(&["trait", "pi", "d", "peak"]), &rows)?;
        written.push(path);

        let path = dir.join(format!("curves_{name}_trials.csv"));
        let mut rows = Vec::new();
        for (k, curve) in c.per_trial.iter().enumerate() {
            for (g, p) in c.grid.iter().zip(curve) {
                rows.push(vec![k.to_string(), fmt(*g), fmt(p.pi), fmt(p.d), fmt(p.peak)]);
            }
        }
        write_rows(&path, &strings(&["trial", "trait", "pi", "d", "peak"]), &rows)?;
        written.push(path);
    }
    for s in &set.surfaces {
        let path = dir.join(format!(
            "curves_surface_{}_{}_{}.csv",
            file_safe(&s.x_trait),
            file_safe(&s.y_trait),
            s.fixed_level
        ));
        let mut rows = Vec::new();
        for (i, x) in s.grid.iter().enumerate() {
            for (j, y) in s.grid.iter().enumerate() {
                let p = s.mean[i][j];
                rows.push(vec![fmt(*x), fmt(*y), fmt(p.pi), fmt(p.d), fmt(p.peak)]);
            }
        }
        write_rows(&path, &[s.x_trait.clone(), s.y_trait.clone(), "pi".into(), "d".into(), "peak".into()], &rows)?;
        written.push(path);
    }
    Ok(written)
}

fn write_comparison(dir: &Path, stem: &str, c: &GroupComparison) -> Result<Vec<PathBuf>> {
    let (raw, holm) = if stem.is_empty() {
        (dir.join(PAIRWISE_FILE), dir.join(PAIRWISE_HOLM_FILE))
    } else {
        (dir.join(format!("pairwise_p_{stem}.csv")), dir.join(format!("pairwise_p_holm_{stem}.csv")))
    };
    write_pairwise(&raw, &c.groups, &c.pairwise.unadjusted())?;
    write_pairwise(&holm, &c.groups, &c.pairwise.holm())?;
    Ok(vec![raw, holm])
}

fn write_selection(dir: &Path, selection: &SelectionResult) -> Result<PathBuf> {
    let path = dir.join(SELECTION_FILE);
    let mut v = json!({
        "schema_version": SCHEMA_VERSION,
        "pool": selection.pool,
        "selected_traits": selection.selected_traits,
        "path": serde_json::to_value(&selection.path)?,
        "candidates": serde_json::to_value(&selection.steps)?,
    });
    round_value(&mut v);
    write_json(&path, &v)?;
    Ok(path)
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn emit_study1(report: &Study1Report, dir: &Path) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut written = vec![dir.join(RESULTS_FILE), dir.join(LOSS_DIFFS_FILE)];
    write_json(&written[0], &envelope("study1", report)?)?;
    write_loss_diffs(&written[1], &report.trials)?;
    written.extend(write_comparison(dir, "", &report.comparison)?);
    written.extend(write_curves(dir, &report.curves)?);
    Ok(written)
}

pub fn emit_study2(report: &Study2Report, dir: &Path) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut written = vec![dir.join(RESULTS_FILE), dir.join("nll.csv")];
    write_json(&written[0], &envelope("study2", report)?)?;
    let mut rows = Vec::new();
    for c in &report.conditions {
        for (k, (nll, t)) in c.nll.iter().zip(&c.true_nll).enumerate() {
            rows.push(vec![c.name.clone(), k.to_string(), fmt(*nll), fmt(*t)]);
        }
    }
    write_rows(&written[1], &strings(&["condition", "trial", "nll", "true_nll"]), &rows)?;
    for c in &report.comparisons {
        written.extend(write_comparison(dir, &file_safe(&c.label), c)?);
    }
    Ok(written)
}

fn emit_comparison(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = vec![dir.join(LOSS_DIFFS_FILE)];
    write_loss_diffs(&written[0], &report.trials)?;
    written.extend(write_comparison(dir, "", &report.comparison)?);
    Ok(written)
}

pub fn emit_study3(report: &Study3Report, dir: &Path) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut written = vec![dir.join(RESULTS_FILE)];
    write_json(&written[0], &envelope("study3", report)?)?;
    written.push(write_selection(dir, &report.selection)?);
    written.extend(emit_comparison(&report.comparison, dir)?);
    written.extend(write_curves(dir, &report.curves)?);
    Ok(written)
}

pub fn emit_forward_selection(selection: &SelectionResult, dir: &Path) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let results = dir.join(RESULTS_FILE);
    write_json(&results, &envelope("forward-select", selection)?)?;
    Ok(vec![results, write_selection(dir, selection)?])
}
