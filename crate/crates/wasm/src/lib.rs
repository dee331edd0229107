//! Browser bindings for a few pure emoforge operations. Every export takes
//! plain strings and numbers and returns a JSON document; failures come
//! back as `{"error": "..."}`.

use std::collections::BTreeMap;

use emoforge_core::eval::{parse_prediction as parse, sensitivity, SensitivityInput, StdMode};
use emoforge_core::sampling::{apportion, round_half_up, stratified_sample};
use emoforge_core::taxonomy::builtin_names;
use emoforge_core::{load_taxonomy, Taxonomy};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

fn to_json<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

fn taxonomy(name: &str, custom_labels: &str) -> Result<Taxonomy, String> {
    if custom_labels.trim().is_empty() {
        load_taxonomy(name).map_err(|e| e.to_string())
    } else {
        Taxonomy::parse("custom", custom_labels).map_err(|e| e.to_string())
    }
}

/// Names of the built-in taxonomies with their labels.
#[wasm_bindgen]
pub fn taxonomies() -> String {
    let all: BTreeMap<&str, Vec<String>> = builtin_names()
        .filter_map(|n| load_taxonomy(n).ok().map(|t| (n, t.labels().to_vec())))
        .collect();
    to_json(Ok(all))
}

/// Parses a model answer against a built-in taxonomy, or against
/// `custom_labels` (one per line) when that is non-empty.
#[wasm_bindgen]
pub fn parse_prediction(raw_text: &str, taxonomy_name: &str, custom_labels: &str) -> String {
    to_json(taxonomy(taxonomy_name, custom_labels).map(|t| parse("input", raw_text, &t)))
}

#[derive(Serialize)]
struct SensitivityOut {
    sensitivity: f64,
    per_task: BTreeMap<String, f64>,
    means: BTreeMap<String, f64>,
    skipped: Vec<String>,
}

/// One task per line: an optional `name:` followed by accuracies separated
/// by spaces or commas, either as fractions or as percentages.
pub fn parse_matrix(text: &str) -> Result<Vec<(String, Vec<f64>)>, String> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, values) = match line.split_once(':') {
            Some((n, v)) => (n.trim().to_string(), v),
            None => (format!("task{}", rows.len() + 1), line),
        };
        let mut accs = Vec::new();
        for tok in values.split([' ', ',', '\t']).filter(|t| !t.is_empty()) {
            let pct = tok.ends_with('%');
            let v: f64 = tok.trim_end_matches('%').parse().map_err(|_| format!("line {}: bad number {tok:?}", i + 1))?;
            accs.push(if pct || v > 1.0 { v / 100.0 } else { v });
        }
        rows.push((name, accs));
    }
    if rows.is_empty() {
        return Err("no tasks given".into());
    }
    Ok(rows)
}

pub fn sensitivity_report(text: &str, sample_std: bool) -> Result<serde_json::Value, String> {
    let rows = parse_matrix(text)?;
    let input = SensitivityInput::from_matrix(rows.iter().map(|(n, v)| (n.as_str(), v.as_slice())))
        .map_err(|e| e.to_string())?;
    let mode = if sample_std { StdMode::Sample } else { StdMode::Population };
    let report = sensitivity(&input, mode).map_err(|e| e.to_string())?;
    let means = rows.iter().map(|(n, v)| (n.clone(), v.iter().sum::<f64>() / v.len() as f64)).collect();
    let out = SensitivityOut {
        sensitivity: report.sensitivity,
        per_task: report.per_task,
        means,
        skipped: report.skipped.iter().map(|s| format!("{}: {}", s.task_id, s.reason)).collect(),
    };
    serde_json::to_value(out).map_err(|e| e.to_string())
}

/// Instruction sensitivity of an accuracy matrix given as text.
#[wasm_bindgen]
pub fn sensitivity_of(text: &str, sample_std: bool) -> String {
    to_json(sensitivity_report(text, sample_std))
}

#[derive(Serialize)]
pub struct ClassShare {
    pub class: String,
    pub size: usize,
    pub exact: f64,
    pub selected: usize,
    pub first_ids: Vec<String>,
}

#[derive(Serialize)]
pub struct SamplePreview {
    pub total: usize,
    pub target: usize,
    pub selected: usize,
    pub classes: Vec<ClassShare>,
}

/// `class_sizes`: one `class size` pair per line.
pub fn preview(class_sizes: &str, fraction: f64, seed: u64) -> Result<SamplePreview, String> {
    let mut sizes = BTreeMap::new();
    for (i, line) in class_sizes.lines().enumerate() {
        let parts: Vec<&str> = line.split([' ', ',', ':', '\t']).filter(|t| !t.is_empty()).collect();
        match parts[..] {
            [] => continue,
            [class, n] => {
                let n: usize = n.parse().map_err(|_| format!("line {}: bad size {n:?}", i + 1))?;
                if sizes.insert(class.to_string(), n).is_some() {
                    return Err(format!("line {}: class {class:?} repeated", i + 1));
                }
            }
            _ => return Err(format!("line {}: expected `class size`", i + 1)),
        }
    }
    let total: usize = sizes.values().sum();
    if total > 2_000_000 {
        return Err("pool too large for the demo".into());
    }
    let quotas = apportion(&sizes, fraction).map_err(|e| e.to_string())?;
    let ids: Vec<(String, &str)> =
        sizes.iter().flat_map(|(c, &n)| (0..n).map(move |i| (format!("{c}-{i:06}"), c.as_str()))).collect();
    let chosen = stratified_sample(ids.iter().map(|(id, c)| (id.as_str(), *c)), fraction, seed).map_err(|e| e.to_string())?;
    let classes = sizes
        .iter()
        .map(|(c, &n)| {
            let prefix = format!("{c}-");
            ClassShare {
                class: c.clone(),
                size: n,
                exact: fraction * n as f64,
                selected: quotas[c],
                first_ids: chosen.iter().filter(|id| id.starts_with(&prefix)).take(5).cloned().collect(),
            }
        })
        .collect();
    Ok(SamplePreview { total, target: round_half_up(fraction * total as f64), selected: chosen.len(), classes })
}

/// Stratified sampling over a synthetic id pool.
#[wasm_bindgen]
pub fn sample_preview(class_sizes: &str, fraction: f64, seed: u64) -> String {
    to_json(preview(class_sizes, fraction, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_json() {
        let v: serde_json::Value =
            serde_json::from_str(&parse_prediction("Predict emotion: Fear. Reason: dark", "emotion6", "")).unwrap();
        assert_eq!(v["parsed_label"], "fear");
        assert_eq!(v["parsed_reason"], "dark");
        let custom: serde_json::Value =
            serde_json::from_str(&parse_prediction("looks calm", "", "calm\nexcited\n")).unwrap();
        assert_eq!(custom["parse_status"], "fallback");
        assert!(parse_prediction("x", "nope", "").contains("error"));
    }

    #[test]
    fn matrix_text() {
        let rows = parse_matrix("fi: 80% 40%\n# note\n0.5, 0.5\n").unwrap();
        assert_eq!(rows[0], ("fi".to_string(), vec![0.8, 0.4]));
        assert_eq!(rows[1].0, "task2");
        let v = sensitivity_report("fi: 80 40", false).unwrap();
        assert!((v["sensitivity"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(sensitivity_of("a: 0.5", false).contains("error"));
    }

    #[test]
    fn sampling_preview() {
        let p = preview("joy 7\nfear 3\n", 0.5, 1).unwrap();
        assert_eq!((p.total, p.target, p.selected), (10, 5, 5));
        assert_eq!(p.classes.iter().map(|c| c.selected).sum::<usize>(), 5);
        assert!(preview("joy x", 0.5, 1).is_err());
        assert!(preview("joy 3", 0.0, 1).is_err());
    }
}
