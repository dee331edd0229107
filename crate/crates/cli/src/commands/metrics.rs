use std::collections::HashMap;
use std::path::{Path, PathBuf};

use emoforge_core::eval::{
    accuracy, emit_reference_tables, parse_prediction, sensitivity as score_sensitivity, GoldLabel, ParseStatus,
    RawPrediction, RunAccuracy, SensitivityInput, StdMode,
};
use emoforge_core::{jsonl, load_taxonomy};
use serde_json::{json, Value};

use crate::{fail, Failure, WithCode, EXIT_CONFIG, EXIT_INVALID, EXIT_OK};

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).code(EXIT_CONFIG)?;
    text.push('\n');
    jsonl::write_atomic(path, text.as_bytes()).code(EXIT_CONFIG)
}

pub fn eval(
    taxonomy: &str,
    predictions: &Path,
    gold: &Path,
    summary: Option<&Path>,
    parsed_out: Option<&Path>,
) -> Result<u8, Failure> {
    let taxonomy = load_taxonomy(taxonomy).code(EXIT_CONFIG)?;
    let raw: Vec<RawPrediction> = jsonl::read_file(predictions).code(EXIT_INVALID)?;
    let gold_rows: Vec<GoldLabel> = jsonl::read_file(gold).code(EXIT_INVALID)?;
    let mut gold_map = HashMap::with_capacity(gold_rows.len());
    for g in gold_rows {
        if let Some(prev) = gold_map.insert(g.image_id.clone(), g.label.clone()) {
            if prev != g.label {
                return fail(EXIT_INVALID, format!("conflicting gold labels for {}", g.image_id));
            }
        }
    }
    let parsed: Vec<_> = raw.iter().map(|p| parse_prediction(&p.image_id, &p.raw_text, &taxonomy)).collect();
    let report = accuracy(&parsed, &gold_map).code(EXIT_INVALID)?;
    let fallback = parsed.iter().filter(|p| p.parse_status == ParseStatus::Fallback).count();

    out!(
        "accuracy: {:.2}% ({}/{} correct, {} unparseable, {} fallback)",
        report.accuracy * 100.0,
        report.correct,
        report.total,
        report.unparseable,
        fallback
    );
    if let Some(path) = parsed_out {
        jsonl::write_atomic(path, jsonl::to_string(&parsed).as_bytes()).code(EXIT_CONFIG)?;
    }
    if let Some(path) = summary {
        write_json(
            path,
            &json!({
                "metric": "accuracy",
                "taxonomy": taxonomy.name(),
                "accuracy": report.accuracy,
                "correct": report.correct,
                "total": report.total,
                "unparseable": report.unparseable,
                "fallback": fallback,
            }),
        )?;
    }
    Ok(EXIT_OK)
}

pub fn sensitivity(runs: &[PathBuf], mode: StdMode, summary: Option<&Path>) -> Result<u8, Failure> {
    let mut all = Vec::new();
    for path in runs {
        let rows: Vec<RunAccuracy> = jsonl::read_file(path).code(EXIT_INVALID)?;
        all.extend(rows);
    }
    let input = SensitivityInput::from_runs(all).code(EXIT_INVALID)?;
    let report = score_sensitivity(&input, mode).code(EXIT_INVALID)?;
    let mode_name = match mode {
        StdMode::Population => "population",
        StdMode::Sample => "sample",
    };
    out!(
        "sensitivity: {:.6} ({mode_name} std, {} task(s), {} skipped)",
        report.sensitivity,
        report.per_task.len(),
        report.skipped.len()
    );
    for (task, cov) in &report.per_task {
        out!("  {task}: {cov:.6}");
    }
    for s in &report.skipped {
        out!("  {}: skipped ({})", s.task_id, s.reason);
    }
    if let Some(path) = summary {
        let mut value = serde_json::to_value(&report).code(EXIT_CONFIG)?;
        value["metric"] = json!("sensitivity");
        write_json(path, &value)?;
    }
    Ok(EXIT_OK)
}

fn summary_line(name: &str, v: &Value) -> String {
    match v.get("metric").and_then(Value::as_str) {
        Some("accuracy") => format!(
            "  {name}: accuracy {:.2}% ({}/{} correct, {} unparseable)",
            v["accuracy"].as_f64().unwrap_or(f64::NAN) * 100.0,
            v["correct"],
            v["total"],
            v["unparseable"]
        ),
        Some("sensitivity") => format!(
            "  {name}: sensitivity {:.6} ({} std)",
            v["sensitivity"].as_f64().unwrap_or(f64::NAN),
            v["std_mode"].as_str().unwrap_or("?")
        ),
        _ => format!("  {name}: {v}"),
    }
}

pub fn report(summaries: &[PathBuf], fixtures: bool, json_out: Option<&Path>) -> Result<u8, Failure> {
    let mut results = serde_json::Map::new();
    if !summaries.is_empty() {
        out!("Results");
    }
    for path in summaries {
        let text = std::fs::read_to_string(path).code(EXIT_CONFIG)?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
            .code(EXIT_INVALID)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out!("{}", summary_line(&name, &v));
        results.insert(name, v);
    }
    let mut merged = json!({ "results": results });
    if fixtures {
        let tables = emit_reference_tables();
        print!("{}", tables.render_text());
        merged["reference"] = serde_json::to_value(&tables).code(EXIT_CONFIG)?;
    }
    if let Some(path) = json_out {
        write_json(path, &merged)?;
    }
    Ok(EXIT_OK)
}
