//! Scoring of model prediction files.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::taxonomy::{normalize_label, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Ok,
    Fallback,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub raw_text: String,
    pub parsed_label: Option<String>,
    pub parsed_reason: Option<String>,
    pub parse_status: ParseStatus,
}

/// Input row of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPrediction {
    pub image_id: String,
    pub raw_text: String,
}

/// Input row of a gold-label file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub image_id: String,
    pub label: String,
}

static LABEL_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)predict(?:ed)?[ \t]+emotion[ \t]*:").unwrap());
static REASON_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)reason[ \t]*:").unwrap());

fn reason_after(text: &str, from: usize) -> Option<String> {
    let m = REASON_MARKER.find_at(text, from)?;
    let reason = text[m.end()..].trim();
    (!reason.is_empty()).then(|| reason.to_string())
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80
}

/// Byte offset of the first case-insensitive whole-word occurrence of `word`.
fn find_word(text: &str, word: &str) -> Option<usize> {
    let (hay, needle) = (text.as_bytes(), word.as_bytes());
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (0..=hay.len() - needle.len()).find(|&i| {
        hay[i..i + needle.len()].eq_ignore_ascii_case(needle)
            && (i == 0 || !is_word_byte(hay[i - 1]))
            && hay.get(i + needle.len()).is_none_or(|&b| !is_word_byte(b))
    })
}

/// Taxonomy labels occurring as whole words, with the position of their
/// first occurrence.
fn whole_word_hits<'t>(text: &str, taxonomy: &'t Taxonomy) -> Vec<(usize, &'t str)> {
    taxonomy
        .labels()
        .iter()
        .filter_map(|label| find_word(text, label.trim()).map(|pos| (pos, label.as_str())))
        .collect()
}

/// Two stages. First, text after a `Predicted emotion:` / `Predict emotion:`
/// marker, up to the end of the sentence, must equal a label
/// (case-insensitive). Otherwise the whole text is scanned for labels as
/// whole words and exactly one distinct label must appear. Anything after a
/// following `Reason:` marker becomes the reason.
pub fn parse_prediction(image_id: &str, raw_text: &str, taxonomy: &Taxonomy) -> PredictionRecord {
    let mut record = PredictionRecord {
        image_id: image_id.to_string(),
        raw_text: raw_text.to_string(),
        parsed_label: None,
        parsed_reason: None,
        parse_status: ParseStatus::Unparseable,
    };

    if let Some(m) = LABEL_MARKER.find(raw_text) {
        let rest = &raw_text[m.end()..];
        let end = rest.find(['.', '!', '?', ',', ';', '\n']).unwrap_or(rest.len());
        let candidate = rest[..end].trim().trim_matches(|c: char| "*\"'`[]()".contains(c) || c.is_whitespace());
        if let Some(label) = taxonomy.resolve(candidate) {
            record.parsed_label = Some(label.to_string());
            record.parsed_reason = reason_after(raw_text, m.end() + end);
            record.parse_status = ParseStatus::Ok;
            return record;
        }
    }

    let hits = whole_word_hits(raw_text, taxonomy);
    if let [(pos, label)] = hits[..] {
        record.parsed_label = Some(label.to_string());
        record.parsed_reason = reason_after(raw_text, pos);
        record.parse_status = ParseStatus::Fallback;
    }
    record
}

/// Renders a labelled explanation in the `Predicted emotion: ... Reason: ...` form.
pub fn render_prediction(label: &str, reason: Option<&str>) -> String {
    match reason {
        Some(r) => format!("Predicted emotion: {label}. Reason: {r}"),
        None => format!("Predicted emotion: {label}."),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("empty evaluation set")]
    EmptyEvaluationSet,
    #[error("no gold label for image {0:?}")]
    MissingGold(String),
    #[error("task {task:?} has {found} instruction(s); sensitivity needs at least 2")]
    TooFewInstructions { task: String, found: usize },
    #[error("task {task:?} lists instruction {instruction:?} more than once")]
    DuplicateInstruction { task: String, instruction: String },
    #[error("accuracy {value} for task {task:?} is outside [0, 1]")]
    AccuracyOutOfRange { task: String, value: f64 },
    #[error("every task was skipped: {}", .0.iter().map(|s| format!("{} ({})", s.task_id, s.reason)).collect::<Vec<_>>().join(", "))]
    AllTasksSkipped(Vec<SkippedTask>),
    #[error("no tasks given")]
    NoTasks,
    #[error("empty vote list")]
    NoVotes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub unparseable: usize,
}

/// Fraction of predictions whose parsed label equals the gold label.
/// Unparseable predictions count as incorrect.
pub fn accuracy(predictions: &[PredictionRecord], gold: &HashMap<String, String>) -> Result<AccuracyReport, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyEvaluationSet);
    }
    let mut correct = 0;
    let mut unparseable = 0;
    for p in predictions {
        let truth = gold.get(&p.image_id).ok_or_else(|| EvalError::MissingGold(p.image_id.clone()))?;
        match &p.parsed_label {
            Some(label) if normalize_label(label) == normalize_label(truth) => correct += 1,
            Some(_) => {}
            None => unparseable += 1,
        }
    }
    let total = predictions.len();
    Ok(AccuracyReport { accuracy: correct as f64 / total as f64, correct, total, unparseable })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAccuracy {
    pub task_id: String,
    pub instruction_id: String,
    pub accuracy: f64,
}

/// Per-task accuracies, one entry per instruction phrasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensitivityInput {
    tasks: BTreeMap<String, Vec<RunAccuracy>>,
}

impl SensitivityInput {
    pub fn from_runs(runs: impl IntoIterator<Item = RunAccuracy>) -> Result<Self, EvalError> {
        let mut tasks: BTreeMap<String, Vec<RunAccuracy>> = BTreeMap::new();
        for run in runs {
            if !(0.0..=1.0).contains(&run.accuracy) {
                return Err(EvalError::AccuracyOutOfRange { task: run.task_id, value: run.accuracy });
            }
            let entry = tasks.entry(run.task_id.clone()).or_default();
            if entry.iter().any(|r| r.instruction_id == run.instruction_id) {
                return Err(EvalError::DuplicateInstruction { task: run.task_id, instruction: run.instruction_id });
            }
            entry.push(run);
        }
        Ok(SensitivityInput { tasks })
    }

    /// Builds an input from a task → accuracies map, naming instructions by index.
    pub fn from_matrix<'a>(rows: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> Result<Self, EvalError> {
        Self::from_runs(rows.into_iter().flat_map(|(task, accs)| {
            accs.iter().enumerate().map(move |(i, &a)| RunAccuracy {
                task_id: task.to_string(),
                instruction_id: format!("i{i}"),
                accuracy: a,
            })
        }))
    }

    pub fn tasks(&self) -> &BTreeMap<String, Vec<RunAccuracy>> {
        &self.tasks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdMode {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n - 1.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedTask {
    pub task_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub sensitivity: f64,
    pub std_mode: StdMode,
    /// Coefficient of variation per scored task.
    pub per_task: BTreeMap<String, f64>,
    pub skipped: Vec<SkippedTask>,
}

/// Mean and standard deviation, computed on values shifted by the first
/// element so that constant inputs give exactly zero spread.
fn mean_std(values: &[f64], mode: StdMode) -> (f64, f64) {
    let n = values.len() as f64;
    let pivot = values[0];
    let shifted_mean = values.iter().map(|v| v - pivot).sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - pivot - shifted_mean).powi(2)).sum();
    let divisor = match mode {
        StdMode::Population => n,
        StdMode::Sample => n - 1.0,
    };
    (pivot + shifted_mean, (ss / divisor).sqrt())
}

/// Mean over tasks of the coefficient of variation (σ / μ) of accuracy
/// across instruction phrasings. Tasks with μ = 0 are skipped.
pub fn sensitivity(input: &SensitivityInput, mode: StdMode) -> Result<SensitivityReport, EvalError> {
    if input.tasks.is_empty() {
        return Err(EvalError::NoTasks);
    }
    let mut per_task = BTreeMap::new();
    let mut skipped = Vec::new();
    for (task, runs) in &input.tasks {
        if runs.len() < 2 {
            return Err(EvalError::TooFewInstructions { task: task.clone(), found: runs.len() });
        }
        let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        let (mean, std) = mean_std(&accs, mode);
        if mean <= 0.0 {
            skipped.push(SkippedTask { task_id: task.clone(), reason: "mean accuracy is 0".into() });
            continue;
        }
        per_task.insert(task.clone(), std / mean);
    }
    if per_task.is_empty() {
        return Err(EvalError::AllTasksSkipped(skipped));
    }
    let sensitivity = per_task.values().sum::<f64>() / per_task.len() as f64;
    Ok(SensitivityReport { sensitivity, std_mode: mode, per_task, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteChoice {
    Model,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub item_id: String,
    pub choice: VoteChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteCount {
    pub model_votes: usize,
    pub total: usize,
    pub model_share: f64,
}

impl VoteCount {
    fn from_counts(model_votes: usize, total: usize) -> Self {
        VoteCount { model_votes, total, model_share: model_votes as f64 / total as f64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteTally {
    pub overall: VoteCount,
    pub per_item: BTreeMap<String, VoteCount>,
}

pub fn tally_votes(votes: &[Vote]) -> Result<VoteTally, EvalError> {
    if votes.is_empty() {
        return Err(EvalError::NoVotes);
    }
    let mut per_item: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for v in votes {
        let e = per_item.entry(v.item_id.clone()).or_default();
        e.1 += 1;
        if v.choice == VoteChoice::Model {
            e.0 += 1;
        }
    }
    let model = votes.iter().filter(|v| v.choice == VoteChoice::Model).count();
    Ok(VoteTally {
        overall: VoteCount::from_counts(model, votes.len()),
        per_item: per_item.into_iter().map(|(k, (m, t))| (k, VoteCount::from_counts(m, t))).collect(),
    })
}

/// A published number kept exactly as printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Printed(pub &'static str);

impl Printed {
    pub fn value(self) -> f64 {
        self.0.parse().expect("fixture values are numeric")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: &'static str,
    /// Kind composition in dataset manifest form; empty for the base model.
    pub composition: &'static str,
    pub accuracy: Printed,
    pub delta: Option<Printed>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub portion: &'static str,
    pub accuracy: Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeldOutRow {
    pub method: &'static str,
    pub accuracies: Vec<(&'static str, Printed)>,
}

/// Published reference results (accuracy %, EmoSet test set unless noted).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceTables {
    pub instruction_ablation: Vec<AblationRow>,
    pub data_scaling: Vec<ScalingRow>,
    pub held_out: Vec<HeldOutRow>,
}

const HELD_OUT_DATASETS: [&str; 8] =
    ["WebEmo", "FI", "Emotion6", "Abstract", "ArtPhoto", "IAPSa", "EmotionROI", "EmoSet"];

pub fn emit_reference_tables() -> ReferenceTables {
    let ablation = [
        ("none", "", "42.20", None),
        ("C", "categorical", "80.90", Some("+38.70")),
        ("C+Conv", "categorical+conversation", "81.95", Some("+39.75")),
        ("C+Conv+R", "categorical+conversation+reasoning", "83.36", Some("+41.16")),
    ];
    let scaling = [("5%", "79.00"), ("10%", "81.00"), ("30%", "79.34"), ("50%", "83.36")];
    let held_out: [(&str, [&str; 8]); 5] = [
        ("Flamingo", ["9.36", "14.91", "21.67", "3.57", "17.5", "10.13", "21.72", "29.59"]),
        ("LLaVA", ["12.55", "56.04", "49.44", "19.54", "36.25", "42.43", "46.46", "44.03"]),
        ("BLIP2", ["20.10", "57.72", "50.00", "28.57", "36.25", "39.24", "50.51", "46.79"]),
        ("InstructBLIP", ["12.80", "37.97", "46.11", "21.42", "26.25", "34.18", "46.13", "42.20"]),
        ("Ours*", ["21.12", "68.09", "57.81", "32.34", "44.90", "44.13", "53.87", "83.36"]),
    ];
    ReferenceTables {
        instruction_ablation: ablation
            .into_iter()
            .map(|(label, composition, acc, delta)| AblationRow {
                label,
                composition,
                accuracy: Printed(acc),
                delta: delta.map(Printed),
            })
            .collect(),
        data_scaling: scaling
            .into_iter()
            .map(|(portion, acc)| ScalingRow { portion, accuracy: Printed(acc) })
            .collect(),
        held_out: held_out
            .into_iter()
            .map(|(method, vals)| HeldOutRow {
                method,
                accuracies: HELD_OUT_DATASETS.iter().copied().zip(vals.map(Printed)).collect(),
            })
            .collect(),
    }
}

impl ReferenceTables {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Reference: instruction-data ablation (EmoSet accuracy %)");
        for r in &self.instruction_ablation {
            let delta = r.delta.map(|d| format!(" ({})", d.0)).unwrap_or_default();
            let _ = writeln!(s, "  {:<10} {}{}", r.label, r.accuracy.0, delta);
        }
        let _ = writeln!(s, "Reference: portion of pre-training data (EmoSet accuracy %)");
        for r in &self.data_scaling {
            let _ = writeln!(s, "  {:<10} {}", r.portion, r.accuracy.0);
        }
        let _ = writeln!(s, "Reference: held-out accuracy %");
        let _ = write!(s, "  {:<13}", "method");
        for d in HELD_OUT_DATASETS {
            let _ = write!(s, " {d:>10}");
        }
        s.push('\n');
        for r in &self.held_out {
            let _ = write!(s, "  {:<13}", r.method);
            for (_, v) in &r.accuracies {
                let _ = write!(s, " {:>10}", v.0);
            }
            s.push('\n');
        }
        s
    }
}
