use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use emoforge_core::attributes::{validate_caption, AttributeError};
use emoforge_core::instruction::make_categorical;
use emoforge_core::llm::{Backend, BackendConfig, BackendError, BackendReply, ErrorClass, LlmClient, MockBackend};
use emoforge_core::pipeline::{generate as run_pipeline, CompletionLog, GenerateOptions, GenerateOutcome};
use emoforge_core::prompt::{builtin_seed_examples, load_seed_examples, GenerationRequest, SYSTEM_PROMPT_SHA256};
use emoforge_core::sampling::stratified_sample;
use emoforge_core::{
    jsonl, join_inputs, load_taxonomy, sha256_hex, validate_attributes, AttributeRecord, CaptionRecord, Dataset,
    Kind, SeedExample, Taxonomy,
};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::config::{Provider, RunConfig};
use crate::{fail, Failure, WithCode, EXIT_BACKEND, EXIT_CONFIG, EXIT_INVALID, EXIT_OK};

/// Stands in for the HTTP backend when no API key is set, so that runs
/// fully covered by the completions log still work.
struct Offline(String);

impl Backend for Offline {
    fn send(&self, _: &GenerationRequest, _: &BackendConfig) -> Result<BackendReply, BackendError> {
        Err(BackendError::new(ErrorClass::Auth, self.0.clone()))
    }
}

struct Stage<T> {
    valid: Vec<T>,
    errors: Vec<String>,
}

fn read_stage<T: DeserializeOwned>(
    path: &Path,
    check: impl Fn(T) -> Result<T, AttributeError>,
) -> Result<Stage<T>, Failure> {
    let text = jsonl::read_text(path).code(EXIT_CONFIG)?;
    let mut stage = Stage { valid: Vec::new(), errors: Vec::new() };
    for (line, parsed) in jsonl::parse_lines::<T>(&text) {
        match parsed.map_err(|e| e.to_string()).and_then(|r| check(r).map_err(|e| e.to_string())) {
            Ok(r) => stage.valid.push(r),
            Err(e) => stage.errors.push(format!("{}:{line}: {e}", path.display())),
        }
    }
    Ok(stage)
}

/// Digest of everything that shapes generated content.
fn config_digest(cfg: &RunConfig, taxonomy: &Taxonomy, seeds: &[SeedExample]) -> String {
    let doc = json!({
        "system_prompt_sha256": SYSTEM_PROMPT_SHA256.trim(),
        "provider": format!("{:?}", cfg.provider),
        "model_name": cfg.backend.model_name,
        "temperature": cfg.backend.temperature,
        "corruption_rate": cfg.corruption_rate,
        "taxonomy": [taxonomy.name(), taxonomy.labels()],
        "seeds": seeds,
        "regenerate": cfg.regenerate,
        "kinds": cfg.kinds.composition(),
        "sample": cfg.sample_fraction.map(|f| (f, cfg.seed)),
    });
    sha256_hex(doc.to_string().as_bytes())
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).code(EXIT_CONFIG),
        _ => Ok(()),
    }
}

fn backend_for(cfg: &RunConfig, can_replay: bool) -> Result<Box<dyn Backend>, Failure> {
    Ok(match cfg.provider {
        Provider::Mock => Box::new(MockBackend::new(cfg.corruption_rate)),
        Provider::Http => match emoforge_core::llm::http::HttpBackend::from_env(&cfg.backend) {
            Ok(b) => Box::new(b),
            Err(e) if can_replay => Box::new(Offline(e.to_string())),
            Err(e) => return Err(e).code(EXIT_CONFIG),
        },
    })
}

fn categorical_only(pairs: &[(AttributeRecord, CaptionRecord)], taxonomy: &Taxonomy) -> GenerateOutcome {
    let mut outcome = GenerateOutcome::default();
    for (a, _) in pairs {
        match make_categorical(&a.image_id, &a.emotion_class, taxonomy) {
            Ok(r) => outcome.records.push(r),
            Err(e) => outcome.quarantine.push(emoforge_core::pipeline::QuarantineEntry {
                image_id: a.image_id.clone(),
                raw_text: String::new(),
                error: format!("categorical: {e}"),
            }),
        }
    }
    outcome
}

pub fn run(cfg: &RunConfig, fresh: bool) -> Result<u8, Failure> {
    let taxonomy = load_taxonomy(&cfg.taxonomy).code(EXIT_CONFIG)?;
    let all_seeds = match &cfg.seed_examples {
        Some(p) => load_seed_examples(p).code(EXIT_CONFIG)?,
        None => builtin_seed_examples(),
    };
    let seeds = &all_seeds[..cfg.seeds_per_request.min(all_seeds.len())];

    let attrs = read_stage(&cfg.paths.attributes, |r: AttributeRecord| validate_attributes(r, &taxonomy))?;
    let captions = read_stage(&cfg.paths.captions, validate_caption)?;
    if !attrs.errors.is_empty() || !captions.errors.is_empty() {
        for e in attrs.errors.iter().chain(&captions.errors) {
            eprintln!("{e}");
        }
        return fail(
            EXIT_INVALID,
            format!(
                "input validation failed: attributes {} valid / {} invalid, captions {} valid / {} invalid",
                attrs.valid.len(),
                attrs.errors.len(),
                captions.valid.len(),
                captions.errors.len()
            ),
        );
    }
    let joined = join_inputs(attrs.valid, captions.valid).code(EXIT_INVALID)?;
    if !joined.missing_caption.is_empty() || !joined.missing_attributes.is_empty() {
        eprintln!(
            "warning: {} image(s) without caption, {} caption(s) without attributes; skipped",
            joined.missing_caption.len(),
            joined.missing_attributes.len()
        );
    }
    let mut pairs = joined.pairs;
    if pairs.is_empty() {
        return fail(EXIT_INVALID, "no input pairs");
    }
    if let Some(fraction) = cfg.sample_fraction {
        let keep: BTreeSet<String> = stratified_sample(
            pairs.iter().map(|(a, _)| (a.image_id.as_str(), a.emotion_class.as_str())),
            fraction,
            cfg.seed,
        )
        .code(EXIT_CONFIG)?;
        pairs.retain(|(a, _)| keep.contains(&a.image_id));
    }

    for p in [&cfg.paths.output, &cfg.paths.completions_log, &cfg.paths.quarantine] {
        ensure_parent(p)?;
    }
    let log_path = &cfg.paths.completions_log;
    let log = if !fresh && log_path.exists() {
        CompletionLog::from_records(jsonl::read_file(log_path).code(EXIT_INVALID)?)
    } else {
        CompletionLog::default()
    };

    let needs_model = cfg.kinds.contains(Kind::Conversation) || cfg.kinds.contains(Kind::Reasoning);
    let (outcome, ledger) = if needs_model {
        let backend = backend_for(cfg, !log.is_empty())?;
        let client = LlmClient::new(backend, cfg.backend.clone()).code(EXIT_CONFIG)?;
        let write_error = Mutex::new(None);
        let append = |c: &emoforge_core::llm::CompletionResult| {
            if let Err(e) = jsonl::append_file(log_path, std::slice::from_ref(c)) {
                write_error.lock().unwrap().get_or_insert(e);
            }
        };
        let outcome = run_pipeline(
            &pairs,
            &taxonomy,
            seeds,
            &client,
            &log,
            GenerateOptions { regenerate: cfg.regenerate },
            &append,
        );
        if let Some(e) = write_error.into_inner().unwrap() {
            return Err(e).code(EXIT_CONFIG);
        }
        (outcome, Some(client.ledger()))
    } else {
        (categorical_only(&pairs, &taxonomy), None)
    };

    let mut dataset = Dataset::new(taxonomy.name(), config_digest(cfg, &taxonomy, seeds));
    dataset.append(outcome.records.iter().cloned()).code(EXIT_INVALID)?;
    let dataset = dataset.select_kinds(&cfg.kinds);
    dataset.write(&cfg.paths.output).code(EXIT_CONFIG)?;
    jsonl::write_atomic(&cfg.paths.quarantine, jsonl::to_string(&outcome.quarantine).as_bytes()).code(EXIT_CONFIG)?;

    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    out!("images: {} ok, {} quarantined", outcome.images_ok(), outcome.quarantine.len());
    out!(
        "records: {} ({})",
        dataset.len(),
        Kind::ALL.iter().map(|k| format!("{k} {}", dataset.count(*k))).collect::<Vec<_>>().join(", ")
    );
    if let Some(ledger) = ledger {
        out!(
            "requests: {} sent, {} replayed, {} regenerated",
            ledger.request_count, outcome.replayed, outcome.regenerated
        );
        out!("tokens: prompt {}, completion {}", ledger.prompt_tokens, ledger.completion_tokens);
        if !ledger.failures_by_class.is_empty() {
            let f: Vec<String> = ledger.failures_by_class.iter().map(|(c, n)| format!("{c}={n}")).collect();
            out!("failed attempts: {}", f.join(", "));
        }
    }
    out!("dataset: {}", cfg.paths.output.display());
    if !outcome.quarantine.is_empty() {
        out!("quarantine: {}", cfg.paths.quarantine.display());
    }

    Ok(if !outcome.backend_failures.is_empty() {
        EXIT_BACKEND
    } else if !outcome.quarantine.is_empty() {
        EXIT_INVALID
    } else {
        EXIT_OK
    })
}
