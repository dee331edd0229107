//! End-to-end generation: for each (attributes, caption) pair, a locally
//! synthesized categorical record plus one model call that yields the
//! conversation and reasoning records.
//!
//! Completions already present in the log are replayed instead of sent.
//! An image either produces all three records or lands in quarantine.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeRecord, CaptionRecord};
use crate::instruction::{
    make_categorical, parse_dialogue, reasoning_length_warning, split_conversation_reasoning, validate_record,
    InstructionRecord, Kind, Provenance,
};
use crate::llm::{Backend, CompletionError, CompletionResult, LlmClient};
use crate::prompt::{build_request, GenerationRequest, Message, Role, SeedExample};
use crate::taxonomy::Taxonomy;

/// A reply (or backend failure) that did not yield valid records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub image_id: String,
    pub raw_text: String,
    pub error: String,
}

/// Completions keyed by prompt hash; later entries win.
#[derive(Debug, Clone, Default)]
pub struct CompletionLog {
    by_hash: HashMap<String, CompletionResult>,
}

impl CompletionLog {
    pub fn from_records(records: impl IntoIterator<Item = CompletionResult>) -> Self {
        CompletionLog { by_hash: records.into_iter().map(|r| (r.prompt_hash.clone(), r)).collect() }
    }

    pub fn get(&self, prompt_hash: &str) -> Option<&CompletionResult> {
        self.by_hash.get(prompt_hash)
    }

    pub fn len(&self) -> usize {
        self.by_hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_hash.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerateOptions {
    /// Re-ask once, with a format reminder, when a reply fails to parse.
    pub regenerate: bool,
}

#[derive(Debug, Clone, Default)]
pub struct GenerateOutcome {
    pub records: Vec<InstructionRecord>,
    pub quarantine: Vec<QuarantineEntry>,
    /// Completions obtained from the backend during this run.
    pub new_completions: Vec<CompletionResult>,
    pub backend_failures: Vec<CompletionError>,
    pub replayed: usize,
    pub regenerated: usize,
    pub warnings: Vec<String>,
}

impl GenerateOutcome {
    pub fn images_ok(&self) -> usize {
        self.records.iter().filter(|r| r.kind == Kind::Categorical).count()
    }
}

const REPAIR_PROMPT: &str = "Your previous reply did not follow the required format. Reply again with the two \
conversation questions followed by the one complex question, each written as a line starting with \"Question:\" \
and its answer starting with \"Answer:\".";

/// Follow-up request asking the model to redo a malformed reply.
pub fn repair_request(original: &GenerationRequest, bad_reply: &str) -> GenerationRequest {
    let mut messages = original.messages.clone();
    messages.push(Message { role: Role::Assistant, content: bad_reply.to_string() });
    messages.push(Message { role: Role::User, content: REPAIR_PROMPT.to_string() });
    let prompt_hash = crate::prompt::prompt_hash(&original.system_prompt, &messages, original.kind);
    GenerationRequest { messages, prompt_hash, ..original.clone() }
}

enum Reply {
    Text(CompletionResult),
    Failed(CompletionError),
}

/// Looks each request up in the log and sends the rest as one batch.
fn resolve<B: Backend>(
    requests: &[GenerationRequest],
    client: &LlmClient<B>,
    log: &CompletionLog,
    on_completion: &(dyn Fn(&CompletionResult) + Sync),
    outcome: &mut GenerateOutcome,
) -> Vec<Reply> {
    let mut replies: Vec<Option<Reply>> = requests
        .iter()
        .map(|r| log.get(&r.prompt_hash).cloned().map(Reply::Text))
        .collect();
    outcome.replayed += replies.iter().filter(|r| r.is_some()).count();
    let pending: Vec<usize> = (0..requests.len()).filter(|&i| replies[i].is_none()).collect();
    if !pending.is_empty() {
        let batch: Vec<GenerationRequest> = pending.iter().map(|&i| requests[i].clone()).collect();
        let results = client.complete_batch_with(&batch, |_, r| {
            if let Ok(c) = r {
                on_completion(c);
            }
        });
        for (i, result) in pending.into_iter().zip(results) {
            replies[i] = Some(match result {
                Ok(c) => {
                    outcome.new_completions.push(c.clone());
                    Reply::Text(c)
                }
                Err(e) => {
                    outcome.backend_failures.push(e.clone());
                    Reply::Failed(e)
                }
            });
        }
    }
    replies.into_iter().map(|r| r.expect("every request resolved")).collect()
}

fn records_from_reply(
    completion: &CompletionResult,
    emotion_class: &str,
) -> Result<(InstructionRecord, InstructionRecord), String> {
    let turns = parse_dialogue(&completion.raw_text).map_err(|e| format!("parse: {e}"))?;
    let provenance = Provenance::Generated {
        model_name: completion.model_name.clone(),
        timestamp: completion.timestamp.clone(),
        prompt_hash: completion.prompt_hash.clone(),
    };
    let (conv, reasoning) = split_conversation_reasoning(turns, &completion.image_id, emotion_class, provenance)
        .map_err(|e| format!("split: {e}"))?;
    let invalid = |v: Vec<crate::instruction::Violation>| {
        format!("validate: {}", v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    };
    Ok((validate_record(conv).map_err(invalid)?, validate_record(reasoning).map_err(invalid)?))
}

/// Runs generation over `pairs`. `on_completion` sees each fresh completion
/// as soon as it arrives, before any parsing, so callers can persist it.
pub fn generate<B: Backend>(
    pairs: &[(AttributeRecord, CaptionRecord)],
    taxonomy: &Taxonomy,
    seeds: &[SeedExample],
    client: &LlmClient<B>,
    log: &CompletionLog,
    options: GenerateOptions,
    on_completion: &(dyn Fn(&CompletionResult) + Sync),
) -> GenerateOutcome {
    let mut outcome = GenerateOutcome::default();
    let mut categorical = Vec::with_capacity(pairs.len());
    let mut requests = Vec::with_capacity(pairs.len());
    for (attrs, caption) in pairs {
        let cat = make_categorical(&attrs.image_id, &attrs.emotion_class, taxonomy);
        let req = build_request(Kind::Conversation, caption, attrs, seeds);
        match (cat, req) {
            (Ok(c), Ok(r)) => {
                categorical.push(c);
                requests.push(r);
            }
            (Err(e), _) => outcome.quarantine.push(QuarantineEntry {
                image_id: attrs.image_id.clone(),
                raw_text: String::new(),
                error: format!("categorical: {e}"),
            }),
            (_, Err(e)) => outcome.quarantine.push(QuarantineEntry {
                image_id: attrs.image_id.clone(),
                raw_text: String::new(),
                error: format!("prompt: {e}"),
            }),
        }
    }

    let replies = resolve(&requests, client, log, on_completion, &mut outcome);
    let mut results: Vec<Result<(InstructionRecord, InstructionRecord), QuarantineEntry>> = Vec::new();
    let mut retry = Vec::new();
    for (i, reply) in replies.into_iter().enumerate() {
        let class = &categorical[i].emotion_class;
        results.push(match reply {
            Reply::Text(c) => records_from_reply(&c, class).map_err(|error| {
                if options.regenerate {
                    retry.push((i, repair_request(&requests[i], &c.raw_text)));
                }
                QuarantineEntry { image_id: c.image_id.clone(), raw_text: c.raw_text.clone(), error }
            }),
            Reply::Failed(e) => Err(QuarantineEntry {
                image_id: e.image_id.clone(),
                raw_text: String::new(),
                error: format!("backend: {e}"),
            }),
        });
    }

    if !retry.is_empty() {
        let repair: Vec<GenerationRequest> = retry.iter().map(|(_, r)| r.clone()).collect();
        let replies = resolve(&repair, client, log, on_completion, &mut outcome);
        for ((i, _), reply) in retry.into_iter().zip(replies) {
            if let Reply::Text(c) = reply {
                if let Ok(recs) = records_from_reply(&c, &categorical[i].emotion_class) {
                    results[i] = Ok(recs);
                    outcome.regenerated += 1;
                } else if let Err(q) = &mut results[i] {
                    q.error.push_str(" (regeneration also failed)");
                }
            }
        }
    }

    for (cat, result) in categorical.into_iter().zip(results) {
        match result {
            Ok((conv, reasoning)) => {
                if let Some(w) = reasoning_length_warning(&reasoning, Some(&conv)) {
                    outcome.warnings.push(w);
                }
                outcome.records.extend([cat, conv, reasoning]);
            }
            Err(q) => outcome.quarantine.push(q),
        }
    }
    outcome
}
