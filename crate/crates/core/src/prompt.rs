//! Generation prompts: the fixed system prompt, the per-image context block
//! and few-shot seed examples.
//!
//! Request layout:
//!
//! ```text
//! system     <system prompt>
//! user       Caption: <seed description>          } once per seed
//!            Emotion class: <seed emotion>        }
//!            Other attributes: not provided       }
//! assistant  <seed dialogue or categorical reply> }
//! user       <context block>
//!
//!            <task sentence for the kind>
//! ```
//!
//! Seeds without a `full_dialogue` are rendered as a one-pair dialogue about
//! the seed's emotion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeRecord, CaptionRecord};
use crate::instruction::{render_dialogue, Kind, Turn, PREDICTED_PREFIX};
use crate::jsonl::{self, JsonlError};
use crate::sha256_hex;

const SYSTEM_PROMPT: &str = include_str!("../resources/system_prompt.txt");
/// SHA-256 of the system prompt resource, pinned at the time it was written.
pub const SYSTEM_PROMPT_SHA256: &str = include_str!("../resources/system_prompt.sha256");
pub const SYSTEM_PROMPT_VERSION: &str = "v1";
const BUILTIN_SEEDS: &str = include_str!("../resources/seed_examples.jsonl");

pub const DEFAULT_SEEDS_PER_REQUEST: usize = 3;

pub fn build_system_prompt() -> &'static str {
    SYSTEM_PROMPT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    fn new(role: Role, content: impl Into<String>) -> Self {
        Message { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedExample {
    pub description: String,
    pub emotion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_dialogue: Option<Vec<Turn>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SeedError {
    #[error("description must not be empty")]
    EmptyDescription,
    #[error("emotion must not be empty")]
    EmptyEmotion,
    #[error("full_dialogue pair {0} has an empty question or answer")]
    EmptyPair(usize),
}

impl SeedExample {
    pub fn validate(&self) -> Result<(), SeedError> {
        if self.description.trim().is_empty() {
            return Err(SeedError::EmptyDescription);
        }
        if self.emotion.trim().is_empty() {
            return Err(SeedError::EmptyEmotion);
        }
        if let Some(d) = &self.full_dialogue {
            if let Some(i) = d
                .iter()
                .position(|t| t.question.trim().is_empty() || t.answer.trim().is_empty())
            {
                return Err(SeedError::EmptyPair(i + 1));
            }
        }
        Ok(())
    }
}

fn parse_seeds(text: &str, origin: &str) -> Result<Vec<SeedExample>, JsonlError> {
    let mut out = Vec::new();
    for (line, parsed) in jsonl::parse_lines::<SeedExample>(text) {
        let record_err = |message: String| JsonlError::Record { path: origin.to_string(), line, message };
        let seed = parsed.map_err(|e| record_err(e.to_string()))?;
        seed.validate().map_err(|e| record_err(e.to_string()))?;
        out.push(seed);
    }
    Ok(out)
}

/// Reads a seed-example file; malformed rows are reported with their line.
pub fn load_seed_examples(path: &Path) -> Result<Vec<SeedExample>, JsonlError> {
    let text = jsonl::read_text(path)?;
    parse_seeds(&text, &path.display().to_string())
}

/// The shipped descriptor examples (16 rows across six emotions).
pub fn builtin_seed_examples() -> Vec<SeedExample> {
    parse_seeds(BUILTIN_SEEDS, "seed_examples.jsonl").expect("built-in seeds are valid")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("image_id mismatch: caption for {caption:?}, attributes for {attributes:?}")]
pub struct ContextError {
    pub caption: String,
    pub attributes: String,
}

fn or_none(v: Option<&str>) -> &str {
    match v.map(str::trim) {
        Some(s) if !s.is_empty() => s,
        _ => "none",
    }
}

/// Caption followed by the seven attributes in fixed order.
pub fn build_context_block(caption: &CaptionRecord, attributes: &AttributeRecord) -> Result<String, ContextError> {
    if caption.image_id != attributes.image_id {
        return Err(ContextError {
            caption: caption.image_id.clone(),
            attributes: attributes.image_id.clone(),
        });
    }
    let objects = attributes.object_class.join(", ");
    Ok(format!(
        "Caption: {}\n\
         Emotion class: {}\n\
         Brightness: {}\n\
         Colorfulness: {}\n\
         Scene type: {}\n\
         Object class: {}\n\
         Facial expression: {}\n\
         Human action: {}",
        caption.caption.trim(),
        attributes.emotion_class.trim(),
        attributes.brightness,
        attributes.colorfulness,
        or_none(Some(&attributes.scene_type)),
        or_none(Some(&objects)),
        or_none(attributes.facial_expression.as_deref()),
        or_none(attributes.human_action.as_deref()),
    ))
}

fn task_sentence(kind: Kind) -> &'static str {
    match kind {
        Kind::Categorical => "Name the emotion this image conveys. Reply in the format: Predicted emotion: <emotion>",
        Kind::Conversation => {
            "Write the two conversation questions and then the one complex question, each followed by its answer, \
             using the format Question: / Answer:."
        }
        Kind::Reasoning => {
            "Write one complex question about the emotional context of this image and a detailed answer, \
             using the format Question: / Answer:."
        }
    }
}

fn seed_user_turn(seed: &SeedExample) -> String {
    format!(
        "Caption: {}\nEmotion class: {}\nOther attributes: not provided",
        seed.description.trim(),
        seed.emotion.trim()
    )
}

fn seed_assistant_turn(seed: &SeedExample, kind: Kind) -> String {
    let emotion = seed.emotion.trim();
    match (kind, &seed.full_dialogue) {
        (Kind::Categorical, _) => format!("{PREDICTED_PREFIX}{emotion}"),
        (_, Some(d)) if !d.is_empty() => render_dialogue(d),
        _ => render_dialogue(&[Turn::new(
            "What emotion does this image convey?",
            format!("The image conveys {}. {}", emotion.to_lowercase(), seed.description.trim()),
        )]),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub messages: Vec<Message>,
    pub kind: Kind,
    pub image_id: String,
    pub prompt_hash: String,
}

/// Digest over kind, system prompt and every message, length-prefixed so
/// that field boundaries cannot shift.
pub fn prompt_hash(system_prompt: &str, messages: &[Message], kind: Kind) -> String {
    let mut buf = Vec::new();
    let mut put = |s: &str| {
        buf.extend_from_slice(&(s.len() as u64).to_le_bytes());
        buf.extend_from_slice(s.as_bytes());
    };
    put(kind.as_str());
    put(system_prompt);
    for m in messages {
        put(m.role.as_str());
        put(&m.content);
    }
    sha256_hex(&buf)
}

pub fn build_request(
    kind: Kind,
    caption: &CaptionRecord,
    attributes: &AttributeRecord,
    seeds: &[SeedExample],
) -> Result<GenerationRequest, ContextError> {
    let context = build_context_block(caption, attributes)?;
    let system = build_system_prompt();
    let mut messages = Vec::with_capacity(2 + 2 * seeds.len());
    messages.push(Message::new(Role::System, system));
    for seed in seeds {
        messages.push(Message::new(Role::User, seed_user_turn(seed)));
        messages.push(Message::new(Role::Assistant, seed_assistant_turn(seed, kind)));
    }
    messages.push(Message::new(Role::User, format!("{context}\n\n{}", task_sentence(kind))));
    let prompt_hash = prompt_hash(system, &messages, kind);
    Ok(GenerationRequest {
        system_prompt: system.to_string(),
        messages,
        kind,
        image_id: attributes.image_id.clone(),
        prompt_hash,
    })
}

impl GenerationRequest {
    /// Content of the final user turn.
    pub fn final_user_message(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }

    /// Value of a `Name: value` line, taken from the latest user turn that
    /// has one (a repair request ends with a reminder, not the context).
    pub fn context_field(&self, name: &str) -> Option<&str> {
        let prefix = format!("{name}: ");
        self.messages
            .iter()
            .rev()
            .filter(|m| m.role == Role::User)
            .find_map(|m| m.content.lines().find_map(|l| l.strip_prefix(prefix.as_str())))
            .map(str::trim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::sample_record;

    fn caption(id: &str, text: &str) -> CaptionRecord {
        CaptionRecord { image_id: id.into(), caption: text.into() }
    }

    #[test]
    fn system_prompt_opening_and_sections() {
        let p = build_system_prompt();
        assert!(p.starts_with("You are an AI visual assistant, and you are seeing a single image."));
        assert!(p.contains("Design two questions for a conversation"));
        assert!(p.contains("include one complex question"));
        assert!(p.contains("The range of brightness is from 0 (darkest) to 1 (brightest)"));
    }

    #[test]
    fn system_prompt_checksum_pinned() {
        assert_eq!(sha256_hex(build_system_prompt().as_bytes()), SYSTEM_PROMPT_SHA256.trim());
    }

    #[test]
    fn context_block_lines() {
        let mut a = sample_record("x", "joy");
        a.brightness = 0.8;
        let block = build_context_block(&caption("x", "a smiling child"), &a).unwrap();
        let lines: Vec<&str> = block.lines().collect();
        assert_eq!(lines[0], "Caption: a smiling child");
        assert!(lines.contains(&"Brightness: 0.8"));
        assert!(lines.contains(&"Facial expression: none"));
        assert!(lines.contains(&"Human action: none"));
        assert_eq!(lines.len(), 8);
    }

    #[test]
    fn context_block_order() {
        let a = sample_record("x", "joy");
        let block = build_context_block(&caption("x", "c"), &a).unwrap();
        let names: Vec<&str> = block.lines().map(|l| l.split(':').next().unwrap()).collect();
        assert_eq!(
            names,
            [
                "Caption",
                "Emotion class",
                "Brightness",
                "Colorfulness",
                "Scene type",
                "Object class",
                "Facial expression",
                "Human action"
            ]
        );
    }

    #[test]
    fn context_block_id_mismatch() {
        let err = build_context_block(&caption("y", "c"), &sample_record("x", "joy")).unwrap_err();
        assert_eq!(err.caption, "y");
    }

    #[test]
    fn request_layout() {
        let seeds = builtin_seed_examples();
        let a = sample_record("x", "joy");
        let c = caption("x", "c");
        let r = build_request(Kind::Conversation, &c, &a, &seeds[..2]).unwrap();
        assert_eq!(r.messages.len(), 6);
        assert_eq!(r.messages[0].role, Role::System);
        let roles: Vec<Role> = r.messages.iter().map(|m| m.role).collect();
        assert_eq!(roles[1..5], [Role::User, Role::Assistant, Role::User, Role::Assistant]);
        assert_eq!(r.context_field("Emotion class"), Some("joy"));

        let r0 = build_request(Kind::Categorical, &c, &a, &[]).unwrap();
        assert_eq!(r0.messages.len(), 2);
    }

    #[test]
    fn request_hash_deterministic_and_kind_sensitive() {
        let seeds = builtin_seed_examples();
        let a = sample_record("x", "joy");
        let c = caption("x", "c");
        let r1 = build_request(Kind::Conversation, &c, &a, &seeds[..3]).unwrap();
        let r2 = build_request(Kind::Conversation, &c, &a, &seeds[..3]).unwrap();
        assert_eq!(r1, r2);
        let r3 = build_request(Kind::Reasoning, &c, &a, &seeds[..3]).unwrap();
        assert_ne!(r1.prompt_hash, r3.prompt_hash);
        assert_eq!(r1.prompt_hash, prompt_hash(&r1.system_prompt, &r1.messages, r1.kind));
    }

    #[test]
    fn every_kind_carries_full_context() {
        let a = sample_record("x", "joy");
        let c = caption("x", "c");
        for kind in Kind::ALL {
            let r = build_request(kind, &c, &a, &builtin_seed_examples()[..3]).unwrap();
            let last = r.final_user_message();
            for name in [
                "Emotion class:",
                "Brightness:",
                "Colorfulness:",
                "Scene type:",
                "Object class:",
                "Facial expression:",
                "Human action:",
            ] {
                assert!(last.contains(name), "{kind}: {name}");
            }
        }
    }

    #[test]
    fn builtin_seeds_reproduce_descriptor_table() {
        let seeds = builtin_seed_examples();
        assert_eq!(seeds.len(), 16);
        assert!(seeds.contains(&SeedExample {
            description: "Unleashed Fury: A portrait of raw, unfiltered anger etched on the subject's face.".into(),
            emotion: "Anger".into(),
            full_dialogue: None,
        }));
        assert!(seeds
            .iter()
            .any(|s| s.description == "Overflowing with joy, like a puppy at a park!" && s.emotion == "Joy"));
    }

    #[test]
    fn seed_file_errors_carry_line_numbers() {
        let err = parse_seeds("{\"description\":\"d\",\"emotion\":\"Joy\"}\n{\"description\":\"\",\"emotion\":\"Joy\"}\n", "f")
            .unwrap_err();
        assert_eq!(err.line(), Some(2));
        let err = parse_seeds("not json\n", "f").unwrap_err();
        assert_eq!(err.line(), Some(1));
        let err = parse_seeds(
            r#"{"description":"d","emotion":"Joy","full_dialogue":[{"question":"q","answer":""}]}"#,
            "f",
        )
        .unwrap_err();
        assert!(err.to_string().contains("pair 1"));
    }

    #[test]
    fn empty_seed_file() {
        let dir = std::env::temp_dir().join(format!("emoforge-seeds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_seed_examples(&path).unwrap().is_empty());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
