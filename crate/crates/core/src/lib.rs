//! Emotion visual-instruction data toolkit.
//!
//! The crate covers the full data path for emotion instruction tuning:
//! attribute-conditioned prompt construction, chat-completion driving with
//! bounded concurrency, parsing of generated dialogues into Categorical /
//! Conversation / Reasoning records, dataset assembly (dedup, held-in/held-out
//! splits, stratified fractional sampling) and the evaluation metrics used on
//! model prediction files (accuracy, instruction sensitivity, vote tallies).

pub mod attributes;
pub mod dataset;
pub mod eval;
pub mod instruction;
pub mod jsonl;
pub mod llm;
pub mod pipeline;
pub mod prompt;
pub mod sampling;
pub mod taxonomy;

pub use attributes::{join_inputs, validate_attributes, AttributeRecord, CaptionRecord, JoinOutcome};
pub use dataset::{Dataset, KindSet, Manifest, SplitSpec};
pub use instruction::{InstructionRecord, Kind, Provenance, Turn};
pub use prompt::{GenerationRequest, Message, Role, SeedExample};
pub use taxonomy::{load_taxonomy, Taxonomy};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
