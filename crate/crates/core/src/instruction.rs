//! Instruction records and the `Question:` / `Answer:` dialogue grammar.
//!
//! # Marker table
//!
//! A line opens a question or an answer when, after optional leading
//! whitespace, it starts with one of the markers below (case-insensitive).
//! Text after the marker on the same line is the start of the content.
//!
//! | form                   | examples                                  |
//! |------------------------|-------------------------------------------|
//! | plain                  | `Question:` `Answer:` `Q:` `A:`           |
//! | numbered               | `Question 1:` `Q2:` `Answer #3:`          |
//! | bold / underline       | `**Question:**` `**Q1**:` `__Answer:__`   |
//! | heading / list prefix  | `### Question:` `- Q:` `1. Question:`     |
//!
//! Bold wrappers must be balanced, either around the word (`**Q1**:`) or
//! around word and colon (`**Q1:**`). Anything else is ordinary text. Text
//! before the first marker is ignored; after that, content extends over
//! following lines until the next marker.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::taxonomy::Taxonomy;

pub const RECORD_SCHEMA_VERSION: u32 = 1;
pub const PREDICTED_PREFIX: &str = "Predicted emotion: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Categorical,
    Conversation,
    Reasoning,
}

impl Kind {
    pub const ALL: [Kind; 3] = [Kind::Categorical, Kind::Conversation, Kind::Reasoning];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Categorical => "categorical",
            Kind::Conversation => "conversation",
            Kind::Reasoning => "reasoning",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid kind {0:?}: expected categorical, conversation or reasoning")]
pub struct InvalidKind(pub String);

impl FromStr for Kind {
    type Err = InvalidKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "categorical" => Ok(Kind::Categorical),
            "conversation" => Ok(Kind::Conversation),
            "reasoning" => Ok(Kind::Reasoning),
            _ => Err(InvalidKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Turn {
    pub question: String,
    pub answer: String,
}

impl Turn {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        Turn { question: question.into(), answer: answer.into() }
    }
}

/// Where a record came from. Serialized as the string `"synthesized-local"`
/// or as an object with model_name, timestamp and prompt_hash.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Provenance {
    SynthesizedLocal,
    Generated { model_name: String, timestamp: String, prompt_hash: String },
}

const LOCAL_TAG: &str = "synthesized-local";

impl Serialize for Provenance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Provenance::SynthesizedLocal => s.serialize_str(LOCAL_TAG),
            Provenance::Generated { model_name, timestamp, prompt_hash } => {
                let mut m = s.serialize_map(Some(3))?;
                m.serialize_entry("model_name", model_name)?;
                m.serialize_entry("timestamp", timestamp)?;
                m.serialize_entry("prompt_hash", prompt_hash)?;
                m.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Provenance;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "\"{LOCAL_TAG}\" or a provenance object")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Provenance, E> {
                if v == LOCAL_TAG {
                    Ok(Provenance::SynthesizedLocal)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Provenance, A::Error> {
                let (mut model_name, mut timestamp, mut prompt_hash) = (None, None, None);
                while let Some(key) = map.next_key::<String>()? {
                    let slot = match key.as_str() {
                        "model_name" => &mut model_name,
                        "timestamp" => &mut timestamp,
                        "prompt_hash" => &mut prompt_hash,
                        other => return Err(de::Error::unknown_field(other, &["model_name", "timestamp", "prompt_hash"])),
                    };
                    *slot = Some(map.next_value::<String>()?);
                }
                Ok(Provenance::Generated {
                    model_name: model_name.ok_or_else(|| de::Error::missing_field("model_name"))?,
                    timestamp: timestamp.ok_or_else(|| de::Error::missing_field("timestamp"))?,
                    prompt_hash: prompt_hash.ok_or_else(|| de::Error::missing_field("prompt_hash"))?,
                })
            }
        }
        d.deserialize_any(V)
    }
}

/// One generated instruction unit. Field order is the canonical key order of
/// dataset files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionRecord {
    pub schema_version: u32,
    pub image_id: String,
    pub kind: Kind,
    pub emotion_class: String,
    /// Reserved for a basic/advanced interaction tag; always empty today.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_kind: Option<String>,
    pub turns: Vec<Turn>,
    pub provenance: Provenance,
}

impl InstructionRecord {
    pub fn new(
        image_id: impl Into<String>,
        kind: Kind,
        emotion_class: impl Into<String>,
        turns: Vec<Turn>,
        provenance: Provenance,
    ) -> Self {
        InstructionRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            image_id: image_id.into(),
            kind,
            emotion_class: emotion_class.into(),
            sub_kind: None,
            turns,
            provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DialogueError {
    #[error("answer marker without an open question at byte {offset}")]
    AnswerBeforeQuestion { offset: usize },
    #[error("question at byte {offset} has no answer")]
    QuestionWithoutAnswer { offset: usize },
    #[error("empty question at byte {offset}")]
    EmptyQuestion { offset: usize },
    #[error("empty answer at byte {offset}")]
    EmptyAnswer { offset: usize },
    #[error("no question/answer pairs found (scanned {offset} bytes)")]
    NoPairs { offset: usize },
}

impl DialogueError {
    pub fn offset(&self) -> usize {
        match *self {
            DialogueError::AnswerBeforeQuestion { offset }
            | DialogueError::QuestionWithoutAnswer { offset }
            | DialogueError::EmptyQuestion { offset }
            | DialogueError::EmptyAnswer { offset }
            | DialogueError::NoPairs { offset } => offset,
        }
    }

    /// Stable snake_case name of the error class.
    pub fn class(&self) -> &'static str {
        match self {
            DialogueError::AnswerBeforeQuestion { .. } => "answer_before_question",
            DialogueError::QuestionWithoutAnswer { .. } => "question_without_answer",
            DialogueError::EmptyQuestion { .. } => "empty_question",
            DialogueError::EmptyAnswer { .. } => "empty_answer",
            DialogueError::NoPairs { .. } => "no_pairs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Question,
    Answer,
}

static MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^[ \t]*(?:#{1,6}[ \t]*)?(?:[-*][ \t]+|\d{1,3}[.)][ \t]*)?(\*\*|__)?(question|answer|q|a)(?:[ \t]*#?[ \t]*\d{1,3})?[ \t]*(\*\*|__)?[ \t]*:[ \t]*(\*\*|__)?",
    )
    .unwrap()
});

/// Classifies `line`, returning the marker and the byte length it spans.
fn marker(line: &str) -> Option<(Marker, usize)> {
    let caps = MARKER.captures(line)?;
    let open = caps.get(1).map(|m| m.as_str());
    let before_colon = caps.get(3).map(|m| m.as_str());
    let after_colon = caps.get(4).map(|m| m.as_str());
    let balanced = match open {
        None => before_colon.is_none() && after_colon.is_none(),
        Some(o) => match (before_colon, after_colon) {
            (Some(c), None) | (None, Some(c)) => c == o,
            _ => false,
        },
    };
    if !balanced {
        return None;
    }
    let word = caps[2].to_ascii_lowercase();
    let kind = if word.starts_with('q') { Marker::Question } else { Marker::Answer };
    Some((kind, caps.get(0).unwrap().end()))
}

struct Open {
    offset: usize,
    text: String,
}

impl Open {
    fn new(offset: usize, first: &str) -> Self {
        Open { offset, text: first.to_string() }
    }

    fn push_line(&mut self, line: &str) {
        self.text.push('\n');
        self.text.push_str(line);
    }
}

enum State {
    Preamble,
    Question(Open),
    Answer(Open, Open),
}

fn close(question: Open, answer: Open) -> Result<Turn, DialogueError> {
    let q = question.text.trim();
    if q.is_empty() {
        return Err(DialogueError::EmptyQuestion { offset: question.offset });
    }
    let a = answer.text.trim();
    if a.is_empty() {
        return Err(DialogueError::EmptyAnswer { offset: answer.offset });
    }
    Ok(Turn::new(q, a))
}

/// Parses a `Question:` / `Answer:` dialogue into ordered turns.
pub fn parse_dialogue(raw: &str) -> Result<Vec<Turn>, DialogueError> {
    let mut turns = Vec::new();
    let mut state = State::Preamble;
    let mut offset = 0;
    for segment in raw.split_inclusive('\n') {
        let line_start = offset;
        offset += segment.len();
        let line = segment.trim_end_matches(['\n', '\r']);
        state = match (marker(line), state) {
            (Some((Marker::Question, end)), State::Preamble) => State::Question(Open::new(line_start, &line[end..])),
            (Some((Marker::Question, _)), State::Question(q)) => {
                return Err(DialogueError::QuestionWithoutAnswer { offset: q.offset });
            }
            (Some((Marker::Question, end)), State::Answer(q, a)) => {
                turns.push(close(q, a)?);
                State::Question(Open::new(line_start, &line[end..]))
            }
            (Some((Marker::Answer, end)), State::Question(q)) => State::Answer(q, Open::new(line_start, &line[end..])),
            (Some((Marker::Answer, _)), State::Preamble | State::Answer(..)) => {
                return Err(DialogueError::AnswerBeforeQuestion { offset: line_start });
            }
            (None, State::Preamble) => State::Preamble,
            (None, State::Question(mut q)) => {
                q.push_line(line);
                State::Question(q)
            }
            (None, State::Answer(q, mut a)) => {
                a.push_line(line);
                State::Answer(q, a)
            }
        };
    }
    match state {
        State::Preamble => {}
        State::Question(q) => return Err(DialogueError::QuestionWithoutAnswer { offset: q.offset }),
        State::Answer(q, a) => turns.push(close(q, a)?),
    }
    if turns.is_empty() {
        return Err(DialogueError::NoPairs { offset: raw.len() });
    }
    Ok(turns)
}

/// Inverse of [`parse_dialogue`] for well-formed turns.
pub fn render_dialogue(turns: &[Turn]) -> String {
    turns
        .iter()
        .map(|t| format!("Question: {}\nAnswer: {}\n", t.question, t.answer))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("reply has {found} question/answer pairs, at least 3 are needed to split conversation and reasoning")]
pub struct SplitError {
    pub found: usize,
}

/// The last pair is the complex (reasoning) question; everything before it
/// is the conversation.
pub fn split_conversation_reasoning(
    mut turns: Vec<Turn>,
    image_id: &str,
    emotion_class: &str,
    provenance: Provenance,
) -> Result<(InstructionRecord, InstructionRecord), SplitError> {
    if turns.len() < 3 {
        return Err(SplitError { found: turns.len() });
    }
    let complex = turns.pop().expect("len >= 3");
    let conversation =
        InstructionRecord::new(image_id, Kind::Conversation, emotion_class, turns, provenance.clone());
    let reasoning = InstructionRecord::new(image_id, Kind::Reasoning, emotion_class, vec![complex], provenance);
    Ok((conversation, reasoning))
}

/// The two paraphrased classification instructions used for sensitivity runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phrasing {
    /// "... Respond in the format: Predicted emotion:"
    First,
    /// "... Please reply in the following format: Predict emotion:"
    Second,
}

pub fn classification_question(labels: &[String], phrasing: Phrasing) -> String {
    let options = labels.join(", ");
    match phrasing {
        Phrasing::First => format!(
            "From the given options: {options}, identify the emotion that most accurately reflects the image. \
             Ensure your selection is confined to the listed options. Respond in the format: Predicted emotion:"
        ),
        Phrasing::Second => format!(
            "Please choose the emotion that best corresponds to the image from the following options: {options}. \
             (Do not provide answers beyond the provided candidates.) Please reply in the following format: Predict emotion:"
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("emotion class {label:?} is not in taxonomy {taxonomy:?}")]
pub struct CategoricalError {
    pub label: String,
    pub taxonomy: String,
}

/// Builds the single-turn categorical record locally, no model involved.
pub fn make_categorical(
    image_id: &str,
    emotion_class: &str,
    taxonomy: &Taxonomy,
) -> Result<InstructionRecord, CategoricalError> {
    let label = taxonomy.resolve(emotion_class).ok_or_else(|| CategoricalError {
        label: emotion_class.to_string(),
        taxonomy: taxonomy.name().to_string(),
    })?;
    let turn = Turn::new(
        classification_question(taxonomy.labels(), Phrasing::First),
        format!("{PREDICTED_PREFIX}{label}"),
    );
    Ok(InstructionRecord::new(image_id, Kind::Categorical, label, vec![turn], Provenance::SynthesizedLocal))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("image_id must not be empty")]
    EmptyImageId,
    #[error("emotion_class must not be empty")]
    EmptyEmotionClass,
    #[error("categorical requires exactly 1 turn, found {0}")]
    CategoricalTurnCount(usize),
    #[error("categorical answer must begin with \"Predicted emotion: \"")]
    MissingPredictedPrefix,
    #[error("conversation requires ≥2 turns, found {0}")]
    ConversationTooShort(usize),
    #[error("reasoning requires exactly 1 turn, found {0}")]
    ReasoningTurnCount(usize),
    #[error("turn {0}: empty question")]
    EmptyQuestion(usize),
    #[error("turn {0}: empty answer")]
    EmptyAnswer(usize),
    #[error("unsupported schema_version {0}")]
    SchemaVersion(u32),
}

/// Checks every record invariant and reports all violations found.
pub fn validate_record(record: InstructionRecord) -> Result<InstructionRecord, Vec<Violation>> {
    let mut v = Vec::new();
    if record.schema_version != RECORD_SCHEMA_VERSION {
        v.push(Violation::SchemaVersion(record.schema_version));
    }
    if record.image_id.trim().is_empty() {
        v.push(Violation::EmptyImageId);
    }
    if record.emotion_class.trim().is_empty() {
        v.push(Violation::EmptyEmotionClass);
    }
    let n = record.turns.len();
    match record.kind {
        Kind::Categorical => {
            if n != 1 {
                v.push(Violation::CategoricalTurnCount(n));
            }
            if let Some(t) = record.turns.first() {
                if !t.answer.starts_with(PREDICTED_PREFIX) {
                    v.push(Violation::MissingPredictedPrefix);
                }
            }
        }
        Kind::Conversation if n < 2 => v.push(Violation::ConversationTooShort(n)),
        Kind::Reasoning if n != 1 => v.push(Violation::ReasoningTurnCount(n)),
        _ => {}
    }
    for (i, t) in record.turns.iter().enumerate() {
        if t.question.trim().is_empty() {
            v.push(Violation::EmptyQuestion(i + 1));
        }
        if t.answer.trim().is_empty() {
            v.push(Violation::EmptyAnswer(i + 1));
        }
    }
    if v.is_empty() {
        Ok(record)
    } else {
        Err(v)
    }
}

/// Warns when the complex answer is shorter than the median answer of the
/// same image's conversation. Lengths are in characters; the floor is 1.
pub fn reasoning_length_warning(
    reasoning: &InstructionRecord,
    conversation: Option<&InstructionRecord>,
) -> Option<String> {
    let mut lens: Vec<usize> = conversation
        .map(|c| c.turns.iter().map(|t| t.answer.chars().count()).collect())
        .unwrap_or_default();
    lens.sort_unstable();
    let median = match lens.len() {
        0 => 1.0,
        n if n % 2 == 1 => lens[n / 2] as f64,
        n => (lens[n / 2 - 1] + lens[n / 2]) as f64 / 2.0,
    }
    .max(1.0);
    let len = reasoning.turns.first().map_or(0, |t| t.answer.chars().count());
    ((len as f64) < median).then(|| {
        format!(
            "{}: reasoning answer has {len} chars, below the conversation median {median}",
            reasoning.image_id
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::load_taxonomy;

    #[test]
    fn single_pair() {
        let turns = parse_dialogue("Question: What is shown?\nAnswer: A dog.").unwrap();
        assert_eq!(turns, vec![Turn::new("What is shown?", "A dog.")]);
    }

    #[test]
    fn orphan_answer() {
        assert_eq!(
            parse_dialogue("Answer: orphan"),
            Err(DialogueError::AnswerBeforeQuestion { offset: 0 })
        );
    }

    // Fixture checked by hand against the grammar: two single-line pairs, then
    // a pair whose answer spans three lines (including a blank one).
    #[test]
    fn multi_line_answer() {
        let raw = "Question: Who is in the photo?\n\
                   Answer: A child.\n\
                   \n\
                   Question: What colour is the kite?\n\
                   Answer: Red.\n\
                   \n\
                   Question: Why might the scene feel joyful?\n\
                   Answer: The child is laughing.\n\
                   \n\
                   Bright sunlight adds warmth.\n";
        let turns = parse_dialogue(raw).unwrap();
        assert_eq!(turns.len(), 3);
        assert_eq!(turns[1], Turn::new("What colour is the kite?", "Red."));
        assert_eq!(turns[2].answer, "The child is laughing.\n\nBright sunlight adds warmth.");
    }

    #[test]
    fn marker_variants() {
        let raw = "Sure, here you go.\n\
                   **Question 1:** Is it dark?\n\
                   **Answer 1**: No.\n\
                   Q2: Any people?\n\
                   A2: One.\n\
                   ### question #3:\n\
                   Why calm?\n\
                   - a: Soft light.\r\n";
        let turns = parse_dialogue(raw).unwrap();
        assert_eq!(
            turns,
            vec![
                Turn::new("Is it dark?", "No."),
                Turn::new("Any people?", "One."),
                Turn::new("Why calm?", "Soft light."),
            ]
        );
    }

    #[test]
    fn unbalanced_bold_is_not_a_marker() {
        assert!(marker("**Question: hi").is_none());
        assert!(marker("Question** : hi").is_none());
        assert!(marker("Answer the call").is_none());
        assert!(marker("Answers: many").is_none());
    }

    #[test]
    fn error_offsets() {
        let raw = "Question: one\nAnswer: yes\nQuestion: two\n";
        assert_eq!(parse_dialogue(raw), Err(DialogueError::QuestionWithoutAnswer { offset: 26 }));
        let raw = "Question: one\nQuestion: two\nAnswer: x";
        assert_eq!(parse_dialogue(raw), Err(DialogueError::QuestionWithoutAnswer { offset: 0 }));
        let raw = "Question: one\nAnswer: a\nAnswer: b";
        assert_eq!(parse_dialogue(raw), Err(DialogueError::AnswerBeforeQuestion { offset: 24 }));
        assert_eq!(parse_dialogue("just prose"), Err(DialogueError::NoPairs { offset: 10 }));
        assert_eq!(parse_dialogue("Question:\nAnswer: x"), Err(DialogueError::EmptyQuestion { offset: 0 }));
        assert_eq!(parse_dialogue("Question: q\nAnswer:  \n"), Err(DialogueError::EmptyAnswer { offset: 12 }));
    }

    #[test]
    fn split_rules() {
        let pairs = |n: usize| (0..n).map(|i| Turn::new(format!("q{i}"), format!("a{i}"))).collect::<Vec<_>>();
        let (c, r) = split_conversation_reasoning(pairs(3), "i", "joy", Provenance::SynthesizedLocal).unwrap();
        assert_eq!((c.turns.len(), r.turns.len()), (2, 1));
        assert_eq!(r.turns[0].question, "q2");
        let (c, r) = split_conversation_reasoning(pairs(4), "i", "joy", Provenance::SynthesizedLocal).unwrap();
        assert_eq!((c.turns.len(), r.turns.len()), (3, 1));
        assert_eq!(
            split_conversation_reasoning(pairs(2), "i", "joy", Provenance::SynthesizedLocal).unwrap_err(),
            SplitError { found: 2 }
        );
    }

    #[test]
    fn categorical_record() {
        let t = load_taxonomy("emotion6").unwrap();
        let r = make_categorical("img1", "sadness", &t).unwrap();
        assert_eq!(r.turns[0].answer, "Predicted emotion: sadness");
        assert_eq!(r.provenance, Provenance::SynthesizedLocal);
        let words: Vec<String> = r.turns[0]
            .question
            .split(|c: char| !c.is_alphanumeric())
            .map(str::to_lowercase)
            .collect();
        for label in t.labels() {
            assert_eq!(words.iter().filter(|w| *w == label).count(), 1, "{label}");
        }
        assert!(validate_record(r).is_ok());
    }

    #[test]
    fn categorical_unknown_label() {
        let t = load_taxonomy("emoset").unwrap();
        assert!(make_categorical("img1", "joy", &t).is_err());
    }

    #[test]
    fn categorical_is_injective() {
        let t = load_taxonomy("webemo").unwrap();
        let answers: std::collections::HashSet<_> = t
            .labels()
            .iter()
            .map(|l| make_categorical("x", l, &t).unwrap().turns[0].answer.clone())
            .collect();
        assert_eq!(answers.len(), t.len());
        assert_eq!(make_categorical("x", "rage", &t), make_categorical("x", "rage", &t));
    }

    #[test]
    fn violations_are_enumerated() {
        let rec = InstructionRecord::new("", Kind::Conversation, "joy", vec![Turn::new("q", "")], Provenance::SynthesizedLocal);
        let v = validate_record(rec).unwrap_err();
        assert_eq!(v, vec![Violation::EmptyImageId, Violation::ConversationTooShort(1), Violation::EmptyAnswer(1)]);
        assert_eq!(v[1].to_string(), "conversation requires ≥2 turns, found 1");

        let rec = InstructionRecord::new("i", Kind::Categorical, "joy", vec![Turn::new("q", "joy")], Provenance::SynthesizedLocal);
        assert_eq!(validate_record(rec).unwrap_err(), vec![Violation::MissingPredictedPrefix]);

        let rec = InstructionRecord::new("i", Kind::Reasoning, "joy", vec![Turn::new("why?", "because")], Provenance::SynthesizedLocal);
        assert!(validate_record(rec).is_ok());
    }

    #[test]
    fn provenance_serde() {
        let local = serde_json::to_string(&Provenance::SynthesizedLocal).unwrap();
        assert_eq!(local, "\"synthesized-local\"");
        let g = Provenance::Generated { model_name: "gpt-4".into(), timestamp: "t".into(), prompt_hash: "h".into() };
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"model_name":"gpt-4","timestamp":"t","prompt_hash":"h"}"#);
        assert_eq!(serde_json::from_str::<Provenance>(&s).unwrap(), g);
        assert!(serde_json::from_str::<Provenance>("\"other\"").is_err());
    }

    #[test]
    fn reasoning_length() {
        let conv = InstructionRecord::new(
            "i",
            Kind::Conversation,
            "joy",
            vec![Turn::new("q", "abcd"), Turn::new("q", "abcdefgh")],
            Provenance::SynthesizedLocal,
        );
        let short = InstructionRecord::new("i", Kind::Reasoning, "joy", vec![Turn::new("q", "abc")], Provenance::SynthesizedLocal);
        let long = InstructionRecord::new("i", Kind::Reasoning, "joy", vec![Turn::new("q", "abcdef")], Provenance::SynthesizedLocal);
        assert!(reasoning_length_warning(&short, Some(&conv)).is_some());
        assert!(reasoning_length_warning(&long, Some(&conv)).is_none());
        assert!(reasoning_length_warning(&short, None).is_none());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("Reasoning".parse::<Kind>(), Ok(Kind::Reasoning));
        assert!("summary".parse::<Kind>().is_err());
    }
}
