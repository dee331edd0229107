//! Deterministic offline backend.
//!
//! Replies are a pure function of the request's prompt hash: two basic
//! questions built from the context block, then one complex question whose
//! answer names the emotion class. A corruption rate turns a fraction of
//! replies into grammar violations (or too few pairs) for parser fuzzing.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Backend, BackendConfig, BackendError, BackendReply, CompletionResult};
use crate::instruction::{render_dialogue, Turn};
use crate::prompt::GenerationRequest;

pub const MOCK_MODEL: &str = "mock";
const MOCK_TIMESTAMP: &str = "1970-01-01T00:00:00.000Z";

fn rng_for(request: &GenerationRequest, stream: u8) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    let digest = hex::decode(&request.prompt_hash).unwrap_or_else(|_| request.prompt_hash.as_bytes().to_vec());
    for (i, b) in digest.iter().take(32).enumerate() {
        seed[i] = *b;
    }
    seed[31] ^= stream;
    ChaCha8Rng::from_seed(seed)
}

fn level(value: Option<f64>, low: &'static str, mid: &'static str, high: &'static str) -> &'static str {
    match value {
        Some(v) if v < 0.35 => low,
        Some(v) if v > 0.65 => high,
        _ => mid,
    }
}

fn present(v: Option<&str>) -> Option<&str> {
    v.filter(|s| !s.is_empty() && *s != "none")
}

fn dialogue(request: &GenerationRequest, rng: &mut ChaCha8Rng) -> Vec<Turn> {
    let field = |name| request.context_field(name);
    let caption = field("Caption").unwrap_or("the image");
    let emotion = field("Emotion class").unwrap_or("an emotion");
    let scene = present(field("Scene type")).unwrap_or("nondescript");
    let objects = present(field("Object class")).unwrap_or("no distinct objects");
    let brightness = field("Brightness").and_then(|v| v.parse().ok());
    let colorfulness = field("Colorfulness").and_then(|v| v.parse().ok());
    let face = present(field("Facial expression"));
    let action = present(field("Human action"));

    let light = level(brightness, "dim", "moderately lit", "bright");
    let color = level(colorfulness, "muted", "balanced", "vivid");

    let first = [
        Turn::new(
            "What kind of place is shown in the image?",
            format!("The photo shows a {scene} setting, with {objects} in view."),
        ),
        Turn::new(
            "Which objects stand out in the picture?",
            format!("The most noticeable elements are {objects}, placed in a {scene} scene."),
        ),
    ];
    let second = [
        Turn::new(
            "How would you describe the lighting and colors?",
            format!("The image looks {light}, and its colors are {color}."),
        ),
        Turn::new(
            "Is anyone in the image showing a visible expression?",
            match (face, action) {
                (Some(f), Some(a)) => format!("Yes, a person with a {f} expression is {a}."),
                (Some(f), None) => format!("Yes, a face with a {f} expression is visible."),
                (None, Some(a)) => format!("No clear face is visible, though someone is {a}."),
                (None, None) => "No, there is no visible facial expression in the image.".to_string(),
            },
        ),
    ];
    let complex_q = [
        format!("Why might this image evoke a feeling of {emotion}?"),
        format!("What story could explain the sense of {emotion} in this scene?"),
    ];
    let complex_a = format!(
        "Several cues point toward {emotion}. The caption describes {caption}, and the {scene} setting frames \
         how a viewer reads it. The {light} lighting and {color} colors set the overall mood, while {objects} \
         anchor the viewer's attention.\n\n\
         Taken together, these details make {emotion} the most natural reading of the image: the low-level \
         tone, the scene context and {} all reinforce one another.",
        match face {
            Some(f) => format!("the {f} expression"),
            None => "the absence of a clear face".to_string(),
        }
    );
    vec![
        first.choose(rng).unwrap().clone(),
        second.choose(rng).unwrap().clone(),
        Turn::new(complex_q.choose(rng).unwrap().clone(), complex_a),
    ]
}

fn corrupt(turns: &[Turn], rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..5) {
        // prose, no markers
        0 => turns.iter().map(|t| format!("{} {}", t.question, t.answer)).collect::<Vec<_>>().join("\n\n"),
        // answer first
        1 => format!("Answer: {}\n\n{}", turns[0].answer, render_dialogue(turns)),
        // dangling final question
        2 => format!("{}\nQuestion: {}\n", render_dialogue(&turns[..2]), turns[2].question),
        // too few pairs to split
        3 => render_dialogue(&turns[..2]),
        // empty answer
        _ => render_dialogue(turns).replacen(&format!("Answer: {}", turns[1].answer), "Answer:", 1),
    }
}

/// Reply text for `request`; equal prompt hashes give equal text.
pub fn mock_reply(request: &GenerationRequest, corruption_rate: f64) -> String {
    let mut rng = rng_for(request, 0);
    let corrupted = rng.random::<f64>() < corruption_rate;
    let turns = dialogue(request, &mut rng);
    if corrupted {
        corrupt(&turns, &mut rng)
    } else {
        render_dialogue(&turns)
    }
}

/// Uncorrupted mock completion with a fixed timestamp.
pub fn mock_complete(request: &GenerationRequest) -> CompletionResult {
    CompletionResult {
        image_id: request.image_id.clone(),
        kind: request.kind,
        raw_text: mock_reply(request, 0.0),
        prompt_hash: request.prompt_hash.clone(),
        model_name: MOCK_MODEL.into(),
        timestamp: MOCK_TIMESTAMP.into(),
    }
}

/// Mock backend with optional latency jitter and concurrency instrumentation.
#[derive(Debug, Default)]
pub struct MockBackend {
    corruption_rate: f64,
    latency: Option<(Duration, Duration)>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn new(corruption_rate: f64) -> Self {
        MockBackend { corruption_rate, ..Default::default() }
    }

    /// Each call sleeps for a per-request duration drawn from `[min, max]`.
    pub fn with_latency(mut self, min: Duration, max: Duration) -> Self {
        self.latency = Some((min, max.max(min)));
        self
    }

    /// Highest number of simultaneous `send` calls observed.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn send(&self, request: &GenerationRequest, _: &BackendConfig) -> Result<BackendReply, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if let Some((min, max)) = self.latency {
            let span = (max - min).as_micros() as u64;
            let extra = if span == 0 { 0 } else { rng_for(request, 1).random_range(0..=span) };
            std::thread::sleep(min + Duration::from_micros(extra));
        }
        let text = mock_reply(request, self.corruption_rate);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        let prompt_tokens = request.messages.iter().map(|m| m.content.split_whitespace().count() as u64).sum();
        Ok(BackendReply {
            completion_tokens: Some(text.split_whitespace().count() as u64),
            prompt_tokens: Some(prompt_tokens),
            text,
        })
    }
}
