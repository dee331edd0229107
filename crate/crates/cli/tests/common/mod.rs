#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

pub const BIN: &str = env!("CARGO_BIN_EXE_emoforge");

pub const EMOSET: [&str; 8] = ["amusement", "anger", "awe", "contentment", "disgust", "excitement", "fear", "sadness"];

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn emoforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("EMOFORGE_API_KEY")
        .output()
        .expect("spawn emoforge")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Writes `n` attribute and caption records with EmoSet labels into `dir`.
pub fn write_inputs(dir: &Path, n: usize) {
    let scenes = ["beach", "street", "forest", "kitchen", "stadium", "church"];
    let mut attrs = String::new();
    let mut caps = String::new();
    for i in 0..n {
        let id = format!("img{i:05}");
        let mut a = json!({
            "image_id": id,
            "emotion_class": EMOSET[i % EMOSET.len()],
            "brightness": (i * 37 % 101) as f64 / 100.0,
            "colorfulness": (i * 53 % 101) as f64 / 100.0,
            "scene_type": scenes[i % scenes.len()],
            "object_class": if i % 2 == 0 { json!("dog") } else { json!(["person", "bicycle"]) },
        });
        if i % 3 == 0 {
            a["facial_expression"] = json!("smiling");
        }
        if i % 4 == 0 {
            a["human_action"] = json!("running");
        }
        attrs.push_str(&a.to_string());
        attrs.push('\n');
        caps.push_str(&json!({"image_id": id, "caption": format!("photo {i} taken at a {}", scenes[(i + 1) % scenes.len()])}).to_string());
        caps.push('\n');
    }
    std::fs::write(dir.join("attributes.jsonl"), attrs).unwrap();
    std::fs::write(dir.join("captions.jsonl"), caps).unwrap();
}

pub fn generate_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["generate", "--attributes", "attributes.jsonl", "--captions", "captions.jsonl", "-o", "out/data.jsonl"];
    v.extend_from_slice(extra);
    v
}
