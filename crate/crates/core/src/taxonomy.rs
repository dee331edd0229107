//! Emotion label sets.
//!
//! Taxonomy files hold one label per line; `#` lines and blank lines are
//! ignored. The eight benchmark taxonomies ship as built-ins. Their class
//! counts are fixed by the benchmarks, the label strings are reference
//! values that a file can override.

use std::collections::btree_map::{BTreeMap, Entry};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("unknown taxonomy {0:?}: not a built-in name or readable file")]
    UnknownName(String),
    #[error("cannot read taxonomy file {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("taxonomy name must not be empty")]
    EmptyName,
    #[error("taxonomy {0:?} has no labels")]
    NoLabels(String),
    #[error("taxonomy {name:?}: duplicate label {label:?} (line {line})")]
    DuplicateLabel { name: String, label: String, line: usize },
    #[error("taxonomy {0:?} already registered")]
    AlreadyRegistered(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    name: String,
    labels: Vec<String>,
}

/// (name, file contents) for every built-in taxonomy.
const BUILTINS: &[(&str, &str)] = &[
    ("webemo", include_str!("../resources/taxonomies/webemo.txt")),
    ("fi", include_str!("../resources/taxonomies/fi.txt")),
    ("emotion6", include_str!("../resources/taxonomies/emotion6.txt")),
    ("abstract", include_str!("../resources/taxonomies/abstract.txt")),
    ("artphoto", include_str!("../resources/taxonomies/artphoto.txt")),
    ("iapsa", include_str!("../resources/taxonomies/iapsa.txt")),
    ("emotionroi", include_str!("../resources/taxonomies/emotionroi.txt")),
    ("emoset", include_str!("../resources/taxonomies/emoset.txt")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

/// Normal form used for every label comparison.
pub fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

impl Taxonomy {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Result<Self, TaxonomyError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(TaxonomyError::EmptyName);
        }
        let labels: Vec<String> = labels.into_iter().map(|l| l.trim().to_string()).collect();
        if labels.is_empty() {
            return Err(TaxonomyError::NoLabels(name));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, label) in labels.iter().enumerate() {
            if !seen.insert(normalize_label(label)) {
                return Err(TaxonomyError::DuplicateLabel {
                    name,
                    label: label.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Taxonomy { name, labels })
    }

    /// Parses the one-label-per-line format. Reported line numbers are
    /// physical lines of `text`.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, TaxonomyError> {
        let name = name.into();
        let mut labels = Vec::new();
        let mut lines = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            labels.push(line.to_string());
            lines.push(idx + 1);
        }
        Taxonomy::new(name, labels).map_err(|e| match e {
            TaxonomyError::DuplicateLabel { name, label, line } => TaxonomyError::DuplicateLabel {
                name,
                label,
                line: lines[line - 1],
            },
            other => other,
        })
    }

    pub fn builtin(name: &str) -> Option<Self> {
        let key = name.trim().to_lowercase();
        BUILTINS
            .iter()
            .find(|(n, _)| *n == key)
            .map(|(n, text)| Taxonomy::parse(*n, text).expect("built-in taxonomy is valid"))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Canonical spelling of `label`, matched case-insensitively after
    /// trimming surrounding whitespace.
    pub fn resolve(&self, label: &str) -> Option<&str> {
        let key = normalize_label(label);
        self.labels
            .iter()
            .find(|l| normalize_label(l) == key)
            .map(String::as_str)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.resolve(label).is_some()
    }

    /// Renders the taxonomy back to the file format.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for l in &self.labels {
            s.push_str(l);
            s.push('\n');
        }
        s
    }
}

/// Resolves `source` as a built-in name first, then as a file path. A file's
/// taxonomy is named after its file stem.
pub fn load_taxonomy(source: &str) -> Result<Taxonomy, TaxonomyError> {
    if let Some(t) = Taxonomy::builtin(source) {
        return Ok(t);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(TaxonomyError::UnknownName(source.to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| TaxonomyError::Unreadable {
        path: source.to_string(),
        message: e.to_string(),
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Taxonomy::parse(name, &text)
}

/// Named taxonomies; names are unique.
#[derive(Debug, Default, Clone)]
pub struct TaxonomyRegistry {
    entries: BTreeMap<String, Taxonomy>,
}

impl TaxonomyRegistry {
    pub fn with_builtins() -> Self {
        let mut r = TaxonomyRegistry::default();
        for name in builtin_names() {
            r.register(Taxonomy::builtin(name).unwrap()).unwrap();
        }
        r
    }

    pub fn register(&mut self, taxonomy: Taxonomy) -> Result<(), TaxonomyError> {
        match self.entries.entry(taxonomy.name.clone()) {
            Entry::Occupied(_) => Err(TaxonomyError::AlreadyRegistered(taxonomy.name)),
            Entry::Vacant(v) => {
                v.insert(taxonomy);
                Ok(())
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Taxonomy> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_class_counts() {
        let expected = [
            ("webemo", 25),
            ("fi", 8),
            ("emotion6", 6),
            ("abstract", 8),
            ("artphoto", 8),
            ("iapsa", 8),
            ("emotionroi", 6),
            ("emoset", 8),
        ];
        for (name, n) in expected {
            assert_eq!(load_taxonomy(name).unwrap().len(), n, "{name}");
        }
        assert_eq!(builtin_names().count(), 8);
    }

    #[test]
    fn builtin_lookup_ignores_case() {
        assert_eq!(load_taxonomy("Emotion6").unwrap().name(), "emotion6");
    }

    #[test]
    fn duplicate_labels_rejected() {
        let err = Taxonomy::parse("t", "# header\njoy\n\nJoy \n").unwrap_err();
        assert_eq!(
            err,
            TaxonomyError::DuplicateLabel {
                name: "t".into(),
                label: "Joy".into(),
                line: 4
            }
        );
    }

    #[test]
    fn duplicate_labels_in_file() {
        let dir = std::env::temp_dir().join(format!("emoforge-tax-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mine.txt");
        std::fs::write(&path, "joy\njoy\n").unwrap();
        let err = load_taxonomy(path.to_str().unwrap()).unwrap_err();
        assert!(matches!(err, TaxonomyError::DuplicateLabel { .. }));
        std::fs::write(&path, "joy\ngrief\n").unwrap();
        let t = load_taxonomy(path.to_str().unwrap()).unwrap();
        assert_eq!(t.name(), "mine");
        assert_eq!(t.labels(), ["joy", "grief"]);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unknown_name() {
        assert_eq!(
            load_taxonomy("nope-not-here").unwrap_err(),
            TaxonomyError::UnknownName("nope-not-here".into())
        );
    }

    #[test]
    fn empty_file_has_no_labels() {
        assert!(matches!(Taxonomy::parse("t", "# only a comment\n"), Err(TaxonomyError::NoLabels(_))));
    }

    #[test]
    fn resolve_is_case_and_space_insensitive() {
        let t = load_taxonomy("emotion6").unwrap();
        assert_eq!(t.resolve("  JOY "), Some("joy"));
        assert_eq!(t.resolve("joyful"), None);
    }

    #[test]
    fn registry_names_unique() {
        let mut r = TaxonomyRegistry::with_builtins();
        let dup = Taxonomy::new("fi", vec!["a".into()]).unwrap();
        assert_eq!(r.register(dup), Err(TaxonomyError::AlreadyRegistered("fi".into())));
        assert_eq!(r.names().count(), 8);
    }
}
