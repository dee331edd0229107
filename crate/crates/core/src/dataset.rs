//! Instruction datasets: dedup on append, kind selection, stratified
//! sampling, held-in/held-out splits, statistics and canonical files.
//!
//! A dataset file has one record per line, sorted by `(image_id, kind)`,
//! keys in the fixed order of [`InstructionRecord`]. The manifest lives next
//! to it with the extension replaced by `.manifest`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::instruction::{validate_record, InstructionRecord, Kind, Violation, RECORD_SCHEMA_VERSION};
use crate::jsonl::{self, JsonlError};
use crate::sampling::{self, FractionError};
use crate::sha256_hex;

pub const SCHEMA_VERSION: u32 = RECORD_SCHEMA_VERSION;

/// A non-empty set of record kinds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KindSet(BTreeSet<Kind>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("kind set must not be empty")]
pub struct EmptyKindSet;

impl KindSet {
    pub fn new(kinds: impl IntoIterator<Item = Kind>) -> Result<Self, EmptyKindSet> {
        let set: BTreeSet<Kind> = kinds.into_iter().collect();
        if set.is_empty() {
            Err(EmptyKindSet)
        } else {
            Ok(KindSet(set))
        }
    }

    pub fn all() -> Self {
        KindSet(Kind::ALL.into_iter().collect())
    }

    pub fn contains(&self, kind: Kind) -> bool {
        self.0.contains(&kind)
    }

    pub fn iter(&self) -> impl Iterator<Item = Kind> + '_ {
        self.0.iter().copied()
    }

    /// `categorical+conversation`-style label, kinds in canonical order.
    pub fn composition(&self) -> String {
        self.0.iter().map(|k| k.as_str()).collect::<Vec<_>>().join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub taxonomy: String,
    pub generation_config_digest: String,
    pub composition: String,
    pub counts: BTreeMap<Kind, usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("record schema_version {found} does not match dataset schema_version {expected}")]
    SchemaVersion { expected: u32, found: u32 },
    #[error("invalid {kind} record for {image_id}: {}", join_violations(.violations))]
    InvalidRecord { image_id: String, kind: Kind, violations: Vec<Violation> },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type RecordKey = (String, Kind, String);

/// Uniqueness key: image id, kind and a hash of the first question.
pub fn record_key(r: &InstructionRecord) -> RecordKey {
    let first = r.turns.first().map_or("", |t| t.question.as_str());
    (r.image_id.clone(), r.kind, sha256_hex(first.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<InstructionRecord>,
    manifest: Manifest,
    keys: HashSet<RecordKey>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.manifest == other.manifest
    }
}

impl Dataset {
    pub fn new(taxonomy: impl Into<String>, generation_config_digest: impl Into<String>) -> Self {
        Dataset {
            records: Vec::new(),
            manifest: Manifest {
                schema_version: SCHEMA_VERSION,
                taxonomy: taxonomy.into(),
                generation_config_digest: generation_config_digest.into(),
                composition: KindSet::all().composition(),
                counts: Kind::ALL.into_iter().map(|k| (k, 0)).collect(),
            },
            keys: HashSet::new(),
        }
    }

    fn empty_like(&self) -> Self {
        let mut d = Dataset::new(self.manifest.taxonomy.clone(), self.manifest.generation_config_digest.clone());
        d.manifest.schema_version = self.manifest.schema_version;
        d.manifest.composition = self.manifest.composition.clone();
        d
    }

    pub fn records(&self) -> &[InstructionRecord] {
        &self.records
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, kind: Kind) -> usize {
        self.manifest.counts.get(&kind).copied().unwrap_or(0)
    }

    /// Distinct image ids in first-seen order.
    pub fn image_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .map(|r| r.image_id.as_str())
            .filter(|id| seen.insert(*id))
            .collect()
    }

    /// Validates and inserts records, skipping exact duplicates of
    /// `(image_id, kind, first question)`. Returns how many were added.
    /// Nothing is inserted if any record fails.
    pub fn append(&mut self, records: impl IntoIterator<Item = InstructionRecord>) -> Result<usize, DatasetError> {
        let mut staged = Vec::new();
        for r in records {
            if r.schema_version != self.manifest.schema_version {
                return Err(DatasetError::SchemaVersion {
                    expected: self.manifest.schema_version,
                    found: r.schema_version,
                });
            }
            let (image_id, kind) = (r.image_id.clone(), r.kind);
            let r = validate_record(r).map_err(|violations| DatasetError::InvalidRecord { image_id, kind, violations })?;
            staged.push(r);
        }
        let mut added = 0;
        for r in staged {
            if self.keys.insert(record_key(&r)) {
                *self.manifest.counts.entry(r.kind).or_default() += 1;
                self.records.push(r);
                added += 1;
            }
        }
        Ok(added)
    }

    fn filtered(&self, keep: impl Fn(&InstructionRecord) -> bool) -> Dataset {
        let mut out = self.empty_like();
        for r in self.records.iter().filter(|r| keep(r)) {
            out.keys.insert(record_key(r));
            *out.manifest.counts.entry(r.kind).or_default() += 1;
            out.records.push(r.clone());
        }
        out
    }

    /// Records of the requested kinds; the manifest records the composition.
    pub fn select_kinds(&self, kinds: &KindSet) -> Dataset {
        let mut out = self.filtered(|r| kinds.contains(r.kind));
        out.manifest.composition = kinds.composition();
        out
    }

    /// Emotion class per image (first record wins).
    fn image_classes(&self) -> Vec<(&str, &str)> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.image_id.as_str()))
            .map(|r| (r.image_id.as_str(), r.emotion_class.as_str()))
            .collect()
    }

    /// Stratified subset by image: every record of a sampled image is kept.
    pub fn sample_fraction(&self, fraction: f64, seed: u64) -> Result<Dataset, FractionError> {
        let chosen = sampling::stratified_sample(self.image_classes(), fraction, seed)?;
        Ok(self.filtered(|r| chosen.contains(&r.image_id)))
    }

    pub fn stats(&self) -> DatasetStats {
        let mut s = DatasetStats {
            records: self.records.len(),
            per_kind: Kind::ALL.into_iter().map(|k| (k, 0)).collect(),
            ..Default::default()
        };
        let mut per_image: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
        for r in &self.records {
            *s.per_kind.entry(r.kind).or_default() += 1;
            *s.turn_histogram.entry(r.turns.len()).or_default() += 1;
            let slot = Kind::ALL.iter().position(|k| *k == r.kind).unwrap();
            per_image.entry(&r.image_id).or_default()[slot] += 1;
        }
        for (_, class) in self.image_classes() {
            *s.per_emotion_class.entry(class.to_string()).or_default() += 1;
        }
        s.images = per_image.len();
        for counts in per_image.values() {
            let profile = format!("{}/{}/{}", counts[0], counts[1], counts[2]);
            *s.image_kind_profiles.entry(profile).or_default() += 1;
        }
        s
    }

    /// Records in canonical order: by image_id, then kind.
    pub fn canonical_records(&self) -> Vec<&InstructionRecord> {
        let mut v: Vec<&InstructionRecord> = self.records.iter().collect();
        v.sort_by(|a, b| (&a.image_id, a.kind).cmp(&(&b.image_id, b.kind)));
        v
    }

    pub fn to_canonical_string(&self) -> String {
        jsonl::to_string(&self.canonical_records())
    }

    /// Writes the canonical file and its manifest, each atomically.
    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        let io_err = |p: &Path| {
            let path = p.display().to_string();
            move |source| DatasetError::Io { path, source }
        };
        jsonl::write_atomic(path, self.to_canonical_string().as_bytes()).map_err(io_err(path))?;
        let mpath = manifest_path(path);
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        jsonl::write_atomic(&mpath, manifest.as_bytes()).map_err(io_err(&mpath))?;
        Ok(())
    }

    /// Reads a dataset file. Without a manifest, one is derived from the
    /// records; with one, its counts must match.
    pub fn read(path: &Path) -> Result<Dataset, DatasetError> {
        let records: Vec<InstructionRecord> = jsonl::read_file(path)?;
        let mpath = manifest_path(path);
        let manifest: Option<Manifest> = if mpath.exists() {
            let text = std::fs::read_to_string(&mpath)
                .map_err(|source| DatasetError::Io { path: mpath.display().to_string(), source })?;
            Some(serde_json::from_str(&text).map_err(|e| DatasetError::Manifest {
                path: mpath.display().to_string(),
                message: e.to_string(),
            })?)
        } else {
            None
        };
        let mut d = match &manifest {
            Some(m) => {
                let mut d = Dataset::new(m.taxonomy.clone(), m.generation_config_digest.clone());
                d.manifest.schema_version = m.schema_version;
                d.manifest.composition = m.composition.clone();
                d
            }
            None => Dataset::new("", ""),
        };
        d.append(records)?;
        if let Some(m) = manifest {
            let declared: BTreeMap<Kind, usize> = m.counts.into_iter().filter(|(_, n)| *n > 0).collect();
            let actual: BTreeMap<Kind, usize> =
                d.manifest.counts.iter().filter(|(_, n)| **n > 0).map(|(k, n)| (*k, *n)).collect();
            if declared != actual {
                return Err(DatasetError::Manifest {
                    path: mpath.display().to_string(),
                    message: format!("declared counts {declared:?} differ from file counts {actual:?}"),
                });
            }
        }
        Ok(d)
    }

    /// One (instruction, output) row per turn.
    pub fn export_rows(&self) -> Vec<ExportRow> {
        self.canonical_records()
            .into_iter()
            .flat_map(|r| {
                r.turns.iter().map(move |t| ExportRow {
                    image_id: r.image_id.clone(),
                    instruction: t.question.clone(),
                    output: t.answer.clone(),
                })
            })
            .collect()
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRow {
    pub image_id: String,
    pub instruction: String,
    pub output: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub images: usize,
    pub per_kind: BTreeMap<Kind, usize>,
    /// Images per emotion class.
    pub per_emotion_class: BTreeMap<String, usize>,
    /// Number of images per `categorical/conversation/reasoning` count triple.
    pub image_kind_profiles: BTreeMap<String, usize>,
    /// Number of records per turn count.
    pub turn_histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub held_in: String,
    pub held_out: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error("held-in dataset {0:?} also listed as held-out")]
    HeldInIsHeldOut(String),
    #[error("unknown dataset {0:?}")]
    Unknown(String),
    #[error("datasets {first:?} and {second:?} share image ids: {}", .ids.iter().cloned().collect::<Vec<_>>().join(", "))]
    Overlap { first: String, second: String, ids: BTreeSet<String> },
}

/// Checks that the held-in and every held-out dataset are pairwise disjoint
/// by image id and returns them.
pub fn split_held(
    datasets: &BTreeMap<String, Dataset>,
    spec: &SplitSpec,
) -> Result<(Dataset, BTreeMap<String, Dataset>), SplitError> {
    if spec.held_out.contains(&spec.held_in) {
        return Err(SplitError::HeldInIsHeldOut(spec.held_in.clone()));
    }
    let get = |name: &String| datasets.get(name).ok_or_else(|| SplitError::Unknown(name.clone()));
    let mut members = vec![(spec.held_in.clone(), get(&spec.held_in)?)];
    for name in &spec.held_out {
        members.push((name.clone(), get(name)?));
    }
    let id_sets: Vec<BTreeSet<&str>> = members.iter().map(|(_, d)| d.image_ids().into_iter().collect()).collect();
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let shared: BTreeSet<String> = id_sets[i].intersection(&id_sets[j]).map(|s| s.to_string()).collect();
            if !shared.is_empty() {
                return Err(SplitError::Overlap {
                    first: members[i].0.clone(),
                    second: members[j].0.clone(),
                    ids: shared,
                });
            }
        }
    }
    let held_in = members[0].1.clone();
    let held_out = members[1..].iter().map(|(n, d)| (n.clone(), (*d).clone())).collect();
    Ok((held_in, held_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruction::{Provenance, Turn};

    fn rec(id: &str, kind: Kind, class: &str) -> InstructionRecord {
        let turns = match kind {
            Kind::Categorical => vec![Turn::new("Which emotion?", format!("Predicted emotion: {class}"))],
            Kind::Conversation => vec![Turn::new(format!("q1 {id}"), "a1"), Turn::new("q2", "a2")],
            Kind::Reasoning => vec![Turn::new(format!("why {id}?"), "because")],
        };
        InstructionRecord::new(id, kind, class, turns, Provenance::SynthesizedLocal)
    }

    fn full(n: usize) -> Dataset {
        let mut d = Dataset::new("emotion6", "cfg");
        let classes = ["joy", "fear", "anger"];
        for i in 0..n {
            for k in Kind::ALL {
                d.append([rec(&format!("img{i:03}"), k, classes[i % 3])]).unwrap();
            }
        }
        d
    }

    #[test]
    fn append_dedups() {
        let mut d = Dataset::new("t", "");
        assert_eq!(d.append([rec("a", Kind::Reasoning, "joy")]).unwrap(), 1);
        assert_eq!(d.append([rec("a", Kind::Reasoning, "joy")]).unwrap(), 0);
        assert_eq!(d.len(), 1);
        let added = d
            .append([rec("b", Kind::Reasoning, "joy"), rec("c", Kind::Reasoning, "joy"), rec("d", Kind::Categorical, "joy")])
            .unwrap();
        assert_eq!(added, 3);
        assert_eq!(d.count(Kind::Reasoning), 3);
    }

    #[test]
    fn append_rejects_other_schema_version() {
        let mut d = Dataset::new("t", "");
        let mut r = rec("a", Kind::Reasoning, "joy");
        r.schema_version = 2;
        assert!(matches!(d.append([r]), Err(DatasetError::SchemaVersion { expected: 1, found: 2 })));
        assert!(d.is_empty());
    }

    #[test]
    fn append_rejects_invalid_records_atomically() {
        let mut d = Dataset::new("t", "");
        let mut bad = rec("b", Kind::Conversation, "joy");
        bad.turns.pop();
        let err = d.append([rec("a", Kind::Reasoning, "joy"), bad]).unwrap_err();
        assert!(err.to_string().contains("conversation requires ≥2 turns"));
        assert!(d.is_empty());
    }

    #[test]
    fn select_kinds_filters() {
        let d = full(100);
        let c = d.select_kinds(&KindSet::new([Kind::Categorical]).unwrap());
        assert_eq!(c.len(), 100);
        assert_eq!(c.manifest().composition, "categorical");
        assert_eq!(d.select_kinds(&KindSet::all()), d);
        assert_eq!(
            KindSet::new([Kind::Conversation, Kind::Categorical]).unwrap().composition(),
            "categorical+conversation"
        );
        assert!(KindSet::new([]).is_err());
    }

    #[test]
    fn sampling_moves_images_together() {
        let d = full(90);
        let s = d.sample_fraction(0.5, 3).unwrap();
        assert_eq!(s.image_ids().len(), 45);
        assert_eq!(s.len(), 135);
        let st = s.stats();
        assert_eq!(st.image_kind_profiles.get("1/1/1"), Some(&45));
        assert_eq!(d.sample_fraction(1.0, 3).unwrap(), d);
        assert!(d.sample_fraction(0.0, 3).is_err());
        assert_eq!(d.sample_fraction(0.2, 11).unwrap(), d.sample_fraction(0.2, 11).unwrap());
    }

    #[test]
    fn stats_counts() {
        let st = full(10).stats();
        assert_eq!(st.records, 30);
        assert_eq!(st.images, 10);
        assert_eq!(st.per_kind[&Kind::Conversation], 10);
        assert_eq!(st.turn_histogram, BTreeMap::from([(1, 20), (2, 10)]));
        assert_eq!(st.per_emotion_class["joy"], 4);

        let empty = Dataset::new("t", "").stats();
        assert_eq!(empty.records, 0);
        assert!(empty.per_kind.values().all(|n| *n == 0));
        assert!(empty.turn_histogram.is_empty());

        let convs = full(100).select_kinds(&KindSet::new([Kind::Conversation]).unwrap());
        assert_eq!(convs.stats().turn_histogram, BTreeMap::from([(2, 100)]));
    }

    #[test]
    fn split_disjoint_and_overlap() {
        let mut sets = BTreeMap::new();
        let mut a = Dataset::new("emoset", "");
        a.append([rec("x", Kind::Reasoning, "joy"), rec("y", Kind::Reasoning, "joy")]).unwrap();
        let mut b = Dataset::new("fi", "");
        b.append([rec("z", Kind::Reasoning, "joy")]).unwrap();
        sets.insert("emoset".to_string(), a.clone());
        sets.insert("fi".to_string(), b);
        let spec = SplitSpec { held_in: "emoset".into(), held_out: vec!["fi".into()] };
        let (held_in, out) = split_held(&sets, &spec).unwrap();
        assert_eq!(held_in, a);
        assert_eq!(out.len(), 1);

        let mut c = Dataset::new("fi", "");
        c.append([rec("x", Kind::Categorical, "joy"), rec("w", Kind::Reasoning, "joy")]).unwrap();
        sets.insert("fi".to_string(), c);
        match split_held(&sets, &spec).unwrap_err() {
            SplitError::Overlap { ids, .. } => assert_eq!(ids, BTreeSet::from(["x".to_string()])),
            e => panic!("{e}"),
        }

        let only = SplitSpec { held_in: "emoset".into(), held_out: vec![] };
        assert_eq!(split_held(&sets, &only).unwrap().0, a);
        let bad = SplitSpec { held_in: "emoset".into(), held_out: vec!["emoset".into()] };
        assert!(matches!(split_held(&sets, &bad), Err(SplitError::HeldInIsHeldOut(_))));
        let missing = SplitSpec { held_in: "nope".into(), held_out: vec![] };
        assert!(matches!(split_held(&sets, &missing), Err(SplitError::Unknown(_))));
    }

    #[test]
    fn canonical_file_roundtrip() {
        let dir = std::env::temp_dir().join(format!("emoforge-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("data.jsonl");
        let mut d = Dataset::new("emotion6", "digest");
        // insertion order differs from canonical order
        d.append([rec("b", Kind::Reasoning, "joy"), rec("a", Kind::Conversation, "fear"), rec("a", Kind::Categorical, "fear")])
            .unwrap();
        d.write(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        assert!(String::from_utf8_lossy(&first).starts_with("{\"schema_version\":1,\"image_id\":\"a\",\"kind\":\"categorical\""));
        let back = Dataset::read(&path).unwrap();
        assert_eq!(back.manifest(), d.manifest());
        back.write(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
        assert!(manifest_path(&path).exists());

        std::fs::write(manifest_path(&path), serde_json::to_string(&Manifest {
            counts: BTreeMap::from([(Kind::Reasoning, 5)]),
            ..d.manifest().clone()
        }).unwrap()).unwrap();
        assert!(matches!(Dataset::read(&path), Err(DatasetError::Manifest { .. })));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn export_one_row_per_turn() {
        let d = full(2);
        let rows = d.export_rows();
        assert_eq!(rows.len(), 2 * (1 + 2 + 1));
        assert_eq!(rows[0].image_id, "img000");
    }
}
