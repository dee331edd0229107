//! Per-image emotion attributes and captions.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Deserializer, Serialize};

use crate::taxonomy::Taxonomy;

/// One image's seven emotion attributes, from low-level (brightness,
/// colorfulness) through mid-level (scene, objects) to high-level (face,
/// action).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRecord {
    pub image_id: String,
    pub emotion_class: String,
    pub brightness: f64,
    pub colorfulness: f64,
    pub scene_type: String,
    #[serde(deserialize_with = "one_or_many")]
    pub object_class: Vec<String>,
    #[serde(default)]
    pub facial_expression: Option<String>,
    #[serde(default)]
    pub human_action: Option<String>,
}

/// Accepts `"dog"` as well as `["dog", "ball"]`.
fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttributeError {
    #[error("image_id: must not be empty")]
    EmptyImageId,
    #[error("{field}: {value} outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("emotion_class: {label:?} is not a label of taxonomy {taxonomy:?}")]
    UnknownLabel { label: String, taxonomy: String },
    #[error("caption: must not be empty ({image_id})")]
    EmptyCaption { image_id: String },
}

impl AttributeError {
    /// Name of the offending record field.
    pub fn field(&self) -> &'static str {
        match self {
            AttributeError::EmptyImageId => "image_id",
            AttributeError::OutOfRange { field, .. } => field,
            AttributeError::UnknownLabel { .. } => "emotion_class",
            AttributeError::EmptyCaption { .. } => "caption",
        }
    }
}

/// Returns the record unchanged when every invariant holds.
pub fn validate_attributes(
    record: AttributeRecord,
    taxonomy: &Taxonomy,
) -> Result<AttributeRecord, AttributeError> {
    if record.image_id.trim().is_empty() {
        return Err(AttributeError::EmptyImageId);
    }
    for (field, value) in [("brightness", record.brightness), ("colorfulness", record.colorfulness)] {
        // NaN fails the range check too
        if !(0.0..=1.0).contains(&value) {
            return Err(AttributeError::OutOfRange { field, value });
        }
    }
    if !taxonomy.contains(&record.emotion_class) {
        return Err(AttributeError::UnknownLabel {
            label: record.emotion_class,
            taxonomy: taxonomy.name().to_string(),
        });
    }
    Ok(record)
}

pub fn validate_caption(record: CaptionRecord) -> Result<CaptionRecord, AttributeError> {
    if record.image_id.trim().is_empty() {
        return Err(AttributeError::EmptyImageId);
    }
    if record.caption.trim().is_empty() {
        return Err(AttributeError::EmptyCaption { image_id: record.image_id });
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JoinError {
    #[error("duplicate image_id {id:?} in {list} input")]
    Duplicate { list: &'static str, id: String },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JoinOutcome {
    pub pairs: Vec<(AttributeRecord, CaptionRecord)>,
    /// Ids with attributes but no caption, in attribute order.
    pub missing_caption: Vec<String>,
    /// Ids with a caption but no attributes, in caption order.
    pub missing_attributes: Vec<String>,
}

/// Pairs records sharing an image_id. Output follows the attribute order.
pub fn join_inputs(
    attributes: Vec<AttributeRecord>,
    captions: Vec<CaptionRecord>,
) -> Result<JoinOutcome, JoinError> {
    let mut attr_ids = HashSet::new();
    for a in &attributes {
        if !attr_ids.insert(a.image_id.clone()) {
            return Err(JoinError::Duplicate { list: "attributes", id: a.image_id.clone() });
        }
    }
    let mut caption_order = Vec::with_capacity(captions.len());
    let mut by_id = HashMap::with_capacity(captions.len());
    for c in captions {
        if by_id.contains_key(&c.image_id) {
            return Err(JoinError::Duplicate { list: "captions", id: c.image_id });
        }
        caption_order.push(c.image_id.clone());
        by_id.insert(c.image_id.clone(), c);
    }

    let missing_attributes = caption_order
        .into_iter()
        .filter(|id| !attr_ids.contains(id))
        .collect();
    let mut out = JoinOutcome { missing_attributes, ..Default::default() };
    for a in attributes {
        match by_id.remove(&a.image_id) {
            Some(c) => out.pairs.push((a, c)),
            None => out.missing_caption.push(a.image_id),
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) fn sample_record(id: &str, class: &str) -> AttributeRecord {
    AttributeRecord {
        image_id: id.into(),
        emotion_class: class.into(),
        brightness: 0.5,
        colorfulness: 0.5,
        scene_type: "park".into(),
        object_class: vec!["dog".into()],
        facial_expression: None,
        human_action: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::load_taxonomy;
    use proptest::prelude::*;

    fn caption(id: &str) -> CaptionRecord {
        CaptionRecord { image_id: id.into(), caption: format!("caption {id}") }
    }

    #[test]
    fn brightness_out_of_range() {
        let t = load_taxonomy("emotion6").unwrap();
        let mut r = sample_record("a", "joy");
        r.brightness = 1.2;
        let err = validate_attributes(r, &t).unwrap_err();
        assert_eq!(err.field(), "brightness");
        assert!(err.to_string().starts_with("brightness"));
    }

    #[test]
    fn nan_colorfulness_rejected() {
        let t = load_taxonomy("emotion6").unwrap();
        let mut r = sample_record("a", "joy");
        r.colorfulness = f64::NAN;
        assert_eq!(validate_attributes(r, &t).unwrap_err().field(), "colorfulness");
    }

    #[test]
    fn known_and_unknown_labels() {
        let t = load_taxonomy("emotion6").unwrap();
        let ok = sample_record("a", "joy");
        assert_eq!(validate_attributes(ok.clone(), &t).unwrap(), ok);
        assert_eq!(validate_attributes(sample_record("a", " Joy"), &t).unwrap().emotion_class, " Joy");
        let err = validate_attributes(sample_record("a", "serenity"), &t).unwrap_err();
        assert_eq!(err.field(), "emotion_class");
    }

    #[test]
    fn empty_image_id() {
        let t = load_taxonomy("emotion6").unwrap();
        let err = validate_attributes(sample_record(" ", "joy"), &t).unwrap_err();
        assert_eq!(err, AttributeError::EmptyImageId);
    }

    #[test]
    fn blank_caption_rejected() {
        let c = CaptionRecord { image_id: "a".into(), caption: " \t".into() };
        assert_eq!(validate_caption(c).unwrap_err().field(), "caption");
    }

    #[test]
    fn object_class_accepts_single_string() {
        let r: AttributeRecord = serde_json::from_str(
            r#"{"image_id":"a","emotion_class":"joy","brightness":0.1,"colorfulness":0.2,
                "scene_type":"beach","object_class":"kite"}"#,
        )
        .unwrap();
        assert_eq!(r.object_class, ["kite"]);
        assert_eq!(r.facial_expression, None);
    }

    #[test]
    fn join_reports_unmatched() {
        let out = join_inputs(
            vec![sample_record("a", "joy"), sample_record("b", "joy")],
            vec![caption("b"), caption("c")],
        )
        .unwrap();
        assert_eq!(out.pairs.len(), 1);
        assert_eq!(out.pairs[0].0.image_id, "b");
        assert_eq!(out.missing_caption, ["a"]);
        assert_eq!(out.missing_attributes, ["c"]);
    }

    #[test]
    fn join_single_pair() {
        let out = join_inputs(vec![sample_record("a", "joy")], vec![caption("a")]).unwrap();
        assert_eq!(out.pairs.len(), 1);
        assert!(out.missing_caption.is_empty() && out.missing_attributes.is_empty());
    }

    #[test]
    fn join_duplicate_caption() {
        let err = join_inputs(vec![sample_record("a", "joy")], vec![caption("a"), caption("a")]).unwrap_err();
        assert_eq!(err, JoinError::Duplicate { list: "captions", id: "a".into() });
    }

    proptest! {
        #[test]
        fn validation_is_idempotent(b in 0.0f64..=1.0, c in 0.0f64..=1.0, idx in 0usize..6) {
            let t = load_taxonomy("emotion6").unwrap();
            let mut r = sample_record("img", &t.labels()[idx]);
            r.brightness = b;
            r.colorfulness = c;
            let once = validate_attributes(r, &t).unwrap();
            let twice = validate_attributes(once.clone(), &t).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn join_size_is_intersection(
            a in proptest::collection::btree_set(0u16..60, 0..40),
            c in proptest::collection::btree_set(0u16..60, 0..40),
        ) {
            let attrs = a.iter().map(|i| sample_record(&i.to_string(), "joy")).collect();
            let caps = c.iter().map(|i| caption(&i.to_string())).collect();
            let out = join_inputs(attrs, caps).unwrap();
            prop_assert_eq!(out.pairs.len(), a.intersection(&c).count());
            prop_assert_eq!(out.missing_caption.len(), a.difference(&c).count());
            prop_assert_eq!(out.missing_attributes.len(), c.difference(&a).count());
        }
    }
}
