//! Visual-haystack style queries and the query sets built from them.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{normalize_label, EmbeddingMatrix, ReferenceStore, StoreError};

pub const TEMPLATE: &str = "For the image with a(n) {Anchor}, is there a(n) {Target}?";

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("query {text:?} does not match the template \"{TEMPLATE}\"")]
    Parse { text: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Which slot of the query picks the reference class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    #[default]
    Anchor,
    Target,
}

impl std::str::FromStr for QueryMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "anchor" => Ok(QueryMode::Anchor),
            "target" => Ok(QueryMode::Target),
            other => Err(format!("unknown query mode {other:?} (expected anchor or target)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedQuery {
    pub anchor: String,
    pub target: String,
    pub raw: String,
}

impl ParsedQuery {
    pub fn class_for(&self, mode: QueryMode) -> &str {
        match mode {
            QueryMode::Anchor => &self.anchor,
            QueryMode::Target => &self.target,
        }
    }

    /// Renders the canonical template text for these slots.
    pub fn render(&self) -> String {
        render_query(&self.anchor, &self.target)
    }
}

pub fn render_query(anchor: &str, target: &str) -> String {
    format!("For the image with {} {anchor}, is there {} {target}?", article(anchor), article(target))
}

fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn template() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?is)^\s*for\s+the\s+image\s+with\s+(?:an|a)\s+(.+?)\s*,\s*is\s+there\s+(?:an|a)\s+(.+?)\s*[?.!]?\s*$")
            .expect("valid template regex")
    })
}

/// Parses `"For the image with a(n) {Anchor}, is there a(n) {Target}?"`,
/// case-insensitively. Slot text is lowercased with whitespace collapsed.
pub fn parse_query(text: &str) -> Result<ParsedQuery, QueryError> {
    let caps = template().captures(text).ok_or_else(|| QueryError::Parse { text: text.to_string() })?;
    let anchor = normalize_label(&caps[1]);
    let target = normalize_label(&caps[2]);
    if anchor.is_empty() || target.is_empty() {
        return Err(QueryError::Parse { text: text.to_string() });
    }
    Ok(ParsedQuery { anchor, target, raw: text.to_string() })
}

/// Query embeddings and where they came from.
#[derive(Debug, Clone)]
pub struct QuerySet {
    embeddings: EmbeddingMatrix,
    source_class: String,
    mode: QueryMode,
    reference_ids: Vec<String>,
    augmented_count: usize,
}

impl QuerySet {
    /// Wraps an arbitrary matrix of query rows, e.g. one read from a file.
    pub fn from_embeddings(embeddings: EmbeddingMatrix, source_class: impl Into<String>, mode: QueryMode) -> Result<Self, QueryError> {
        let embeddings = embeddings.normalize_rows()?;
        let reference_ids = embeddings.ids().map(str::to_string).collect();
        Ok(QuerySet { embeddings, source_class: source_class.into(), mode, reference_ids, augmented_count: 0 })
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn q(&self) -> usize {
        self.embeddings.n()
    }

    pub fn source_class(&self) -> &str {
        &self.source_class
    }

    pub fn mode(&self) -> QueryMode {
        self.mode
    }

    pub fn reference_ids(&self) -> &[String] {
        &self.reference_ids
    }

    pub fn augmented_count(&self) -> usize {
        self.augmented_count
    }
}

/// Reference rows of the chosen class (stored order) followed by every
/// augmented row (file order), all unit-normalized.
pub fn build_query_set(
    query: &ParsedQuery,
    mode: QueryMode,
    store: &ReferenceStore,
    ref_count: usize,
    augmented: Option<&EmbeddingMatrix>,
) -> Result<QuerySet, QueryError> {
    let class = query.class_for(mode);
    let rows = store.lookup_references(class, ref_count)?;
    let refs = store.matrix().select_rows(rows)?;
    let reference_ids = refs.ids().map(str::to_string).collect();
    let (embeddings, augmented_count) = match augmented {
        Some(aug) => (refs.normalize_rows()?.vstack(&aug.clone().normalize_rows()?)?, aug.n()),
        None => (refs, 0),
    };
    Ok(QuerySet {
        embeddings: embeddings.normalize_rows()?,
        source_class: normalize_label(class),
        mode,
        reference_ids,
        augmented_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::ManifestEntry;

    #[test]
    fn parses_examples() {
        let q = parse_query("For the image with a Truck, is there a Dog?").unwrap();
        assert_eq!((q.anchor.as_str(), q.target.as_str()), ("truck", "dog"));
        let q = parse_query("For the image with a skateboard, is there a bed?").unwrap();
        assert_eq!((q.anchor.as_str(), q.target.as_str()), ("skateboard", "bed"));
        let q = parse_query("for the image with an  Traffic Light , is there an umbrella").unwrap();
        assert_eq!((q.anchor.as_str(), q.target.as_str()), ("traffic light", "umbrella"));
    }

    #[test]
    fn rejects_open_ended_queries() {
        let err = parse_query("Which image best captures the setting of a sunset?").unwrap_err();
        assert!(err.to_string().contains("For the image with"));
        assert!(parse_query("For the image with a , is there a dog?").is_err());
    }

    #[test]
    fn renders_articles() {
        assert_eq!(render_query("apple", "dog"), "For the image with an apple, is there a dog?");
    }

    fn store() -> ReferenceStore {
        let mut meta = Vec::new();
        let mut data = Vec::new();
        for i in 0..5 {
            meta.push(ManifestEntry::new(format!("truck{i}"), Some("truck".into())));
            data.extend_from_slice(&[1.0, 0.1 * i as f32, 0.0]);
            meta.push(ManifestEntry::new(format!("dog{i}"), Some("dog".into())));
            data.extend_from_slice(&[0.0, 1.0, 0.1 * i as f32]);
        }
        ReferenceStore::new(EmbeddingMatrix::new(3, data, meta).unwrap()).unwrap()
    }

    #[test]
    fn query_set_sizes() {
        let s = store();
        let q = parse_query("For the image with a Truck, is there a Dog?").unwrap();
        let one = build_query_set(&q, QueryMode::Anchor, &s, 1, None).unwrap();
        assert_eq!(one.q(), 1);
        assert_eq!(one.reference_ids(), ["truck0"]);
        let five = build_query_set(&q, QueryMode::Anchor, &s, 5, None).unwrap();
        assert_eq!(five.q(), 5);
        let aug = EmbeddingMatrix::from_rows(&vec![vec![1.0, 0.0, 0.1]; 4]).map(|m| {
            let meta = (0..4).map(|i| ManifestEntry::new(format!("aug{i}"), Some("truck".into()))).collect();
            EmbeddingMatrix::new(3, m.data().to_vec(), meta).unwrap()
        });
        let with_aug = build_query_set(&q, QueryMode::Anchor, &s, 1, Some(&aug.unwrap())).unwrap();
        assert_eq!((with_aug.q(), with_aug.augmented_count()), (5, 4));
        assert!(with_aug.embeddings().is_normalized());
        let target = build_query_set(&q, QueryMode::Target, &s, 2, None).unwrap();
        assert_eq!(target.reference_ids(), ["dog0", "dog1"]);
        assert_eq!(target.source_class(), "dog");
    }

    #[test]
    fn unknown_class_and_bad_dimension() {
        let s = store();
        let q = parse_query("For the image with a unicorn, is there a dog?").unwrap();
        assert!(matches!(
            build_query_set(&q, QueryMode::Anchor, &s, 1, None),
            Err(QueryError::Store(StoreError::UnknownClass { .. }))
        ));
        let q = parse_query("For the image with a truck, is there a dog?").unwrap();
        let aug = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            build_query_set(&q, QueryMode::Anchor, &s, 1, Some(&aug)),
            Err(QueryError::Store(StoreError::DimensionMismatch { .. }))
        ));
    }
}
