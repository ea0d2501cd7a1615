//! Embedding records and exact cosine search.
//!
//! Records are grouped by (subject type, object type). Each partition keeps its
//! vectors in one contiguous row-major buffer and queries scan the whole
//! partition, so every answer equals a brute-force scan.

mod io;

pub use io::{
    load_embeddings, read_embeddings, read_sidecar, write_embeddings, write_sidecar, EmbeddingLine,
    SIDECAR_MAGIC,
};

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TypePair;
use crate::tagged::TaggedSentence;

/// Allowed deviation of a stored vector's L2 norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Partitions at least this large are scored in parallel.
const PARALLEL_SCAN_ROWS: usize = 65_536;

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate record id {0}")]
    DuplicateId(u64),
    #[error("record {id} has norm {norm}, expected 1 ± {NORM_TOLERANCE}")]
    NormViolation { id: u64, norm: f64 },
    #[error("{0}")]
    Format(String),
}

/// Which encoder produced a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorSource {
    SentenceEmbedding,
    RuleEmbedding,
    /// Rule strings embedded as plain text.
    RuleEmbeddingFallback,
}

impl fmt::Display for VectorSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VectorSource::SentenceEmbedding => "sentence-embedding",
            VectorSource::RuleEmbedding => "rule-embedding",
            VectorSource::RuleEmbeddingFallback => "rule-embedding-fallback",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: u64,
    pub sentence: TaggedSentence,
    pub vector: Vec<f32>,
    pub type_pair: TypePair,
    pub rule: Option<String>,
    pub source: VectorSource,
}

/// Metadata kept per record once its vector has moved into a partition.
#[derive(Debug, Clone)]
pub struct RecordMeta {
    pub id: u64,
    pub sentence: TaggedSentence,
    pub type_pair: TypePair,
    pub rule: Option<String>,
    pub source: VectorSource,
}

/// A scored search result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub id: u64,
    pub score: f64,
}

/// Dot product with f64 accumulation in index order.
///
/// Each `f32 × f32` product is exact in f64, so the only rounding comes from the
/// sequential sum.
#[inline]
pub fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum()
}

/// Cosine similarity of two unit vectors (their dot product).
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, StoreError> {
    if u.len() != v.len() {
        return Err(StoreError::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    Ok(dot(u, v))
}

pub fn l2_norm(v: &[f32]) -> f64 {
    dot(v, v).sqrt()
}

/// Scale to unit length; zero vectors are returned unchanged.
pub fn normalize(v: &[f32]) -> Vec<f32> {
    let n = l2_norm(v);
    if n == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| (f64::from(*x) / n) as f32).collect()
}

/// Ranking order: descending score, then ascending id.
pub fn hit_order(a: &Hit, b: &Hit) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

#[derive(Debug, Default)]
struct Partition {
    ids: Vec<u64>,
    rows: Vec<f32>,
}

impl Partition {
    fn row(&self, i: usize, dim: usize) -> &[f32] {
        &self.rows[i * dim..(i + 1) * dim]
    }

    fn scores(&self, query: &[f32], dim: usize) -> Vec<Hit> {
        let score = |(i, id): (usize, &u64)| Hit { id: *id, score: dot(self.row(i, dim), query) };
        if self.ids.len() >= PARALLEL_SCAN_ROWS {
            self.ids.par_iter().enumerate().map(score).collect()
        } else {
            self.ids.iter().enumerate().map(score).collect()
        }
    }
}

/// Immutable exact-search index over one embedding space.
#[derive(Debug, Default)]
pub struct VectorIndex {
    dim: Option<usize>,
    partitions: BTreeMap<TypePair, Partition>,
    meta: Vec<RecordMeta>,
    /// id → (position in `meta`, row within its partition)
    locate: HashMap<u64, (usize, usize)>,
}

impl VectorIndex {
    pub fn build(records: impl IntoIterator<Item = EmbeddingRecord>) -> Result<Self, StoreError> {
        let mut index = VectorIndex::default();
        for rec in records {
            let dim = *index.dim.get_or_insert(rec.vector.len());
            if rec.vector.len() != dim {
                return Err(StoreError::DimensionMismatch { expected: dim, got: rec.vector.len() });
            }
            let norm = l2_norm(&rec.vector);
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(StoreError::NormViolation { id: rec.id, norm });
            }
            if index.locate.contains_key(&rec.id) {
                return Err(StoreError::DuplicateId(rec.id));
            }
            let part = index.partitions.entry(rec.type_pair.clone()).or_default();
            let row = part.ids.len();
            part.ids.push(rec.id);
            part.rows.extend_from_slice(&rec.vector);
            index.locate.insert(rec.id, (index.meta.len(), row));
            index.meta.push(RecordMeta {
                id: rec.id,
                sentence: rec.sentence,
                type_pair: rec.type_pair,
                rule: rec.rule,
                source: rec.source,
            });
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn partition_sizes(&self) -> impl Iterator<Item = (&TypePair, usize)> {
        self.partitions.iter().map(|(k, p)| (k, p.ids.len()))
    }

    pub fn partition_len(&self, pair: &TypePair) -> usize {
        self.partitions.get(pair).map_or(0, |p| p.ids.len())
    }

    pub fn record(&self, id: u64) -> Option<&RecordMeta> {
        self.locate.get(&id).map(|(m, _)| &self.meta[*m])
    }

    pub fn vector(&self, id: u64) -> Option<&[f32]> {
        let (m, row) = *self.locate.get(&id)?;
        let dim = self.dim?;
        let part = self.partitions.get(&self.meta[m].type_pair)?;
        Some(part.row(row, dim))
    }

    /// Records in insertion order.
    pub fn records(&self) -> impl Iterator<Item = &RecordMeta> {
        self.meta.iter()
    }

    /// Distinct vector sources present in the index.
    pub fn sources(&self) -> Vec<VectorSource> {
        let mut out: Vec<VectorSource> = Vec::new();
        for m in &self.meta {
            if !out.contains(&m.source) {
                out.push(m.source);
            }
        }
        out
    }

    fn check_query(&self, query: &[f32]) -> Result<Option<usize>, StoreError> {
        match self.dim {
            Some(dim) if dim != query.len() => {
                Err(StoreError::DimensionMismatch { expected: dim, got: query.len() })
            }
            other => Ok(other),
        }
    }

    /// Every record of `pair`, ranked.
    pub fn rank_all(&self, query: &[f32], pair: &TypePair) -> Result<Vec<Hit>, StoreError> {
        let Some(dim) = self.check_query(query)? else { return Ok(Vec::new()) };
        let Some(part) = self.partitions.get(pair) else { return Ok(Vec::new()) };
        let mut hits = part.scores(query, dim);
        hits.sort_by(hit_order);
        Ok(hits)
    }

    /// The `k` most similar records of `pair`.
    pub fn retrieve_topk(
        &self,
        query: &[f32],
        k: usize,
        pair: &TypePair,
    ) -> Result<Vec<Hit>, StoreError> {
        let Some(dim) = self.check_query(query)? else { return Ok(Vec::new()) };
        let Some(part) = self.partitions.get(pair) else { return Ok(Vec::new()) };
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut hits = part.scores(query, dim);
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, hit_order);
            hits.truncate(k);
        }
        hits.sort_by(hit_order);
        Ok(hits)
    }

    /// All records of `pair` with cosine ≥ `tau`, ranked.
    pub fn retrieve_threshold(
        &self,
        query: &[f32],
        tau: f64,
        pair: &TypePair,
    ) -> Result<Vec<Hit>, StoreError> {
        let Some(dim) = self.check_query(query)? else { return Ok(Vec::new()) };
        let Some(part) = self.partitions.get(pair) else { return Ok(Vec::new()) };
        let mut hits: Vec<Hit> = part.scores(query, dim).into_iter().filter(|h| h.score >= tau).collect();
        hits.sort_by(hit_order);
        Ok(hits)
    }
}

/// Vectors for gold support sentences, keyed by their canonical tagged text.
#[derive(Debug, Default, Clone)]
pub struct SupportVectors {
    dim: Option<usize>,
    by_text: HashMap<String, Vec<f32>>,
}

impl SupportVectors {
    pub fn from_records(records: impl IntoIterator<Item = EmbeddingRecord>) -> Result<Self, StoreError> {
        let mut out = SupportVectors::default();
        for rec in records {
            let dim = *out.dim.get_or_insert(rec.vector.len());
            if rec.vector.len() != dim {
                return Err(StoreError::DimensionMismatch { expected: dim, got: rec.vector.len() });
            }
            let norm = l2_norm(&rec.vector);
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(StoreError::NormViolation { id: rec.id, norm });
            }
            out.by_text.insert(rec.sentence.render(), rec.vector);
        }
        Ok(out)
    }

    pub fn get(&self, sentence: &TaggedSentence) -> Option<&[f32]> {
        self.by_text.get(&sentence.render()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_text.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use crate::tagged::parse_tagged;
    use rand::Rng;

    fn sentence() -> TaggedSentence {
        parse_tagged("<subject>A</subject> met <object>B</object>").unwrap()
    }

    pub(crate) fn rec(id: u64, v: &[f32], pair: (&str, &str)) -> EmbeddingRecord {
        EmbeddingRecord {
            id,
            sentence: sentence(),
            vector: v.to_vec(),
            type_pair: TypePair::new(pair.0, pair.1),
            rule: None,
            source: VectorSource::SentenceEmbedding,
        }
    }

    const PC: (&str, &str) = ("PERSON", "CITY");

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[0.6, 0.8], &[0.6, 0.8]).unwrap() - 1.0).abs() < 1e-7);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 0.0], &[0.8, 0.6]).unwrap() - 0.8).abs() < 1e-7);
        assert_eq!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(StoreError::DimensionMismatch { expected: 1, got: 2 })
        );
    }

    #[test]
    fn cosine_symmetric() {
        let mut rng = rng_from(3);
        for _ in 0..50 {
            let u = normalize(&(0..8).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f32>>());
            let v = normalize(&(0..8).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f32>>());
            let a = cosine(&u, &v).unwrap();
            assert!((a - cosine(&v, &u).unwrap()).abs() < 1e-12);
            assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&a));
        }
    }

    #[test]
    fn empty_index_answers_empty() {
        let index = VectorIndex::build(Vec::new()).unwrap();
        assert!(index.is_empty());
        let pair = TypePair::new("PERSON", "CITY");
        assert!(index.retrieve_topk(&[1.0, 0.0], 3, &pair).unwrap().is_empty());
        assert!(index.retrieve_threshold(&[1.0, 0.0], 0.0, &pair).unwrap().is_empty());
    }

    #[test]
    fn build_rejects_bad_input() {
        let err = VectorIndex::build(vec![rec(1, &[1.0, 0.0], PC), rec(2, &[1.0, 0.0, 0.0], PC)]).unwrap_err();
        assert_eq!(err, StoreError::DimensionMismatch { expected: 2, got: 3 });
        let err = VectorIndex::build(vec![rec(1, &[1.0, 0.0], PC), rec(1, &[0.0, 1.0], PC)]).unwrap_err();
        assert_eq!(err, StoreError::DuplicateId(1));
        let err = VectorIndex::build(vec![rec(1, &[1.0, 1.0], PC)]).unwrap_err();
        assert!(matches!(err, StoreError::NormViolation { id: 1, .. }));
    }

    #[test]
    fn partition_sizes_sum_to_count() {
        let index = VectorIndex::build(vec![
            rec(1, &[1.0, 0.0], PC),
            rec(2, &[0.0, 1.0], ("PERSON", "NATIONALITY")),
            rec(3, &[0.6, 0.8], PC),
        ])
        .unwrap();
        let total: usize = index.partition_sizes().map(|(_, n)| n).sum();
        assert_eq!(total, index.len());
        assert_eq!(index.vector(3).unwrap(), &[0.6, 0.8]);
    }

    #[test]
    fn threshold_hand_case() {
        let index = VectorIndex::build(vec![
            rec(1, &[1.0, 0.0], PC),
            rec(2, &[0.8, 0.6], PC),
            rec(3, &[0.0, 1.0], PC),
        ])
        .unwrap();
        let pair = TypePair::new("PERSON", "CITY");
        let hits = index.retrieve_threshold(&[1.0, 0.0], 0.6, &pair).unwrap();
        assert_eq!(hits.iter().map(|h| h.id).collect::<Vec<_>>(), vec![1, 2]);
        let exact = index.retrieve_threshold(&[1.0, 0.0], 1.0, &pair).unwrap();
        assert_eq!(exact.iter().map(|h| h.id).collect::<Vec<_>>(), vec![1]);
        let none = index.retrieve_threshold(&[0.0, -1.0], 1.0, &pair).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn topk_filters_by_pair_and_breaks_ties_by_id() {
        let index = VectorIndex::build(vec![
            rec(9, &[1.0, 0.0], PC),
            rec(4, &[1.0, 0.0], PC),
            rec(5, &[1.0, 0.0], ("PERSON", "NATIONALITY")),
            rec(6, &[0.0, 1.0], PC),
        ])
        .unwrap();
        let hits = index.retrieve_topk(&[1.0, 0.0], 10, &TypePair::new("PERSON", "CITY")).unwrap();
        assert_eq!(hits.iter().map(|h| h.id).collect::<Vec<_>>(), vec![4, 9, 6]);
        assert!(index.retrieve_topk(&[1.0, 0.0], 0, &TypePair::new("PERSON", "CITY")).unwrap().is_empty());
        let nat = index.retrieve_topk(&[1.0, 0.0], 10, &TypePair::new("PERSON", "NATIONALITY")).unwrap();
        assert_eq!(nat.iter().map(|h| h.id).collect::<Vec<_>>(), vec![5]);
        assert!(matches!(
            index.retrieve_topk(&[1.0], 1, &TypePair::new("PERSON", "CITY")),
            Err(StoreError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn support_vectors_lookup_by_text() {
        let sv = SupportVectors::from_records(vec![rec(1, &[0.6, 0.8], PC)]).unwrap();
        assert_eq!(sv.get(&sentence()).unwrap(), &[0.6, 0.8]);
    }
}
