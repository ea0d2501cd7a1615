//! Candidate pools mixing LLM-generated and retrieved sentences.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::rng_from;
use crate::tagged::TaggedSentence;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("hybrid pool needs equal halves, got {generated} generated and {retrieved} retrieved")]
    SizeMismatch { generated: usize, retrieved: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Generated,
    Retrieved,
}

/// A sentence offered to the pool, with its vector when one is known.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolCandidate {
    pub sentence: TaggedSentence,
    pub vector: Option<Vec<f32>>,
    /// Record id in the candidate store, for retrieved sentences.
    pub store_id: Option<u64>,
}

impl PoolCandidate {
    pub fn generated(sentence: TaggedSentence) -> Self {
        Self { sentence, vector: None, store_id: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    /// 1-based position after shuffling.
    pub pool_id: usize,
    pub provenance: Provenance,
    pub candidate: PoolCandidate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub entries: Vec<PoolEntry>,
    pub seed: u64,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, pool_id: usize) -> Option<&PoolEntry> {
        pool_id.checked_sub(1).and_then(|i| self.entries.get(i))
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.entries.iter().filter(|e| e.provenance == provenance).count()
    }
}

/// Shuffle both sources together under `seed` and number the result from 1.
///
/// Unlike [`assemble_hybrid_pool`] the halves may differ in size; used when
/// retrieval could not fill its half.
pub fn shuffle_pool(generated: Vec<PoolCandidate>, retrieved: Vec<PoolCandidate>, seed: u64) -> CandidatePool {
    let mut items: Vec<(Provenance, PoolCandidate)> = generated
        .into_iter()
        .map(|c| (Provenance::Generated, c))
        .chain(retrieved.into_iter().map(|c| (Provenance::Retrieved, c)))
        .collect();
    items.shuffle(&mut rng_from(seed));
    let entries = items
        .into_iter()
        .enumerate()
        .map(|(i, (provenance, candidate))| PoolEntry { pool_id: i + 1, provenance, candidate })
        .collect();
    CandidatePool { entries, seed }
}

/// Pool of N = 2·half entries: `half` generated plus `half` retrieved, shuffled.
pub fn assemble_hybrid_pool(
    generated: Vec<PoolCandidate>,
    retrieved: Vec<PoolCandidate>,
    seed: u64,
) -> Result<CandidatePool, PoolError> {
    if generated.len() != retrieved.len() || generated.is_empty() {
        return Err(PoolError::SizeMismatch { generated: generated.len(), retrieved: retrieved.len() });
    }
    Ok(shuffle_pool(generated, retrieved, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagged::parse_tagged;

    fn cands(prefix: &str, n: usize) -> Vec<PoolCandidate> {
        (0..n)
            .map(|i| PoolCandidate::generated(parse_tagged(&format!("<subject>{prefix}{i}</subject> x <object>o</object>")).unwrap()))
            .collect()
    }

    #[test]
    fn four_plus_four() {
        let pool = assemble_hybrid_pool(cands("g", 4), cands("r", 4), 3).unwrap();
        assert_eq!(pool.len(), 8);
        assert_eq!(pool.entries.iter().map(|e| e.pool_id).collect::<Vec<_>>(), (1..=8).collect::<Vec<_>>());
        assert_eq!(pool.count(Provenance::Generated), 4);
        assert_eq!(pool.count(Provenance::Retrieved), 4);
        for e in &pool.entries {
            let is_gen = e.candidate.sentence.subject().surface.starts_with('g');
            assert_eq!(is_gen, e.provenance == Provenance::Generated);
        }
    }

    #[test]
    fn seeded_permutation() {
        let a = assemble_hybrid_pool(cands("g", 9), cands("r", 9), 17).unwrap();
        let b = assemble_hybrid_pool(cands("g", 9), cands("r", 9), 17).unwrap();
        assert_eq!(a, b);
        let c = assemble_hybrid_pool(cands("g", 9), cands("r", 9), 18).unwrap();
        assert_ne!(a.entries, c.entries);
    }

    #[test]
    fn size_mismatch() {
        assert_eq!(
            assemble_hybrid_pool(cands("g", 4), cands("r", 3), 0).unwrap_err(),
            PoolError::SizeMismatch { generated: 4, retrieved: 3 }
        );
        assert!(assemble_hybrid_pool(Vec::new(), Vec::new(), 0).is_err());
    }

    #[test]
    fn lookup_by_pool_id() {
        let pool = assemble_hybrid_pool(cands("g", 4), cands("r", 4), 3).unwrap();
        assert_eq!(pool.get(1).unwrap().pool_id, 1);
        assert!(pool.get(0).is_none());
        assert!(pool.get(9).is_none());
    }
}
