//! Token-overlap and cosine diversity statistics.
//!
//! Overlap between two sentences is the Jaccard index of their lowercased
//! whitespace token sets (tags stripped), as a percentage.

use serde::{Deserialize, Serialize};

use crate::store::dot;
use crate::tagged::{token_set, TaggedSentence};

/// A sentence and, when available, its embedding.
#[derive(Debug, Clone, Copy)]
pub struct Embedded<'a> {
    pub sentence: &'a TaggedSentence,
    pub vector: Option<&'a [f32]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PairStats {
    /// Mean Jaccard overlap, in percent.
    pub overlap_pct: f64,
    /// Mean cosine over pairs where both vectors are known; `None` if no such pair.
    pub mean_cosine: Option<f64>,
    pub pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiversityReport {
    pub gold_vs_additional: PairStats,
    /// `None` with fewer than two additional examples.
    pub among_additional: Option<PairStats>,
}

pub fn token_overlap_pct(a: &TaggedSentence, b: &TaggedSentence) -> f64 {
    let ta = token_set(a);
    let tb = token_set(b);
    let union = ta.union(&tb).count();
    if union == 0 {
        return 0.0;
    }
    100.0 * ta.intersection(&tb).count() as f64 / union as f64
}

fn pair_stats<'a>(pairs: impl Iterator<Item = (Embedded<'a>, Embedded<'a>)>) -> PairStats {
    let mut n = 0usize;
    let mut overlap = 0.0;
    let mut cos_sum = 0.0;
    let mut cos_n = 0usize;
    for (a, b) in pairs {
        n += 1;
        overlap += token_overlap_pct(a.sentence, b.sentence);
        if let (Some(u), Some(v)) = (a.vector, b.vector) {
            cos_sum += dot(u, v);
            cos_n += 1;
        }
    }
    PairStats {
        overlap_pct: if n == 0 { 0.0 } else { overlap / n as f64 },
        mean_cosine: (cos_n > 0).then(|| cos_sum / cos_n as f64),
        pairs: n,
    }
}

/// Statistics between the gold support and each additional example, and over
/// all unordered pairs of additional examples. Returns `None` when there are no
/// additional examples.
pub fn diversity_report(gold: Embedded<'_>, additional: &[Embedded<'_>]) -> Option<DiversityReport> {
    if additional.is_empty() {
        return None;
    }
    let gold_vs_additional = pair_stats(additional.iter().map(|a| (gold, *a)));
    let among_additional = (additional.len() >= 2).then(|| {
        pair_stats(
            additional
                .iter()
                .enumerate()
                .flat_map(|(i, a)| additional[i + 1..].iter().map(move |b| (*a, *b))),
        )
    });
    Some(DiversityReport { gold_vs_additional, among_additional })
}
