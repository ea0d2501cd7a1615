use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::pipeline::{SelectionTrace, Stores};
use crate::select::{diversity_report, Embedded, Provenance};
use crate::tagged::{parse_tagged, TaggedSentence};

/// Mean number of generated and retrieved picks per relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRow {
    pub strategy: String,
    pub shots: usize,
    pub relations: usize,
    pub generated: f64,
    pub retrieved: f64,
}

impl ProvenanceRow {
    /// `generated/retrieved` with two decimals, e.g. `3.05/0.95`.
    pub fn split(&self) -> String {
        format!("{:.2}/{:.2}", self.generated, self.retrieved)
    }
}

/// (generated, retrieved) picks of one trace.
pub fn trace_provenance(t: &SelectionTrace) -> (usize, usize) {
    let g = t.chosen.iter().filter(|c| c.provenance == Provenance::Generated).count();
    (g, t.chosen.len() - g)
}

/// Mean pick provenance per (strategy, shots), over relations.
pub fn pick_provenance<'a>(traces: impl IntoIterator<Item = &'a SelectionTrace>) -> Vec<ProvenanceRow> {
    let mut acc: BTreeMap<(String, usize), (usize, usize, usize)> = BTreeMap::new();
    for t in traces {
        let (g, r) = trace_provenance(t);
        let e = acc.entry((t.strategy.clone(), t.shots)).or_default();
        e.0 += 1;
        e.1 += g;
        e.2 += r;
    }
    acc.into_iter()
        .map(|((strategy, shots), (n, g, r))| ProvenanceRow {
            strategy,
            shots,
            relations: n,
            generated: g as f64 / n as f64,
            retrieved: r as f64 / n as f64,
        })
        .collect()
}

/// Diversity of the additional examples, averaged over relations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub strategy: String,
    pub shots: usize,
    pub relations: usize,
    pub gold_overlap_pct: f64,
    pub gold_cosine: Option<f64>,
    pub among_overlap_pct: Option<f64>,
    pub among_cosine: Option<f64>,
}

#[derive(Default)]
struct Acc {
    n: usize,
    gold_overlap: f64,
    gold_cos: (f64, usize),
    among_overlap: (f64, usize),
    among_cos: (f64, usize),
}

fn mean((s, n): (f64, usize)) -> Option<f64> {
    (n > 0).then(|| s / n as f64)
}

/// Token overlap and cosine statistics per (strategy, shots).
///
/// Vectors come from `stores` by tagged text: the support-vector file first
/// (which may also hold generated sentences), then the embedding store.
pub fn trace_diversity<'a>(traces: impl IntoIterator<Item = &'a SelectionTrace>, stores: &Stores) -> Vec<DiversityRow> {
    let mut acc: BTreeMap<(String, usize), Acc> = BTreeMap::new();
    for t in traces {
        let Ok(gold) = parse_tagged(&t.gold) else {
            log::warn!("unparseable gold in trace {}/{}", t.episode_id, t.relation);
            continue;
        };
        let extra: Vec<TaggedSentence> = t.chosen.iter().filter_map(|c| parse_tagged(&c.text).ok()).collect();
        let vec_of = |s: &TaggedSentence, id: Option<u64>| {
            stores
                .support_vector(s)
                .or_else(|| id.and_then(|id| stores.index.as_ref()?.vector(id)))
        };
        let embedded: Vec<Embedded<'_>> = extra
            .iter()
            .zip(&t.chosen)
            .map(|(s, c)| Embedded { sentence: s, vector: vec_of(s, c.store_id) })
            .collect();
        let Some(rep) = diversity_report(Embedded { sentence: &gold, vector: vec_of(&gold, None) }, &embedded) else {
            continue;
        };
        let a = acc.entry((t.strategy.clone(), t.shots)).or_default();
        a.n += 1;
        a.gold_overlap += rep.gold_vs_additional.overlap_pct;
        if let Some(c) = rep.gold_vs_additional.mean_cosine {
            a.gold_cos.0 += c;
            a.gold_cos.1 += 1;
        }
        if let Some(among) = rep.among_additional {
            a.among_overlap.0 += among.overlap_pct;
            a.among_overlap.1 += 1;
            if let Some(c) = among.mean_cosine {
                a.among_cos.0 += c;
                a.among_cos.1 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|((strategy, shots), a)| DiversityRow {
            strategy,
            shots,
            relations: a.n,
            gold_overlap_pct: a.gold_overlap / a.n as f64,
            gold_cosine: mean(a.gold_cos),
            among_overlap_pct: mean(a.among_overlap),
            among_cosine: mean(a.among_cos),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::TraceChoice;

    fn trace(provs: &[Provenance]) -> SelectionTrace {
        SelectionTrace {
            episode_id: "e".into(),
            relation: "r".into(),
            strategy: "hybrid/sentence".into(),
            shots: provs.len() + 1,
            chosen: provs
                .iter()
                .enumerate()
                .map(|(i, p)| TraceChoice {
                    pool_id: i + 1,
                    provenance: *p,
                    text: format!("<subject>A</subject> x{i} <object>B</object>"),
                    store_id: None,
                    summary: None,
                })
                .collect(),
            pool_n: 2 * provs.len(),
            k: 0,
            gold: "<subject>A</subject> met <object>B</object>".into(),
            starved: false,
            pick_fallback: false,
        }
    }

    #[test]
    fn direct_count() {
        use Provenance::*;
        let t = trace(&[Generated, Generated, Generated, Retrieved]);
        assert_eq!(trace_provenance(&t), (3, 1));
        let rows = pick_provenance([&t, &trace(&[Generated, Retrieved, Retrieved, Retrieved])]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].split(), "2.00/2.00");
    }

    #[test]
    fn diversity_without_vectors() {
        let t = trace(&[Provenance::Generated, Provenance::Generated]);
        let rows = trace_diversity([&t], &Stores::none());
        assert_eq!(rows[0].relations, 1);
        assert!(rows[0].gold_cosine.is_none());
        // {a, met, b} vs {a, x0, b}: 2 of 4 tokens shared.
        assert!((rows[0].gold_overlap_pct - 50.0).abs() < 1e-12);
    }
}
