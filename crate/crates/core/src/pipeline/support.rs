use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::llm::{Gateway, GenerationMode};
use crate::model::{CandidateRelation, TypePair};
use crate::seed::{child_seed, SeedPart};
use crate::select::{
    assemble_hybrid_pool, choose_clusters, kmeans, num_clusters, representative, shuffle_pool, CentroidDistance,
    PoolCandidate, Provenance, SelectionStrategy, StrategyKind,
};
use crate::store::{Hit, SupportVectors, VectorIndex};
use crate::tagged::TaggedSentence;

/// The embedding store bound to a run, plus vectors for the gold supports.
#[derive(Debug, Default)]
pub struct Stores {
    pub index: Option<VectorIndex>,
    pub supports: Option<SupportVectors>,
    by_text: HashMap<String, u64>,
}

impl Stores {
    pub fn new(index: Option<VectorIndex>, supports: Option<SupportVectors>) -> Self {
        let by_text = index
            .as_ref()
            .map(|ix| ix.records().map(|r| (r.sentence.render(), r.id)).collect())
            .unwrap_or_default();
        Self { index, supports, by_text }
    }

    pub fn none() -> Self {
        Self::default()
    }

    /// Vector of a gold support: the support file first, then a store record with
    /// the same tagged text.
    pub fn support_vector(&self, sentence: &TaggedSentence) -> Option<&[f32]> {
        if let Some(v) = self.supports.as_ref().and_then(|s| s.get(sentence)) {
            return Some(v);
        }
        let id = self.by_text.get(&sentence.render())?;
        self.index.as_ref()?.vector(*id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceChoice {
    pub pool_id: usize,
    pub provenance: Provenance,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store_id: Option<u64>,
    /// Replacement text when the example was summarized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

/// What was selected for one relation of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub episode_id: String,
    pub relation: String,
    pub strategy: String,
    pub shots: usize,
    pub chosen: Vec<TraceChoice>,
    /// Size of the candidate pool the choice was made from.
    pub pool_n: usize,
    /// Number of clusters, 0 when no clustering ran.
    pub k: usize,
    pub gold: String,
    /// Fewer candidates than needed; the list was padded or is short.
    pub starved: bool,
    pub pick_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct SupportSet {
    /// Gold support first.
    pub examples: Vec<TaggedSentence>,
    pub trace: SelectionTrace,
}

/// Nearest records of `pair`, skipping copies of the gold sentence.
fn closest_excluding(
    index: &VectorIndex,
    query: &[f32],
    pair: &TypePair,
    m: usize,
    gold: &str,
) -> Result<Vec<Hit>, PipelineError> {
    if m == 0 {
        return Ok(Vec::new());
    }
    let total = index.partition_len(pair);
    let mut want = m + 1;
    loop {
        let hits = index.retrieve_topk(query, want, pair)?;
        let exhausted = hits.len() < want || want >= total;
        let kept: Vec<Hit> = hits.into_iter().filter(|h| !is_gold(index, h.id, gold)).take(m).collect();
        if kept.len() == m || exhausted {
            return Ok(kept);
        }
        want = (want * 2).min(total.max(1));
    }
}

fn is_gold(index: &VectorIndex, id: u64, gold: &str) -> bool {
    index.record(id).is_some_and(|r| r.sentence.render() == gold)
}

struct Retrieved {
    hits: Vec<Hit>,
    pool_n: usize,
    k: usize,
    starved: bool,
}

/// Cluster-based choice of `m` records: k-means over the τ-pool, `m` clusters
/// by policy, one representative each; padded in closest order when short.
#[allow(clippy::too_many_arguments)]
fn retrieve_clustered(
    strategy: &SelectionStrategy,
    index: &VectorIndex,
    v: &[f32],
    pair: &TypePair,
    tau: f64,
    m: usize,
    gold: &str,
    seed: u64,
) -> Result<Retrieved, PipelineError> {
    let init = strategy.clustering.expect("validated");
    let policy = strategy.cluster_policy.expect("validated");
    let pool: Vec<Hit> =
        index.retrieve_threshold(v, tau, pair)?.into_iter().filter(|h| !is_gold(index, h.id, gold)).collect();
    let n = pool.len();
    let k = num_clusters(n);
    let mut chosen: Vec<u64> = Vec::new();
    if k > 0 {
        let points: Vec<(u64, &[f32])> =
            pool.iter().map(|h| (h.id, index.vector(h.id).expect("id from index"))).collect();
        let outcome = kmeans(&points, k, init, child_seed(seed, &["kmeans".into()]))?;
        let picked = choose_clusters(
            &outcome.clusters,
            v,
            m,
            policy,
            CentroidDistance::Cosine,
            child_seed(seed, &["policy".into()]),
        );
        for c in picked {
            if let Some(id) = representative(&outcome.clusters[c], |id| index.vector(id)) {
                chosen.push(id);
            }
        }
    }
    let starved = n < m;
    if chosen.len() < m {
        if n == 0 {
            log::info!("empty candidate pool at tau {tau}; falling back to closest retrieval");
        }
        // Pad from the τ-pool in rank order, then from below τ.
        let extra = closest_excluding(index, v, pair, m + chosen.len(), gold)?;
        for h in extra {
            if chosen.len() == m {
                break;
            }
            if !chosen.contains(&h.id) {
                chosen.push(h.id);
            }
        }
    }
    let score = |id: u64| crate::store::dot(v, index.vector(id).expect("id from index"));
    let hits = chosen.into_iter().map(|id| Hit { id, score: score(id) }).collect();
    Ok(Retrieved { hits, pool_n: n, k, starved })
}

fn retrieve(
    strategy: &SelectionStrategy,
    stores: &Stores,
    rel: &CandidateRelation,
    tau: f64,
    m: usize,
    seed: u64,
) -> Result<(Retrieved, Vec<f32>), PipelineError> {
    let index = stores.index.as_ref().ok_or_else(|| PipelineError::MissingStore(strategy.label()))?;
    let v = stores
        .support_vector(&rel.support)
        .ok_or_else(|| PipelineError::MissingSupportVector(rel.spec.name.clone()))?
        .to_vec();
    let pair = rel.spec.type_pair();
    let gold = rel.support.render();
    let r = if strategy.clustering.is_some() {
        retrieve_clustered(strategy, index, &v, &pair, tau, m, &gold, seed)?
    } else {
        let hits = closest_excluding(index, &v, &pair, m, &gold)?;
        let starved = hits.len() < m;
        Retrieved { pool_n: index.partition_len(&pair), hits, k: 0, starved }
    };
    if r.starved {
        log::info!("relation {}: {} candidate(s) for {m} slot(s)", rel.spec.name, r.pool_n);
    }
    Ok((r, v))
}

fn retrieved_candidates(index: &VectorIndex, hits: &[Hit]) -> Vec<PoolCandidate> {
    hits.iter()
        .map(|h| PoolCandidate {
            sentence: index.record(h.id).expect("id from index").sentence.clone(),
            vector: index.vector(h.id).map(<[f32]>::to_vec),
            store_id: Some(h.id),
        })
        .collect()
}

/// Assemble the K-shot list for one relation of one episode.
///
/// `seed` is the selection seed for this (episode, relation); all draws derive
/// from it.
pub fn build_support(
    episode_id: &str,
    rel: &CandidateRelation,
    strategy: &SelectionStrategy,
    tau: f64,
    stores: &Stores,
    gateway: Option<&Gateway>,
    seed: u64,
) -> Result<SupportSet, PipelineError> {
    let m = strategy.additional();
    let need_gateway = || gateway.ok_or_else(|| PipelineError::Config(format!("{} needs a gateway", strategy.label())));
    let mut trace = SelectionTrace {
        episode_id: episode_id.to_string(),
        relation: rel.spec.name.clone(),
        strategy: strategy.label(),
        shots: strategy.shots,
        chosen: Vec::new(),
        pool_n: 0,
        k: 0,
        gold: rel.support.render(),
        starved: false,
        pick_fallback: false,
    };
    let mut additional: Vec<(TaggedSentence, TraceChoice)> = Vec::new();
    let choice = |pool_id: usize, provenance, s: &TaggedSentence, store_id| TraceChoice {
        pool_id,
        provenance,
        text: s.render(),
        store_id,
        summary: None,
    };

    match strategy.kind {
        StrategyKind::GoldOnly => {}
        StrategyKind::LlmParaphrase | StrategyKind::LlmGenerate => {
            let mode = if strategy.kind == StrategyKind::LlmParaphrase {
                GenerationMode::Paraphrase
            } else {
                GenerationMode::New
            };
            let out = need_gateway()?.generate_examples(&rel.spec, &rel.support, m, mode)?;
            trace.pool_n = out.len();
            for (i, s) in out.into_iter().enumerate() {
                let c = choice(i + 1, Provenance::Generated, &s, None);
                additional.push((s, c));
            }
        }
        StrategyKind::RetrieveClosest | StrategyKind::RetrieveCluster => {
            let (r, _) = retrieve(strategy, stores, rel, tau, m, seed)?;
            let index = stores.index.as_ref().expect("checked in retrieve");
            trace.pool_n = r.pool_n;
            trace.k = r.k;
            trace.starved = r.starved;
            for (i, h) in r.hits.iter().enumerate() {
                let s = index.record(h.id).expect("id from index").sentence.clone();
                let c = choice(i + 1, Provenance::Retrieved, &s, Some(h.id));
                additional.push((s, c));
            }
        }
        StrategyKind::Hybrid => {
            let gw = need_gateway()?;
            let generated = gw.generate_examples(&rel.spec, &rel.support, m, GenerationMode::New)?;
            let (r, gold_vec) = retrieve(strategy, stores, rel, tau, m, seed)?;
            let index = stores.index.as_ref().expect("checked in retrieve");
            let generated: Vec<PoolCandidate> = generated.into_iter().map(PoolCandidate::generated).collect();
            let retrieved = retrieved_candidates(index, &r.hits);
            let shuffle_seed = child_seed(seed, &[SeedPart::Str("shuffle")]);
            let pool = if generated.len() == retrieved.len() {
                assemble_hybrid_pool(generated, retrieved, shuffle_seed)?
            } else {
                shuffle_pool(generated, retrieved, shuffle_seed)
            };
            let n_pick = m.min(pool.len());
            let picked = gw.pick_diverse(&rel.spec, &pool, n_pick, Some(&gold_vec))?;
            trace.pool_n = pool.len();
            trace.k = r.k;
            trace.starved = r.starved;
            trace.pick_fallback = picked.fell_back;
            for id in picked.ids {
                let e = pool.get(id).expect("validated pick");
                let s = e.candidate.sentence.clone();
                let c = choice(e.pool_id, e.provenance, &s, e.candidate.store_id);
                additional.push((s, c));
            }
        }
    }

    if strategy.summarize && !additional.is_empty() {
        let gw = need_gateway()?;
        for (s, c) in &mut additional {
            let out = gw.summarize(s)?;
            if !out.fell_back {
                c.summary = Some(out.sentence.render());
            }
            *s = out.sentence;
        }
    }

    let mut examples = Vec::with_capacity(1 + additional.len());
    examples.push(rel.support.clone());
    for (s, c) in additional {
        examples.push(s);
        trace.chosen.push(c);
    }
    Ok(SupportSet { examples, trace })
}
