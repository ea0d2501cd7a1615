use std::collections::HashMap;

use super::{NerFilterMode, PipelineError};
use crate::llm::Gateway;
use crate::model::{Episode, Query};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FilterOutcome {
    /// Indices into `episode.relations`, in episode order.
    pub survivors: Vec<usize>,
    /// Entity-type prompts issued.
    pub llm_checks: usize,
}

/// Relations whose expected entity types are compatible with the query.
///
/// Prompted checks are cached per (role, type) within the query, so relations
/// sharing a type reuse one answer.
pub fn filter_relations(
    episode: &Episode,
    query: &Query,
    mode: NerFilterMode,
    gateway: Option<&Gateway>,
) -> Result<FilterOutcome, PipelineError> {
    let all = || (0..episode.relations.len()).collect::<Vec<_>>();
    let use_llm = match mode {
        NerFilterMode::Off => return Ok(FilterOutcome { survivors: all(), llm_checks: 0 }),
        NerFilterMode::Deterministic => false,
        NerFilterMode::Llm => true,
        NerFilterMode::DeterministicThenLlm => query.types.is_none(),
    };
    if !use_llm {
        // Without gold types the deterministic check cannot reject anything.
        let Some(types) = &query.types else {
            return Ok(FilterOutcome { survivors: all(), llm_checks: 0 });
        };
        let survivors = episode
            .relations
            .iter()
            .enumerate()
            .filter(|(_, r)| r.spec.type_pair() == *types)
            .map(|(i, _)| i)
            .collect();
        return Ok(FilterOutcome { survivors, llm_checks: 0 });
    }
    let gateway = gateway.ok_or_else(|| PipelineError::Config("LLM entity-type filter needs a gateway".into()))?;
    let s = &query.sentence;
    let mut cache: HashMap<(bool, String), bool> = HashMap::new();
    let mut checks = 0;
    let mut check = |subject: bool, ty: &str| -> Result<bool, PipelineError> {
        if let Some(v) = cache.get(&(subject, ty.to_string())) {
            return Ok(*v);
        }
        let entity = if subject { &s.subject().surface } else { &s.object().surface };
        let ok = gateway.ner_check(s, entity, ty)?.answer;
        checks += 1;
        cache.insert((subject, ty.to_string()), ok);
        Ok(ok)
    };
    let mut survivors = Vec::new();
    for (i, r) in episode.relations.iter().enumerate() {
        if check(true, r.spec.subject_type.as_str())? && check(false, r.spec.object_type.as_str())? {
            survivors.push(i);
        }
    }
    Ok(FilterOutcome { survivors, llm_checks: checks })
}
