use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::llm::{BinaryDecision, Bindings, DecisionMethod, Gateway, GatewayError, MulticlassAnswer, TemplateId};
use crate::model::{Label, RelationSpec};
use crate::seed::{child_seed, rng_from};
use crate::tagged::TaggedSentence;

/// Audit record of one (query, relation) prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationDecision {
    pub relation: String,
    pub answer: bool,
    pub method: DecisionMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_yes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_no: Option<f64>,
}

impl RelationDecision {
    pub fn new(relation: &str, d: &BinaryDecision) -> Self {
        Self {
            relation: relation.to_string(),
            answer: d.answer,
            method: d.method,
            score_yes: d.score_yes,
            score_no: d.score_no,
        }
    }
}

/// Ask whether `relation` holds for `query` given its support list.
pub fn infer_binary(
    gateway: &Gateway,
    query: &TaggedSentence,
    relation: &RelationSpec,
    supports: &[TaggedSentence],
) -> Result<BinaryDecision, GatewayError> {
    assert!(!supports.is_empty(), "support list must hold at least the gold example");
    gateway.binary_decide(TemplateId::BinaryRelation, &Bindings::binary(relation, supports, query))
}

/// Collapse per-relation answers into one label.
///
/// Several yeses are broken by a uniform draw seeded from
/// (`seed`, `episode_id`, `query_idx`), so the outcome does not depend on
/// scheduling.
pub fn aggregate<'a, I>(decisions: I, seed: u64, episode_id: &str, query_idx: usize) -> Label
where
    I: IntoIterator<Item = (&'a str, bool)>,
{
    let yes: Vec<&str> = decisions.into_iter().filter(|(_, y)| *y).map(|(r, _)| r).collect();
    match yes.as_slice() {
        [] => Label::NoRelation,
        [one] => Label::Relation(one.to_string()),
        many => {
            let s = child_seed(seed, &["aggregate".into(), episode_id.into(), query_idx.into()]);
            let i = rng_from(s).random_range(0..many.len());
            Label::Relation(many[i].to_string())
        }
    }
}

/// One prompt over all `relations`; supports are cut to a common length since
/// the template numbers them once.
pub fn infer_multiclass(
    gateway: &Gateway,
    query: &TaggedSentence,
    relations: &[(&RelationSpec, &[TaggedSentence])],
) -> Result<MulticlassAnswer, GatewayError> {
    let n = relations.iter().map(|(_, s)| s.len()).min().unwrap_or(0);
    let cut: Vec<(&RelationSpec, &[TaggedSentence])> = relations.iter().map(|(r, s)| (*r, &s[..n])).collect();
    gateway.multiclass(&cut, query)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregation_cases() {
        assert_eq!(aggregate([("r1", false), ("r2", false)], 1, "e", 0), Label::NoRelation);
        assert_eq!(aggregate([("r1", false), ("r2", true)], 1, "e", 0), Label::Relation("r2".into()));
        let a = aggregate([("r1", true), ("r3", true)], 7, "e", 2);
        assert_eq!(a, aggregate([("r1", true), ("r3", true)], 7, "e", 2));
        assert!(matches!(&a, Label::Relation(r) if r == "r1" || r == "r3"));
    }

    #[test]
    fn tie_break_is_roughly_uniform() {
        let mut first = 0;
        for seed in 0..10_000u64 {
            if aggregate([("r1", true), ("r3", true)], seed, "e", 0) == Label::Relation("r1".into()) {
                first += 1;
            }
        }
        assert!((4800..=5200).contains(&first), "{first}");
    }
}
