//! Typed operations over a [`ChatTransport`]: yes/no decisions, example
//! generation, summaries, hybrid picks, entity-type checks and multi-class
//! answers. Every call is bounded by the retry budget.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, LazyLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::decoding::DecodingProfile;
use super::template::{render_prompt, Bindings, TemplateError, TemplateId};
use super::transport::{ChatReply, ChatRequest, ChatTransport, TransportError};
use crate::model::{Label, RelationSpec, NO_RELATION};
use crate::select::hybrid::CandidatePool;
use crate::store::dot;
use crate::tagged::{parse_tagged, TaggedSentence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    /// Retries after the first attempt, for transport failures and for invalid answers alike.
    pub retries: u32,
    /// First backoff delay; doubles on every retry. Zero disables sleeping.
    pub backoff_ms: u64,
    pub decoding: DecodingProfile,
    /// Tokens requested for yes/no scoring.
    pub scoring_max_tokens: u32,
    pub top_logprobs: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self { retries: 3, backoff_ms: 250, decoding: DecodingProfile::qwen(), scoring_max_tokens: 1, top_logprobs: 20 }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{template}: endpoint failed after {attempts} attempt(s): {last}")]
    Endpoint { template: TemplateId, attempts: u32, last: TransportError },
    #[error("{template}: no yes/no answer in {text:?}")]
    UnparseableAnswer { template: TemplateId, text: String },
    #[error("generation produced {got} valid line(s), wanted {wanted}, after {attempts} attempt(s)")]
    GenerationInvalid { wanted: usize, got: usize, attempts: u32 },
}

/// How a yes/no decision was read off the reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionMethod {
    /// Endpoint-scored log-probabilities of the constrained continuations.
    LogitConstrained,
    /// Alternatives of the first sampled token.
    LogitTop,
    /// First alphabetic token of the text.
    TextFallback,
}

impl DecisionMethod {
    pub fn is_logit(self) -> bool {
        !matches!(self, DecisionMethod::TextFallback)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryDecision {
    pub answer: bool,
    pub method: DecisionMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_yes: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_no: Option<f64>,
}

impl BinaryDecision {
    /// Logit rule: yes iff log P(yes) ≥ log P(no).
    pub fn from_scores(score_yes: f64, score_no: f64, method: DecisionMethod) -> Self {
        Self { answer: score_yes >= score_no, method, score_yes: Some(score_yes), score_no: Some(score_no) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationMode {
    Paraphrase,
    New,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub sentence: TaggedSentence,
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PickOutcome {
    /// Picked pool ids, in reply order (or ranking order on fallback).
    pub ids: Vec<usize>,
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulticlassAnswer {
    pub label: Label,
    /// The reply named no candidate relation and was not `no_relation`.
    pub malformed: bool,
    pub raw: String,
}

/// Counter snapshot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub requests: u64,
    pub transport_retries: u64,
    pub endpoint_failures: u64,
    pub unparseable_answers: u64,
    pub text_fallback_decisions: u64,
    pub invalid_generations: u64,
    pub dropped_lines: u64,
    pub summarize_fallbacks: u64,
    pub invalid_picks: u64,
    pub pick_fallbacks: u64,
    pub malformed_multiclass: u64,
    pub multiclass_yes_no: u64,
}

#[derive(Debug, Default)]
struct Counters {
    requests: AtomicU64,
    transport_retries: AtomicU64,
    endpoint_failures: AtomicU64,
    unparseable_answers: AtomicU64,
    text_fallback_decisions: AtomicU64,
    invalid_generations: AtomicU64,
    dropped_lines: AtomicU64,
    summarize_fallbacks: AtomicU64,
    invalid_picks: AtomicU64,
    pick_fallbacks: AtomicU64,
    malformed_multiclass: AtomicU64,
    multiclass_yes_no: AtomicU64,
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

pub struct Gateway {
    transport: Arc<dyn ChatTransport>,
    config: GatewayConfig,
    counters: Counters,
    next_id: AtomicU64,
}

static NUMBERED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(\d{1,3})\s*[:.]\s*(\S.*?)\s*$").expect("valid regex"));
static BRACKETS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([^\[\]]*)\]").expect("valid regex"));
static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z]+").expect("valid regex"));

/// Normalise a token for yes/no matching: trim, strip tokenizer space markers and
/// punctuation, lowercase.
fn norm_token(t: &str) -> String {
    t.trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation() || c == 'Ġ' || c == '▁')
        .to_lowercase()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Read a yes/no decision off a reply; `None` when nothing usable is present.
pub fn decide(reply: &ChatReply) -> Option<BinaryDecision> {
    if let Some(probs) = &reply.choice_logprobs {
        let get = |w: &str| probs.iter().find(|(k, _)| norm_token(k) == w).map(|(_, v)| *v);
        if let (Some(y), Some(n)) = (get("yes"), get("no")) {
            return Some(BinaryDecision::from_scores(y, n, DecisionMethod::LogitConstrained));
        }
    }
    if let Some(alts) = &reply.top_logprobs {
        let collect = |w: &str| -> Vec<f64> {
            alts.iter().filter(|a| norm_token(&a.token) == w).map(|a| a.logprob).collect()
        };
        let (ys, ns) = (collect("yes"), collect("no"));
        if !ys.is_empty() || !ns.is_empty() {
            // A continuation absent from the alternatives scores below all of them.
            return Some(BinaryDecision::from_scores(log_sum_exp(&ys), log_sum_exp(&ns), DecisionMethod::LogitTop));
        }
    }
    let first = WORD.find(&reply.text)?.as_str().to_lowercase();
    let answer = match first.as_str() {
        "yes" => true,
        "no" => false,
        _ => return None,
    };
    Some(BinaryDecision { answer, method: DecisionMethod::TextFallback, score_yes: None, score_no: None })
}

/// Numbered lines (`01:`, `1:`, `1.`) in ascending number order, stable on repeats.
pub fn parse_numbered(text: &str) -> Vec<(usize, String)> {
    let mut out: Vec<(usize, String)> = text
        .lines()
        .filter_map(|l| {
            let c = NUMBERED.captures(l)?;
            Some((c[1].parse().ok()?, c[2].to_string()))
        })
        .collect();
    out.sort_by_key(|(n, _)| *n);
    out
}

/// Parse a bracketed id list and validate it against the pool.
pub fn parse_pick(text: &str, pool_len: usize, n_pick: usize) -> Result<Vec<usize>, String> {
    let inner = BRACKETS.captures(text).ok_or("no bracketed list")?;
    let mut ids = Vec::new();
    for part in inner[1].split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let id: usize = part.parse().map_err(|_| format!("`{part}` is not an id"))?;
        if id == 0 || id > pool_len {
            return Err(format!("id {id} outside 1..={pool_len}"));
        }
        if ids.contains(&id) {
            return Err(format!("duplicate id {id}"));
        }
        ids.push(id);
    }
    if ids.len() != n_pick {
        return Err(format!("{} ids, expected {n_pick}", ids.len()));
    }
    Ok(ids)
}

/// The `n` pool entries most similar to `gold`; entries without a vector rank
/// last, ties by pool id.
pub fn cosine_fallback(pool: &CandidatePool, gold: Option<&[f32]>, n: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = pool
        .entries
        .iter()
        .map(|e| {
            let s = match (gold, e.candidate.vector.as_deref()) {
                (Some(g), Some(v)) if g.len() == v.len() => dot(g, v),
                _ => f64::NEG_INFINITY,
            };
            (e.pool_id, s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(n).map(|(id, _)| id).collect()
}

/// Map a multi-class reply onto the candidate names. Returns the label, whether
/// the reply was malformed, and whether it was a bare yes/no.
pub fn parse_multiclass(text: &str, names: &[&str]) -> (Label, bool, bool) {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let t = first.trim_matches(|c: char| c == '"' || c == '\'' || c == '`' || c == '.' || c.is_whitespace());
    if t.eq_ignore_ascii_case(NO_RELATION) {
        return (Label::NoRelation, false, false);
    }
    if let Some(name) = names.iter().find(|n| n.eq_ignore_ascii_case(t)) {
        return (Label::Relation((*name).to_string()), false, false);
    }
    let yes_no = t.eq_ignore_ascii_case("yes") || t.eq_ignore_ascii_case("no");
    (Label::NoRelation, true, yes_no)
}

impl Gateway {
    pub fn new(transport: Arc<dyn ChatTransport>, config: GatewayConfig) -> Self {
        Self { transport, config, counters: Counters::default(), next_id: AtomicU64::new(1) }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn stats(&self) -> GatewayStats {
        let c = &self.counters;
        let g = |a: &AtomicU64| a.load(Ordering::Relaxed);
        GatewayStats {
            requests: g(&c.requests),
            transport_retries: g(&c.transport_retries),
            endpoint_failures: g(&c.endpoint_failures),
            unparseable_answers: g(&c.unparseable_answers),
            text_fallback_decisions: g(&c.text_fallback_decisions),
            invalid_generations: g(&c.invalid_generations),
            dropped_lines: g(&c.dropped_lines),
            summarize_fallbacks: g(&c.summarize_fallbacks),
            invalid_picks: g(&c.invalid_picks),
            pick_fallbacks: g(&c.pick_fallbacks),
            malformed_multiclass: g(&c.malformed_multiclass),
            multiclass_yes_no: g(&c.multiclass_yes_no),
        }
    }

    fn backoff(&self, retry: u32) {
        if self.config.backoff_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.config.backoff_ms.saturating_mul(1 << retry.min(16))));
        }
    }

    /// One logical request, retrying transient transport failures.
    pub fn call(&self, template: TemplateId, bindings: &Bindings, scoring: bool) -> Result<ChatReply, GatewayError> {
        self.call_from(template, bindings, scoring, &mut 0)
    }

    /// `call`, numbering transport attempts from `*attempt` onwards so that
    /// re-asks after an invalid answer continue the sequence.
    fn call_from(
        &self,
        template: TemplateId,
        bindings: &Bindings,
        scoring: bool,
        attempt: &mut u32,
    ) -> Result<ChatReply, GatewayError> {
        let prompt = render_prompt(template, bindings)?;
        let decoding = if scoring {
            self.config.decoding.scoring(self.config.scoring_max_tokens)
        } else {
            self.config.decoding.clone()
        };
        let mut request = ChatRequest {
            request_id: self.next_id.fetch_add(1, Ordering::Relaxed),
            attempt: *attempt,
            template,
            bindings: bindings.clone(),
            prompt,
            decoding,
            logprobs: scoring,
            top_logprobs: scoring.then_some(self.config.top_logprobs),
            choices: if scoring { vec!["yes".into(), "no".into()] } else { Vec::new() },
        };
        let mut retry = 0;
        loop {
            bump(&self.counters.requests);
            request.attempt = *attempt;
            *attempt += 1;
            match self.transport.complete(&request) {
                Ok(reply) => return Ok(reply),
                Err(e) if e.is_transient() && retry < self.config.retries => {
                    log::warn!("request {} ({template}) attempt {}: {e}", request.request_id, retry + 1);
                    bump(&self.counters.transport_retries);
                    self.backoff(retry);
                    retry += 1;
                }
                Err(e) => {
                    bump(&self.counters.endpoint_failures);
                    return Err(GatewayError::Endpoint { template, attempts: retry + 1, last: e });
                }
            }
        }
    }

    /// Yes/no decision for a rendered scoring prompt.
    pub fn binary_decide(&self, template: TemplateId, bindings: &Bindings) -> Result<BinaryDecision, GatewayError> {
        let mut last = String::new();
        let mut attempt = 0;
        for _ in 0..=self.config.retries {
            let reply = self.call_from(template, bindings, true, &mut attempt)?;
            if let Some(d) = decide(&reply) {
                if d.method == DecisionMethod::TextFallback {
                    bump(&self.counters.text_fallback_decisions);
                }
                return Ok(d);
            }
            bump(&self.counters.unparseable_answers);
            last = reply.text;
        }
        Err(GatewayError::UnparseableAnswer { template, text: last })
    }

    pub fn ner_check(&self, sentence: &TaggedSentence, entity: &str, entity_type: &str) -> Result<BinaryDecision, GatewayError> {
        self.binary_decide(TemplateId::NerCheck, &Bindings::ner(sentence, entity, entity_type))
    }

    /// `n` new or paraphrased examples of `relation`.
    pub fn generate_examples(
        &self,
        relation: &RelationSpec,
        support: &TaggedSentence,
        n: usize,
        mode: GenerationMode,
    ) -> Result<Vec<TaggedSentence>, GatewayError> {
        let template = match mode {
            GenerationMode::Paraphrase => TemplateId::Paraphrase,
            GenerationMode::New => TemplateId::Generate,
        };
        let bindings = Bindings::generation(relation, support, n);
        let mut best = 0;
        let mut attempt = 0;
        for _ in 0..=self.config.retries {
            let reply = self.call_from(template, &bindings, false, &mut attempt)?;
            let mut valid = Vec::new();
            for (num, line) in parse_numbered(&reply.text) {
                match parse_tagged(&line) {
                    Ok(s)
                        if mode == GenerationMode::New
                            || (s.subject().surface == support.subject().surface
                                && s.object().surface == support.object().surface) =>
                    {
                        valid.push(s)
                    }
                    Ok(_) => {
                        log::debug!("{template} line {num}: entity surfaces differ from the support");
                        bump(&self.counters.dropped_lines);
                    }
                    Err(e) => {
                        log::debug!("{template} line {num}: {e}");
                        bump(&self.counters.dropped_lines);
                    }
                }
            }
            if valid.len() >= n {
                valid.truncate(n);
                return Ok(valid);
            }
            best = best.max(valid.len());
            bump(&self.counters.invalid_generations);
        }
        Err(GatewayError::GenerationInvalid { wanted: n, got: best, attempts: self.config.retries + 1 })
    }

    /// A shorter tagged version of `example`; the input itself when every
    /// attempt fails validation or the endpoint is down.
    pub fn summarize(&self, example: &TaggedSentence) -> Result<Summary, GatewayError> {
        let bindings = Bindings::summarize(example);
        let mut attempt = 0;
        for _ in 0..=self.config.retries {
            let reply = match self.call_from(TemplateId::Summarize, &bindings, false, &mut attempt) {
                Ok(r) => r,
                Err(GatewayError::Endpoint { .. }) => break,
                Err(e) => return Err(e),
            };
            let line = reply.text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
            if let Ok(s) = parse_tagged(line) {
                return Ok(Summary { sentence: s, fell_back: false });
            }
        }
        bump(&self.counters.summarize_fallbacks);
        log::info!("summarize fell back to the input: {}", example.render());
        Ok(Summary { sentence: example.clone(), fell_back: true })
    }

    /// Ask for `n_pick` diverse entries of `pool`. Falls back to the entries
    /// closest to `gold` when no valid list arrives.
    pub fn pick_diverse(
        &self,
        relation: &RelationSpec,
        pool: &CandidatePool,
        n_pick: usize,
        gold: Option<&[f32]>,
    ) -> Result<PickOutcome, GatewayError> {
        let bindings = Bindings::pick(relation, pool.entries.iter().map(|e| &e.candidate.sentence));
        let mut attempt = 0;
        for _ in 0..=self.config.retries {
            let reply = match self.call_from(TemplateId::HybridPick, &bindings, false, &mut attempt) {
                Ok(r) => r,
                Err(GatewayError::Endpoint { .. }) => break,
                Err(e) => return Err(e),
            };
            match parse_pick(&reply.text, pool.len(), n_pick) {
                Ok(ids) => return Ok(PickOutcome { ids, fell_back: false }),
                Err(why) => {
                    log::debug!("invalid pick {:?}: {why}", reply.text);
                    bump(&self.counters.invalid_picks);
                }
            }
        }
        bump(&self.counters.pick_fallbacks);
        log::info!("pick fell back to cosine ranking for {}", relation.name);
        Ok(PickOutcome { ids: cosine_fallback(pool, gold, n_pick), fell_back: true })
    }

    /// Single-call prediction over all candidate relations.
    pub fn multiclass(
        &self,
        relations: &[(&RelationSpec, &[TaggedSentence])],
        query: &TaggedSentence,
    ) -> Result<MulticlassAnswer, GatewayError> {
        let reply = self.call(TemplateId::MultiRelation, &Bindings::multi(relations, query), false)?;
        let names: Vec<&str> = relations.iter().map(|(r, _)| r.name.as_str()).collect();
        let (label, malformed, yes_no) = parse_multiclass(&reply.text, &names);
        if malformed {
            bump(&self.counters.malformed_multiclass);
        }
        if yes_no {
            bump(&self.counters.multiclass_yes_no);
            log::warn!("multi-relation reply was a bare yes/no ({:?}); the prompt asks for yes/no", reply.text);
        }
        Ok(MulticlassAnswer { label, malformed, raw: reply.text })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::transport::{MockEntry, MockTransport, ScriptedReply, TokenLogprob};
    use crate::select::hybrid::{assemble_hybrid_pool, PoolCandidate};
    use std::collections::BTreeMap;

    fn spec() -> RelationSpec {
        RelationSpec {
            name: "org:top_members/employees".into(),
            description: "the top members of the organization".into(),
            subject_type: "ORGANIZATION".into(),
            object_type: "PERSON".into(),
        }
    }

    fn gateway(entries: Vec<MockEntry>) -> (Gateway, Arc<MockTransport>) {
        let mock = Arc::new(MockTransport::new(entries).unwrap());
        let config = GatewayConfig { backoff_ms: 0, ..Default::default() };
        (Gateway::new(mock.clone(), config), mock)
    }

    fn default_entry(template: TemplateId, replies: Vec<ScriptedReply>) -> MockEntry {
        MockEntry::fallback(template, replies)
    }

    fn reply_top(alts: &[(&str, f64)]) -> ChatReply {
        ChatReply {
            text: String::new(),
            top_logprobs: Some(alts.iter().map(|(t, l)| TokenLogprob { token: t.to_string(), logprob: *l }).collect()),
            choice_logprobs: None,
        }
    }

    #[test]
    fn decisions() {
        let d = decide(&ScriptedReply::yes_no(-0.1, -2.3).reply).unwrap();
        assert!(d.answer);
        assert_eq!(d.method, DecisionMethod::LogitConstrained);
        assert!(decide(&ScriptedReply::yes_no(-1.0, -1.0).reply).unwrap().answer);
        assert!(!decide(&ScriptedReply::yes_no(-2.0, -1.0).reply).unwrap().answer);

        let d = decide(&reply_top(&[(" No", -0.3), ("Yes", -1.5), ("yes", -2.0)])).unwrap();
        assert_eq!(d.method, DecisionMethod::LogitTop);
        assert!(!d.answer);
        let d = decide(&reply_top(&[("Yes", -3.0), ("maybe", -0.1)])).unwrap();
        assert!(d.answer);
        assert_eq!(d.score_no, Some(f64::NEG_INFINITY));

        let d = decide(&ScriptedReply::text("No, the relation does not hold.").reply).unwrap();
        assert!(!d.answer);
        assert_eq!(d.method, DecisionMethod::TextFallback);
        assert!(decide(&ScriptedReply::text("  \"Yes\"").reply).unwrap().answer);
        assert!(decide(&ScriptedReply::text("Perhaps").reply).is_none());
        // Alternatives without yes/no fall through to the text.
        let mut r = reply_top(&[("maybe", -0.1)]);
        r.text = "yes".into();
        assert_eq!(decide(&r).unwrap().method, DecisionMethod::TextFallback);
    }

    #[test]
    fn unparseable_after_budget() {
        let (g, mock) = gateway(vec![default_entry(TemplateId::NerCheck, vec![ScriptedReply::text("Perhaps")])]);
        let s = parse_tagged("<subject>He</subject> joined <object>IBM</object>").unwrap();
        let err = g.ner_check(&s, "He", "PERSON").unwrap_err();
        assert!(matches!(err, GatewayError::UnparseableAnswer { .. }));
        assert_eq!(mock.call_count(TemplateId::NerCheck), 4);
        assert_eq!(g.stats().unparseable_answers, 4);
    }

    #[test]
    fn transport_retries_then_success() {
        let replies = vec![
            ScriptedReply { error: Some("reset".into()), ..Default::default() },
            ScriptedReply { status: Some(503), ..Default::default() },
            ScriptedReply::yes_no(-0.5, -0.7),
        ];
        let (g, mock) = gateway(vec![default_entry(TemplateId::NerCheck, replies)]);
        let s = parse_tagged("<subject>He</subject> joined <object>IBM</object>").unwrap();
        assert!(g.ner_check(&s, "He", "PERSON").unwrap().answer);
        assert_eq!(mock.call_count(TemplateId::NerCheck), 3);
        assert_eq!(g.stats().transport_retries, 2);
    }

    #[test]
    fn endpoint_error_after_budget() {
        let (g, mock) = gateway(vec![default_entry(
            TemplateId::NerCheck,
            vec![ScriptedReply { error: Some("down".into()), ..Default::default() }],
        )]);
        let s = parse_tagged("<subject>He</subject> joined <object>IBM</object>").unwrap();
        let err = g.ner_check(&s, "He", "PERSON").unwrap_err();
        assert!(matches!(err, GatewayError::Endpoint { attempts: 4, .. }));
        assert_eq!(mock.call_count(TemplateId::NerCheck), 4);
        // Non-transient errors are not retried.
        let (g, mock) = gateway(vec![default_entry(
            TemplateId::NerCheck,
            vec![ScriptedReply { status: Some(401), ..Default::default() }],
        )]);
        assert!(matches!(g.ner_check(&s, "He", "PERSON"), Err(GatewayError::Endpoint { attempts: 1, .. })));
        assert_eq!(mock.call_count(TemplateId::NerCheck), 1);
    }

    #[test]
    fn numbered_parsing() {
        let got = parse_numbered("Sure:\n02: b\n1. a\n 3: c \nnot numbered\n10:d");
        assert_eq!(
            got,
            vec![(1, "a".to_string()), (2, "b".to_string()), (3, "c".to_string()), (10, "d".to_string())]
        );
    }

    #[test]
    fn paraphrase_keeps_entities() {
        let support = parse_tagged(
            "<subject>New Fabris</subject> company director <object>Pierre Reau</object> said that the firm would pay",
        )
        .unwrap();
        let text = "01: <subject>New Fabris</subject> director <object>Pierre Reau</object> stated it.\n\
                    02: <subject>New Fabris</subject> boss <object>Pierre Reau</object> said so.\n\
                    03: <subject>Fabris</subject> boss <object>Pierre Reau</object> said so.\n\
                    04: <subject>New Fabris</subject> head <object>Pierre Reau</object> noted it.\n\
                    05: <subject>New Fabris</subject> chief <object>Pierre Reau</object> explained it.";
        let (g, _) = gateway(vec![default_entry(TemplateId::Paraphrase, vec![ScriptedReply::text(text)])]);
        let out = g.generate_examples(&spec(), &support, 4, GenerationMode::Paraphrase).unwrap();
        assert_eq!(out.len(), 4);
        for s in &out {
            assert_eq!(s.subject().surface, "New Fabris");
            assert_eq!(s.object().surface, "Pierre Reau");
        }
        assert_eq!(g.stats().dropped_lines, 1);
    }

    #[test]
    fn generation_invalid_after_budget() {
        let support = parse_tagged("<subject>A</subject> met <object>B</object>").unwrap();
        let (g, mock) = gateway(vec![default_entry(
            TemplateId::Generate,
            vec![ScriptedReply::text("01: <subject>C</subject> met D")],
        )]);
        let err = g.generate_examples(&spec(), &support, 1, GenerationMode::New).unwrap_err();
        assert_eq!(err, GatewayError::GenerationInvalid { wanted: 1, got: 0, attempts: 4 });
        assert_eq!(mock.call_count(TemplateId::Generate), 4);

        let (g, _) = gateway(vec![default_entry(
            TemplateId::Generate,
            vec![ScriptedReply::text("01: <subject>A</subject> met <object>B</object>")],
        )]);
        assert_eq!(g.generate_examples(&spec(), &support, 1, GenerationMode::New).unwrap().len(), 1);
    }

    #[test]
    fn summarize_fallback_counts_once() {
        let s = parse_tagged("<subject>Buckley</subject>, who is of both Native American and <object>Scottish</object> descent").unwrap();
        let (g, mock) = gateway(vec![default_entry(TemplateId::Summarize, vec![ScriptedReply::text("Buckley is Scottish.")])]);
        let out = g.summarize(&s).unwrap();
        assert!(out.fell_back);
        assert_eq!(out.sentence, s);
        assert_eq!(g.stats().summarize_fallbacks, 1);
        assert_eq!(mock.call_count(TemplateId::Summarize), 4);

        let (g, _) = gateway(vec![default_entry(
            TemplateId::Summarize,
            vec![ScriptedReply::text("<subject>Buckley</subject> is <object>Scottish</object>")],
        )]);
        let out = g.summarize(&s).unwrap();
        assert!(!out.fell_back);
        assert_eq!(out.sentence.subject().surface, "Buckley");
    }

    fn pool8() -> CandidatePool {
        let mk = |i: usize, v: [f32; 2]| PoolCandidate {
            sentence: parse_tagged(&format!("<subject>S{i}</subject> x <object>O</object>")).unwrap(),
            vector: Some(crate::store::normalize(&v)),
            store_id: Some(i as u64),
        };
        let gen: Vec<PoolCandidate> = (0..4).map(|i| PoolCandidate { vector: None, store_id: None, ..mk(i, [1.0, 0.0]) }).collect();
        let ret: Vec<PoolCandidate> = (4..8).map(|i| mk(i, [1.0, i as f32 - 4.0])).collect();
        assemble_hybrid_pool(gen, ret, 5).unwrap()
    }

    #[test]
    fn pick_parsing() {
        assert_eq!(parse_pick("[1, 4, 6, 7]", 8, 4).unwrap(), vec![1, 4, 6, 7]);
        assert_eq!(parse_pick("Here: [3,2, 8,1] done", 8, 4).unwrap(), vec![3, 2, 8, 1]);
        assert!(parse_pick("[1,1,2,3]", 8, 4).unwrap_err().contains("duplicate"));
        assert!(parse_pick("[0, 9]", 8, 4).is_err());
        assert!(parse_pick("[1, 2]", 8, 4).unwrap_err().contains("expected 4"));
        assert!(parse_pick("1, 2, 3, 4", 8, 4).is_err());
        assert!(parse_pick("[a, 2, 3, 4]", 8, 4).is_err());
    }

    #[test]
    fn pick_retry_then_fallback() {
        let pool = pool8();
        let (g, mock) = gateway(vec![default_entry(
            TemplateId::HybridPick,
            vec![ScriptedReply::text("[1,1,2,3]"), ScriptedReply::text("[0, 9]")],
        )]);
        let gold = crate::store::normalize(&[1.0, 0.0]);
        let out = g.pick_diverse(&spec(), &pool, 4, Some(&gold)).unwrap();
        assert!(out.fell_back);
        assert_eq!(mock.call_count(TemplateId::HybridPick), 4);
        // Oracle: retrieved vectors (1,0),(1,1),(1,2),(1,3) by decreasing cosine,
        // then generated entries (no vector) would follow.
        let by_store = |sid: u64| pool.entries.iter().find(|e| e.candidate.store_id == Some(sid)).unwrap().pool_id;
        assert_eq!(out.ids, vec![by_store(4), by_store(5), by_store(6), by_store(7)]);
        assert_eq!(out.ids, cosine_fallback(&pool, Some(&gold), 4));
        let s = g.stats();
        assert_eq!((s.invalid_picks, s.pick_fallbacks), (4, 1));
    }

    #[test]
    fn pick_valid_reply() {
        let pool = pool8();
        let (g, _) = gateway(vec![default_entry(TemplateId::HybridPick, vec![ScriptedReply::text("[1, 4, 6, 7]")])]);
        let out = g.pick_diverse(&spec(), &pool, 4, None).unwrap();
        assert_eq!(out, PickOutcome { ids: vec![1, 4, 6, 7], fell_back: false });
    }

    #[test]
    fn multiclass_answers() {
        let names = ["org:top_members/employees", "per:origin"];
        assert_eq!(parse_multiclass("org:top_members/employees", &names), (Label::Relation(names[0].into()), false, false));
        assert_eq!(parse_multiclass("\"Per:Origin\".", &names), (Label::Relation(names[1].into()), false, false));
        assert_eq!(parse_multiclass("org:topmembers", &names), (Label::NoRelation, true, false));
        assert_eq!(parse_multiclass("no_relation", &names), (Label::NoRelation, false, false));
        assert_eq!(parse_multiclass("Yes", &names), (Label::NoRelation, true, true));

        let (g, _) = gateway(vec![default_entry(TemplateId::MultiRelation, vec![ScriptedReply::text("org:topmembers")])]);
        let s = parse_tagged("<subject>A</subject> met <object>B</object>").unwrap();
        let sp = spec();
        let sup = [s.clone()];
        let ans = g.multiclass(&[(&sp, &sup[..])], &s).unwrap();
        assert!(ans.malformed);
        assert_eq!(g.stats().malformed_multiclass, 1);
    }

    #[test]
    fn scoring_requests_are_single_token_greedy() {
        struct Probe(std::sync::Mutex<Vec<ChatRequest>>);
        impl ChatTransport for Probe {
            fn complete(&self, r: &ChatRequest) -> Result<ChatReply, TransportError> {
                self.0.lock().unwrap().push(r.clone());
                Ok(ChatReply { choice_logprobs: Some(BTreeMap::from([("yes".into(), -1.0), ("no".into(), -2.0)])), ..Default::default() })
            }
        }
        let probe = Arc::new(Probe(Default::default()));
        let g = Gateway::new(probe.clone(), GatewayConfig { decoding: DecodingProfile::gemma(), ..Default::default() });
        let s = parse_tagged("<subject>A</subject> met <object>B</object>").unwrap();
        g.ner_check(&s, "A", "PERSON").unwrap();
        let r = &probe.0.lock().unwrap()[0];
        assert_eq!(r.decoding.max_new_tokens, 1);
        assert_eq!(r.decoding.temperature, 0.0);
        assert!(r.logprobs);
        assert_eq!(r.choices, vec!["yes", "no"]);
        assert!(r.prompt.contains("Sentence: A met B"));
    }
}
