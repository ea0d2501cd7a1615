//! The fixed prompt templates and their renderer.
//!
//! Bodies are plain text with `#NAME#` placeholders. A line holding only
//! `[[n]]` (or `[[r]]`) opens a block that is repeated for `n` in `1..=N`
//! (`r` in `1..=R`), with `{n}` (`{r}`) substituted inside; `[[/n]]` closes it.
//! `N` and `R` come from the bindings. `#N_HALF#`, `#N_TH#` (ordinal) and
//! `#N_PAD#` (two digits) are derived from `N` unless bound explicitly.
//!
//! Substitution is a single pass, so bound values are never re-scanned for
//! placeholders.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::RelationSpec;
use crate::tagged::TaggedSentence;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template}: unbound placeholder #{name}#")]
    UnboundPlaceholder { template: TemplateId, name: String },
    #[error("template {template}: repeat count {name} is missing or not a number")]
    BadRepeatCount { template: TemplateId, name: String },
    #[error("template {template}: unbalanced repeat block `{block}`")]
    UnbalancedBlock { template: TemplateId, block: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateId {
    BinaryRelation,
    MultiRelation,
    NerCheck,
    Paraphrase,
    Generate,
    Summarize,
    HybridPick,
    SubjectObjectProbe,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::BinaryRelation,
        TemplateId::MultiRelation,
        TemplateId::NerCheck,
        TemplateId::Paraphrase,
        TemplateId::Generate,
        TemplateId::Summarize,
        TemplateId::HybridPick,
        TemplateId::SubjectObjectProbe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::BinaryRelation => "binary-relation",
            TemplateId::MultiRelation => "multi-relation",
            TemplateId::NerCheck => "ner-check",
            TemplateId::Paraphrase => "paraphrase",
            TemplateId::Generate => "generate",
            TemplateId::Summarize => "summarize",
            TemplateId::HybridPick => "hybrid-pick",
            TemplateId::SubjectObjectProbe => "subject-object-probe",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::BinaryRelation => BINARY_RELATION,
            TemplateId::MultiRelation => MULTI_RELATION,
            TemplateId::NerCheck => NER_CHECK,
            TemplateId::Paraphrase => PARAPHRASE,
            TemplateId::Generate => GENERATE,
            TemplateId::Summarize => SUMMARIZE,
            TemplateId::HybridPick => HYBRID_PICK,
            TemplateId::SubjectObjectProbe => SUBJECT_OBJECT_PROBE,
        }
    }

    /// SHA-256 of the body, hex encoded.
    pub fn hash(self) -> String {
        sha256_hex(self.body().as_bytes())
    }
}

impl std::fmt::Display for TemplateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

const BINARY_RELATION: &str = r##"You are given below a Relation name, a Description of the relation between brackets, #N# Support sentences exemplifying the relation, and a Query sentence.

A relation connects the Subject and the Object entities. The Subject and the Object entities are indicated with the subject and object tags respectively. You need to decide whether the relation holds between the Subject and the Object of the Query sentence.

Relation name: "#RELATION#" (#RELATION_DESCRIPTION#)
[[n]]
Support Sentence {n}: #SUPPORT_SENTENCE_{n}#
[[/n]]

Query Sentence: #QUERY_SENTENCE#

If the relation holds between the Subject and Object in the Query sentence, say "yes", otherwise say "no." Just output "yes" or "no," and nothing else.
"##;

const MULTI_RELATION: &str = r##"You are given below five Relation names, the Description of the relations between brackets, #N# Support sentences exemplifying each relation, and a Query sentence.

A relation connects the Subject and the Object entities. The Subject and the Object entities are indicated with the subject and object tags respectively. You need to decide whether the relation holds between the Subject and the Object of the Query sentence.

[[r]]
Relation name: "#RELATION_{r}#" (#RELATION_DESCRIPTION_{r}#)
[[n]]
Support Sentence {n}: #SUPPORT_SENTENCE_{r}_{n}#
[[/n]]

[[/r]]
Query Sentence: #QUERY_SENTENCE#

If the relation holds between the Subject and Object in the Query sentence, say "yes", otherwise say "no." Just output "yes" or "no," and nothing else.
"##;

const NER_CHECK: &str = r##"You are given below a sentence, an entity contained within the sentence, and an entity type:

Sentence: #SENTENCE#
Entity: #ENTITY#
Entity Type: #ENTITY_TYPE#

Your task is to decide whether the Entity in the context of the Sentence either:
1. belongs to the entity type "#ENTITY_TYPE#"
or,
2. is a co-reference (such as a pronoun or other co-referring expression) that points to an entity that belongs to the entity type "#ENTITY_TYPE#"

Only answer "yes" or "no," nothing else.
"##;

const PARAPHRASE: &str = r##"You are given below a Relation name, a Description of the relation, and a support sentence exemplifying the relation.

A relation connects two entities: the Subject and the Object entities in the sentence. The Subject and the Object are indicated with the <subject>..</subject> and <object>..</object> tags respectively.

Relation name: "#RELATION#"
Relation description: "#RELATION_DESCRIPTION#"
Support Sentence: #SUPPORT_SENTENCE#

Your task is to generate #N# paraphrases of the support sentence that hold the same relation between the same Subject and Object entities. In each paraphrase, you must include the subject and object tags to identify the Subject and the Object.

Output in the following format:
01: your 1st paraphrased sentence
02: your 2nd paraphrased sentence
...
#N_PAD#: your #N_TH# paraphrased sentence
"##;

const GENERATE: &str = r##"You are given below a Relation name, the Description of the relation, and a support sentence exemplifying the relation.

A relation connects two entities: the Subject and the Object entities in the sentence. The Subject and the Object are indicated with the <subject>..</subject> and <object>..</object> tags respectively.

Relation name: "#RELATION#"
Relation description: "#RELATION_DESCRIPTION#"
Support Sentence: #SUPPORT_SENTENCE#

Your task is to generate #N# completely different new examples that hold the same relation. You must follow these guidelines:
1. In each example, include subject and object tags to identify the Subject and the Object entities.
2. To increase diversity, use different words, phrases, and sentence structures across different examples.

Output in the following format:
01: your 1st example sentence
02: your 2nd example sentence
...
#N_PAD#: your #N_TH# example sentence
"##;

const SUMMARIZE: &str = r##"You are given a context sentence containing a Subject and an Object entity.

The Subject and Object entities are marked using <subject> and <object> tags, respectively.

Your task is to summarize the relation expressed between the Subject and the Object in the context.

Context: #SUPPORT_SENTENCE#

You must retain the <subject> and <object> tags in the summarized output.

Only output the summarized relation between the Subject and the Object, and nothing else.
"##;

const HYBRID_PICK: &str = r##"You are given below a Relation name, a Description of the relation between brackets, and #N# Support sentences exemplifying the relation.

A relation connects the Subject and the Object entities. The Subject and the Object entities are marked within the subject and object tags respectively.

Relation name: "#RELATION#" (#RELATION_DESCRIPTION#)
[[n]]
Support Sentence {n}: #SUPPORT_SENTENCE_{n}#
[[/n]]

Your task is to pick #N_HALF# support sentences that maximize diversity. In other words, you should pick support sentences that use different words, phrases, and sentence structures.

Output your best picks as a Python-style list of the #N_HALF# IDs of the support sentences (e.g., [1, 4, 6, 7]).
Only output the list and nothing else.
"##;

const SUBJECT_OBJECT_PROBE: &str = r##"You are given below a Relation name, a Description of the relation in brackets, a Support sentence (example sentence) that holds the given relation between the Subject and the Object, and a Query (a subject and an object).

A relation connects the Subject and the Object. The Subject and the Object are given within the subject and object tags respectively. You need to decide whether the relation between the Subject and the Object of the given Query holds the given relation or not.

Relation name: "#RELATION#" (#RELATION_DESCRIPTION#)
[[n]]
Support Sentence {n}: #SUPPORT_SENTENCE_{n}#
[[/n]]

Query Subject: #SUBJECT#

Query Object: #OBJECT#

If the relation between the subject and the object of the Query matches the given Relation given say yes, otherwise no.
"##;

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#([A-Z][A-Z0-9_]*)#").expect("valid regex"));

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Placeholder values, ordered by name so hashing is canonical.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_string(), value.into());
        self
    }

    pub fn insert(&mut self, name: &str, value: impl Into<String>) {
        self.0.insert(name.to_string(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// SHA-256 over `name \0 value \0` for every binding in name order.
    pub fn hash(&self) -> String {
        let mut buf = Vec::new();
        for (k, v) in &self.0 {
            buf.extend_from_slice(k.as_bytes());
            buf.push(0);
            buf.extend_from_slice(v.as_bytes());
            buf.push(0);
        }
        sha256_hex(&buf)
    }

    fn count(&self, template: TemplateId, name: &str) -> Result<usize, TemplateError> {
        self.get(name)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| TemplateError::BadRepeatCount { template, name: name.to_string() })
    }

    /// Bindings for the one-relation inference prompt.
    pub fn binary(relation: &RelationSpec, supports: &[TaggedSentence], query: &TaggedSentence) -> Self {
        let mut b = Self::relation(relation).set("N", supports.len().to_string());
        for (i, s) in supports.iter().enumerate() {
            b.insert(&format!("SUPPORT_SENTENCE_{}", i + 1), s.render());
        }
        b.set("QUERY_SENTENCE", query.render())
    }

    /// Bindings for the five-relation prompt; every relation must have the same
    /// number of supports.
    pub fn multi(relations: &[(&RelationSpec, &[TaggedSentence])], query: &TaggedSentence) -> Self {
        let n = relations.first().map_or(0, |(_, s)| s.len());
        let mut b = Self::new().set("R", relations.len().to_string()).set("N", n.to_string());
        for (r, (spec, supports)) in relations.iter().enumerate() {
            b.insert(&format!("RELATION_{}", r + 1), spec.name.clone());
            b.insert(&format!("RELATION_DESCRIPTION_{}", r + 1), spec.description.clone());
            for (i, s) in supports.iter().enumerate() {
                b.insert(&format!("SUPPORT_SENTENCE_{}_{}", r + 1, i + 1), s.render());
            }
        }
        b.set("QUERY_SENTENCE", query.render())
    }

    pub fn ner(sentence: &TaggedSentence, entity: &str, entity_type: &str) -> Self {
        Self::new()
            .set("SENTENCE", sentence.text())
            .set("ENTITY", entity)
            .set("ENTITY_TYPE", entity_type)
    }

    /// Bindings for the paraphrase and generation prompts.
    pub fn generation(relation: &RelationSpec, support: &TaggedSentence, n: usize) -> Self {
        Self::relation(relation).set("SUPPORT_SENTENCE", support.render()).set("N", n.to_string())
    }

    pub fn summarize(example: &TaggedSentence) -> Self {
        Self::new().set("SUPPORT_SENTENCE", example.render())
    }

    /// Bindings for the hybrid pick prompt, sentences in pool order.
    pub fn pick<'a>(relation: &RelationSpec, pool: impl IntoIterator<Item = &'a TaggedSentence>) -> Self {
        let mut b = Self::relation(relation);
        let mut n = 0;
        for s in pool {
            n += 1;
            b.insert(&format!("SUPPORT_SENTENCE_{n}"), s.render());
        }
        b.set("N", n.to_string())
    }

    pub fn probe(relation: &RelationSpec, supports: &[TaggedSentence], subject: &str, object: &str) -> Self {
        let mut b = Self::relation(relation).set("N", supports.len().to_string());
        for (i, s) in supports.iter().enumerate() {
            b.insert(&format!("SUPPORT_SENTENCE_{}", i + 1), s.render());
        }
        b.set("SUBJECT", subject).set("OBJECT", object)
    }

    fn relation(relation: &RelationSpec) -> Self {
        Self::new()
            .set("RELATION", relation.name.clone())
            .set("RELATION_DESCRIPTION", relation.description.clone())
    }
}

fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// Expand `[[v]] … [[/v]]` blocks, outermost first.
fn expand_blocks(template: TemplateId, lines: &[&str], bindings: &Bindings, out: &mut Vec<String>, subst: &[(String, usize)]) -> Result<(), TemplateError> {
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let trimmed = line.trim();
        if let Some(var) = trimmed.strip_prefix("[[").and_then(|r| r.strip_suffix("]]")).filter(|v| !v.starts_with('/')) {
            let close = format!("[[/{var}]]");
            let mut depth = 0;
            let mut end = None;
            for (j, l) in lines.iter().enumerate().skip(i + 1) {
                let t = l.trim();
                if t == format!("[[{var}]]") {
                    depth += 1;
                } else if t == close {
                    if depth == 0 {
                        end = Some(j);
                        break;
                    }
                    depth -= 1;
                }
            }
            let end = end.ok_or_else(|| TemplateError::UnbalancedBlock { template, block: var.to_string() })?;
            let count = bindings.count(template, &var.to_uppercase())?;
            for k in 1..=count {
                let mut inner = subst.to_vec();
                inner.push((format!("{{{var}}}"), k));
                expand_blocks(template, &lines[i + 1..end], bindings, out, &inner)?;
            }
            i = end + 1;
        } else if trimmed.starts_with("[[/") {
            return Err(TemplateError::UnbalancedBlock { template, block: trimmed.to_string() });
        } else {
            let mut l = line.to_string();
            for (pat, k) in subst {
                l = l.replace(pat, &k.to_string());
            }
            out.push(l);
            i += 1;
        }
    }
    Ok(())
}

/// Render a template. Fails on any placeholder without a binding.
pub fn render_prompt(template: TemplateId, bindings: &Bindings) -> Result<String, TemplateError> {
    let lines: Vec<&str> = template.body().split('\n').collect();
    let mut expanded = Vec::with_capacity(lines.len());
    expand_blocks(template, &lines, bindings, &mut expanded, &[])?;
    let text = expanded.join("\n");

    let n: Option<usize> = bindings.get("N").and_then(|v| v.parse().ok());
    let lookup = |name: &str| -> Option<String> {
        if let Some(v) = bindings.get(name) {
            return Some(v.to_string());
        }
        match name {
            "N_HALF" => n.map(|n| (n / 2).to_string()),
            "N_TH" => n.map(ordinal),
            "N_PAD" => n.map(|n| format!("{n:02}")),
            _ => None,
        }
    };

    let mut missing = None;
    let rendered = PLACEHOLDER.replace_all(&text, |caps: &regex::Captures<'_>| {
        let name = &caps[1];
        lookup(name).unwrap_or_else(|| {
            missing.get_or_insert_with(|| name.to_string());
            String::new()
        })
    });
    match missing {
        Some(name) => Err(TemplateError::UnboundPlaceholder { template, name }),
        None => Ok(rendered.into_owned()),
    }
}
