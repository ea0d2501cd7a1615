//! Episodes, relations and labels.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tagged::TaggedSentence;

/// Reserved label for "none of the episode's relations hold".
pub const NO_RELATION: &str = "no_relation";

/// Relations per episode.
pub const EPISODE_WAYS: usize = 5;

/// Named-entity type label such as `PERSON` or `CITY`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityType(String);

impl EntityType {
    pub fn new(label: impl Into<String>) -> Self {
        Self(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityType {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// (subject type, object type).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypePair {
    pub subject: EntityType,
    pub object: EntityType,
}

impl TypePair {
    pub fn new(subject: impl Into<EntityType>, object: impl Into<EntityType>) -> Self {
        Self { subject: subject.into(), object: object.into() }
    }
}

impl fmt::Display for TypePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.subject, self.object)
    }
}

/// Set of admissible entity-type labels.
#[derive(Debug, Clone, Default)]
pub enum TypeInventory {
    /// Any non-empty label is accepted.
    #[default]
    Open,
    Closed(BTreeSet<String>),
}

impl TypeInventory {
    /// PERSON, LOCATION, ORGANIZATION, DATE, CITY, COUNTRY, STATE, PROVINCE.
    pub fn standard() -> Self {
        Self::closed([
            "PERSON",
            "LOCATION",
            "ORGANIZATION",
            "DATE",
            "CITY",
            "COUNTRY",
            "STATE",
            "PROVINCE",
        ])
    }

    pub fn closed<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::Closed(labels.into_iter().map(Into::into).collect())
    }

    pub fn admits(&self, t: &EntityType) -> bool {
        match self {
            TypeInventory::Open => !t.0.trim().is_empty(),
            TypeInventory::Closed(set) => set.contains(&t.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub name: String,
    pub description: String,
    pub subject_type: EntityType,
    pub object_type: EntityType,
}

impl RelationSpec {
    pub fn type_pair(&self) -> TypePair {
        TypePair { subject: self.subject_type.clone(), object: self.object_type.clone() }
    }
}

/// A candidate relation with its single gold support sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateRelation {
    pub spec: RelationSpec,
    pub support: TaggedSentence,
}

/// Gold or predicted label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NoRelation,
    Relation(String),
}

impl Label {
    pub fn parse(s: &str) -> Self {
        if s == NO_RELATION {
            Label::NoRelation
        } else {
            Label::Relation(s.to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Label::NoRelation => NO_RELATION,
            Label::Relation(name) => name,
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Label::Relation(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Label::parse(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub sentence: TaggedSentence,
    pub gold_label: Label,
    /// Gold entity types, when the source corpus provides them.
    pub types: Option<TypePair>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub episode_id: String,
    pub relations: Vec<CandidateRelation>,
    pub queries: Vec<Query>,
}

impl Episode {
    /// Check the 5-way / 1-shot / label-closure invariants.
    pub fn validate(&self, inventory: &TypeInventory) -> Result<(), String> {
        if self.episode_id.is_empty() {
            return Err("empty episode_id".into());
        }
        if self.relations.len() != EPISODE_WAYS {
            return Err(format!(
                "expected {EPISODE_WAYS} relations, found {}",
                self.relations.len()
            ));
        }
        let mut names = BTreeSet::new();
        for rel in &self.relations {
            let spec = &rel.spec;
            if spec.name.trim().is_empty() {
                return Err("relation with empty name".into());
            }
            if spec.name == NO_RELATION {
                return Err(format!("`{NO_RELATION}` is reserved and cannot name a relation"));
            }
            if !names.insert(spec.name.as_str()) {
                return Err(format!("duplicate relation `{}`", spec.name));
            }
            for t in [&spec.subject_type, &spec.object_type] {
                if !inventory.admits(t) {
                    return Err(format!("relation `{}` uses unknown entity type `{t}`", spec.name));
                }
            }
        }
        if self.queries.is_empty() {
            return Err("episode has no queries".into());
        }
        for (i, q) in self.queries.iter().enumerate() {
            if let Label::Relation(name) = &q.gold_label {
                if !names.contains(name.as_str()) {
                    return Err(format!(
                        "query {i} gold label `{name}` is not one of the episode's relations"
                    ));
                }
            }
            if let Some(types) = &q.types {
                for t in [&types.subject, &types.object] {
                    if !inventory.admits(t) {
                        return Err(format!("query {i} uses unknown entity type `{t}`"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn relation(&self, name: &str) -> Option<&CandidateRelation> {
        self.relations.iter().find(|r| r.spec.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_round_trip() {
        assert_eq!(Label::parse("no_relation"), Label::NoRelation);
        assert_eq!(Label::parse("per:origin"), Label::Relation("per:origin".into()));
        assert!(!Label::NoRelation.is_positive());
        let json = serde_json::to_string(&Label::NoRelation).unwrap();
        assert_eq!(json, "\"no_relation\"");
    }

    #[test]
    fn standard_inventory() {
        let inv = TypeInventory::standard();
        assert!(inv.admits(&"CITY".into()));
        assert!(!inv.admits(&"NATIONALITY".into()));
        assert!(TypeInventory::Open.admits(&"NATIONALITY".into()));
        assert!(!TypeInventory::Open.admits(&"".into()));
    }
}
