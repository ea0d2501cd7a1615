//! Declarative description of how a K-shot support list is assembled.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::clusters::ClusterPolicy;
use super::kmeans::Init;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    GoldOnly,
    LlmParaphrase,
    LlmGenerate,
    RetrieveClosest,
    RetrieveCluster,
    Hybrid,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::GoldOnly => "gold-only",
            StrategyKind::LlmParaphrase => "llm-paraphrase",
            StrategyKind::LlmGenerate => "llm-generate",
            StrategyKind::RetrieveClosest => "retrieve-closest",
            StrategyKind::RetrieveCluster => "retrieve-cluster",
            StrategyKind::Hybrid => "hybrid",
        }
    }

    pub fn needs_store(self) -> bool {
        matches!(self, StrategyKind::RetrieveClosest | StrategyKind::RetrieveCluster | StrategyKind::Hybrid)
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = StrategyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| StrategyError::UnknownKind(s.to_string()))
    }
}

/// Which vector space retrieval runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    #[default]
    Sentence,
    Rule,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StrategyError {
    #[error("unknown strategy kind `{0}`")]
    UnknownKind(String),
    #[error("{kind} needs {expected}, got {shots}")]
    Shots { kind: StrategyKind, shots: usize, expected: &'static str },
    #[error("retrieve-cluster needs both a clustering and a cluster policy")]
    MissingClusterFields,
    #[error("{0} does not take clustering options")]
    UnexpectedClusterFields(StrategyKind),
    #[error("hybrid takes both clustering and policy, or neither")]
    PartialClusterFields,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub kind: StrategyKind,
    #[serde(default)]
    pub representation: Representation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clustering: Option<Init>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_policy: Option<ClusterPolicy>,
    /// Total examples per relation, gold included.
    pub shots: usize,
    #[serde(default)]
    pub summarize: bool,
    #[serde(default)]
    pub seed: u64,
}

impl SelectionStrategy {
    pub fn gold_only() -> Self {
        Self::new(StrategyKind::GoldOnly, 1)
    }

    pub fn new(kind: StrategyKind, shots: usize) -> Self {
        Self { kind, representation: Representation::Sentence, clustering: None, cluster_policy: None, shots, summarize: false, seed: 0 }
    }

    pub fn with_clustering(mut self, init: Init, policy: ClusterPolicy) -> Self {
        self.clustering = Some(init);
        self.cluster_policy = Some(policy);
        self
    }

    /// Number of examples added to the gold support.
    pub fn additional(&self) -> usize {
        self.shots.saturating_sub(1)
    }

    /// Size of the hybrid candidate pool: twice the number of additional examples.
    pub fn hybrid_pool_size(&self) -> usize {
        2 * self.additional()
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        match self.kind {
            StrategyKind::GoldOnly if self.shots != 1 => {
                return Err(StrategyError::Shots { kind: self.kind, shots: self.shots, expected: "exactly 1 shot" })
            }
            StrategyKind::GoldOnly => {}
            _ if self.shots < 2 => {
                return Err(StrategyError::Shots { kind: self.kind, shots: self.shots, expected: "at least 2 shots" })
            }
            _ => {}
        }
        let has_c = self.clustering.is_some();
        let has_p = self.cluster_policy.is_some();
        match self.kind {
            StrategyKind::RetrieveCluster if !(has_c && has_p) => Err(StrategyError::MissingClusterFields),
            StrategyKind::Hybrid if has_c != has_p => Err(StrategyError::PartialClusterFields),
            StrategyKind::RetrieveCluster | StrategyKind::Hybrid => Ok(()),
            kind if has_c || has_p => Err(StrategyError::UnexpectedClusterFields(kind)),
            _ => Ok(()),
        }
    }

    /// Short human-readable name, e.g. `retrieve-cluster/rule/kmeans++/farthest-first`.
    pub fn label(&self) -> String {
        let mut parts = vec![self.kind.as_str().to_string()];
        if self.kind.needs_store() {
            parts.push(match self.representation {
                Representation::Sentence => "sentence".into(),
                Representation::Rule => "rule".into(),
            });
        }
        if let (Some(c), Some(p)) = (self.clustering, self.cluster_policy) {
            parts.push(c.to_string());
            parts.push(p.to_string());
        }
        if self.summarize {
            parts.push("summarized".into());
        }
        parts.join("/")
    }
}
