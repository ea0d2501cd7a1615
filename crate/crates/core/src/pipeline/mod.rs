//! Run orchestration: relation filtering, support building, inference,
//! aggregation and the artifact-writing driver.

mod filter;
mod infer;
mod run;
mod support;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{DecodingProfile, GatewayError};
use crate::select::{ClusterError, PoolError, SelectionStrategy, StrategyError};
use crate::store::StoreError;

pub use filter::{filter_relations, FilterOutcome};
pub use infer::{aggregate, infer_binary, infer_multiclass, RelationDecision};
pub use run::{
    process_episode, read_manifest, read_results, read_traces, run, EpisodeResult, InputDigest, Manifest, QueryResult,
    RunArtifacts, RunError, RunInput, RunSummary, MANIFEST_FILE, RESULTS_FILE, TRACES_FILE,
};
pub use support::{build_support, SelectionTrace, Stores, SupportSet, TraceChoice};

pub const DEFAULT_TAU: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    /// One yes/no prompt per (query, relation).
    #[default]
    Binary,
    /// One prompt listing every candidate relation.
    MultiClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NerFilterMode {
    Off,
    /// Exact match of the query's gold types against the relation's expected pair.
    Deterministic,
    /// Entity-type check prompts for subject and object.
    Llm,
    /// Deterministic when the query carries gold types, prompts otherwise.
    #[default]
    DeterministicThenLlm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: SelectionStrategy,
    pub tau: f64,
    pub inference_mode: InferenceMode,
    pub ner_filter: NerFilterMode,
    pub decoding: DecodingProfile,
    /// Root of every random draw in the run.
    pub seed: u64,
    /// Worker threads; not part of the run's identity.
    #[serde(skip)]
    pub parallelism: usize,
}

impl RunConfig {
    pub fn new(strategy: SelectionStrategy) -> Self {
        Self {
            strategy,
            tau: DEFAULT_TAU,
            inference_mode: InferenceMode::Binary,
            ner_filter: NerFilterMode::default(),
            decoding: DecodingProfile::default(),
            seed: 0,
            parallelism: 1,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.strategy.validate()?;
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(PipelineError::Config(format!("tau {} outside [0, 1]", self.tau)));
        }
        self.decoding.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Errors that fail one episode.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("strategy {0} needs an embedding store")]
    MissingStore(String),
    #[error("no vector for the gold support of `{0}`")]
    MissingSupportVector(String),
    #[error("{0}")]
    Config(String),
}
