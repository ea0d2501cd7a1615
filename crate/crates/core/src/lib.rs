//! K-shot support selection and episodic evaluation for few-shot relation
//! extraction with in-context learning.
//!
//! A 5-way 1-shot episode provides one gold support sentence per candidate
//! relation. This crate expands each gold support to K examples (LLM
//! paraphrases or generations, exact cosine retrieval from an embedding
//! store, cluster-based diversity selection, or an LLM-picked hybrid of
//! generated and retrieved candidates), asks a chat-completion endpoint one
//! yes/no question per (query, relation) pair, and scores the predictions with
//! micro P/R/F1 over positive labels.
//!
//! Module map:
//!
//! - [`tagged`], [`model`], [`episodes`]: tagged sentences, episode data model and the
//!   line-delimited episode reader.
//! - [`store`]: embedding records and the exact, type-pair partitioned vector index.
//! - [`select`]: k-means / k-means++, cluster choice policies, hybrid pools and
//!   diversity statistics.
//! - [`llm`]: prompt templates, decoding profiles, transports (HTTP and scripted
//!   mock) and the [`llm::Gateway`].
//! - [`pipeline`]: relation filtering, support building, inference, aggregation and
//!   the run driver.
//! - [`eval`]: scoring, per-file aggregation, provenance and report emission.
//!
//! The runnable programs under `examples/` walk through each capability.

pub mod episodes;
pub mod eval;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod select;
pub mod store;
pub mod tagged;

pub use model::{CandidateRelation, EntityType, Episode, Label, Query, RelationSpec, TypePair};
pub use tagged::{parse_tagged, render_tagged, Span, TagError, TaggedSentence};
