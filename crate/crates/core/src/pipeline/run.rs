use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::filter::filter_relations;
use super::infer::{aggregate, infer_binary, infer_multiclass, RelationDecision};
use super::support::{build_support, SelectionTrace, Stores, SupportSet};
use super::{InferenceMode, PipelineError, RunConfig};
use crate::episodes::{EpisodeReader, LoadError};
use crate::llm::{Gateway, GatewayConfig, GatewayStats, TemplateId};
use crate::model::{Episode, Label, TypeInventory};
use crate::seed::child_seed;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const TRACES_FILE: &str = "traces.jsonl";

/// Episodes handed to the worker pool at a time, per worker.
const BATCH_PER_WORKER: usize = 32;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] PipelineError),
    #[error("{file}: {source}")]
    Load { file: String, source: LoadError },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct RunInput {
    pub episode_files: Vec<PathBuf>,
    pub inventory: TypeInventory,
    pub out_dir: PathBuf,
}

impl RunInput {
    pub fn new(episode_files: Vec<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self { episode_files, inventory: TypeInventory::Open, out_dir: out_dir.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_idx: usize,
    pub gold: Label,
    pub predicted: Label,
    /// Relations left after the entity-type filter, in episode order.
    pub surviving: Vec<String>,
    /// Binary mode only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<RelationDecision>,
    /// Multi-class mode only: the raw reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub malformed: bool,
    pub ner_checks: usize,
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum EpisodeResult {
    Ok { file: String, episode_id: String, queries: Vec<QueryResult> },
    Failed { file: String, episode_id: String, error: String },
}

impl EpisodeResult {
    pub fn file(&self) -> &str {
        match self {
            EpisodeResult::Ok { file, .. } | EpisodeResult::Failed { file, .. } => file,
        }
    }

    pub fn episode_id(&self) -> &str {
        match self {
            EpisodeResult::Ok { episode_id, .. } | EpisodeResult::Failed { episode_id, .. } => episode_id,
        }
    }

    pub fn queries(&self) -> &[QueryResult] {
        match self {
            EpisodeResult::Ok { queries, .. } => queries,
            EpisodeResult::Failed { .. } => &[],
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, EpisodeResult::Failed { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub episodes: usize,
    pub failed: usize,
    pub queries: usize,
    /// (query, relation) pairs before filtering.
    pub candidate_pairs: usize,
    /// (query, relation) pairs that reached inference.
    pub prompted_pairs: usize,
    pub starved_relations: usize,
    pub pick_fallbacks: usize,
}

impl RunSummary {
    fn absorb(&mut self, r: &EpisodeResult, traces: &[SelectionTrace], ways: usize) {
        self.episodes += 1;
        match r {
            EpisodeResult::Failed { .. } => self.failed += 1,
            EpisodeResult::Ok { queries, .. } => {
                self.queries += queries.len();
                self.candidate_pairs += queries.len() * ways;
                self.prompted_pairs += queries.iter().map(|q| q.surviving.len()).sum::<usize>();
            }
        }
        self.starved_relations += traces.iter().filter(|t| t.starved).count();
        self.pick_fallbacks += traces.iter().filter(|t| t.pick_fallback).count();
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub file: String,
    pub sha256: String,
}

/// The single record of the manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub gateway: GatewayConfig,
    pub templates: BTreeMap<String, String>,
    pub inputs: Vec<InputDigest>,
    pub summary: RunSummary,
    pub stats: GatewayStats,
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub results: Vec<EpisodeResult>,
    pub summary: RunSummary,
    pub stats: GatewayStats,
}

fn file_label(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn sha256_file(path: &Path) -> Result<String, RunError> {
    let mut f = File::open(path).map_err(io_err(path))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Filter, select, infer and aggregate every query of one episode.
///
/// Support sets are built lazily, once per relation, the first time a query
/// keeps that relation.
pub fn process_episode(
    episode: &Episode,
    config: &RunConfig,
    stores: &Stores,
    gateway: &Gateway,
) -> Result<(Vec<QueryResult>, Vec<SelectionTrace>), PipelineError> {
    let mut supports: Vec<Option<SupportSet>> = vec![None; episode.relations.len()];
    let mut order: Vec<usize> = Vec::new();
    let mut results = Vec::with_capacity(episode.queries.len());

    for (qi, query) in episode.queries.iter().enumerate() {
        let kept = filter_relations(episode, query, config.ner_filter, Some(gateway))?;
        for &ri in &kept.survivors {
            if supports[ri].is_none() {
                let rel = &episode.relations[ri];
                let seed = child_seed(
                    config.strategy.seed,
                    &["select".into(), episode.episode_id.as_str().into(), rel.spec.name.as_str().into()],
                );
                supports[ri] =
                    Some(build_support(&episode.episode_id, rel, &config.strategy, config.tau, stores, Some(gateway), seed)?);
                order.push(ri);
            }
        }
        let surviving: Vec<String> = kept.survivors.iter().map(|&i| episode.relations[i].spec.name.clone()).collect();
        let support_of = |ri: usize| supports[ri].as_ref().expect("built above").examples.as_slice();

        let mut result = QueryResult {
            query_idx: qi,
            gold: query.gold_label.clone(),
            predicted: Label::NoRelation,
            surviving,
            decisions: Vec::new(),
            reply: None,
            malformed: false,
            ner_checks: kept.llm_checks,
        };
        match config.inference_mode {
            InferenceMode::Binary => {
                for &ri in &kept.survivors {
                    let spec = &episode.relations[ri].spec;
                    let d = infer_binary(gateway, &query.sentence, spec, support_of(ri))?;
                    result.decisions.push(RelationDecision::new(&spec.name, &d));
                }
                result.predicted = aggregate(
                    result.decisions.iter().map(|d| (d.relation.as_str(), d.answer)),
                    config.seed,
                    &episode.episode_id,
                    qi,
                );
            }
            InferenceMode::MultiClass if kept.survivors.is_empty() => {}
            InferenceMode::MultiClass => {
                let rels: Vec<_> =
                    kept.survivors.iter().map(|&ri| (&episode.relations[ri].spec, support_of(ri))).collect();
                let answer = infer_multiclass(gateway, &query.sentence, &rels)?;
                result.predicted = answer.label;
                result.malformed = answer.malformed;
                result.reply = Some(answer.raw);
            }
        }
        debug_assert!(match &result.predicted {
            Label::NoRelation => true,
            Label::Relation(r) => result.surviving.contains(r),
        });
        results.push(result);
    }
    let traces = order.into_iter().map(|ri| supports[ri].take().expect("built").trace).collect();
    Ok((results, traces))
}

enum Item {
    Episode(Episode),
    Invalid { episode_id: String, reason: String },
}

fn run_item(file: &str, item: Item, config: &RunConfig, stores: &Stores, gateway: &Gateway) -> (EpisodeResult, Vec<SelectionTrace>) {
    match item {
        Item::Invalid { episode_id, reason } => {
            (EpisodeResult::Failed { file: file.to_string(), episode_id, error: reason }, Vec::new())
        }
        Item::Episode(ep) => match process_episode(&ep, config, stores, gateway) {
            Ok((queries, traces)) => {
                (EpisodeResult::Ok { file: file.to_string(), episode_id: ep.episode_id, queries }, traces)
            }
            Err(e) => {
                log::warn!("episode {} failed: {e}", ep.episode_id);
                (EpisodeResult::Failed { file: file.to_string(), episode_id: ep.episode_id, error: e.to_string() }, Vec::new())
            }
        },
    }
}

fn write_line<T: Serialize>(w: &mut impl Write, value: &T, path: &Path) -> Result<(), RunError> {
    serde_json::to_writer(&mut *w, value).map_err(|e| RunError::Io { path: path.to_path_buf(), source: e.into() })?;
    w.write_all(b"\n").map_err(io_err(path))
}

/// Run every episode of every input file and write the artifacts to
/// `input.out_dir`.
///
/// Episodes are processed in batches on a pool of `config.parallelism` workers;
/// outputs keep input order. A schema error aborts the run. Invalid episodes
/// and per-episode gateway failures become failure records.
pub fn run(config: &RunConfig, input: &RunInput, stores: &Stores, gateway: &Gateway) -> Result<RunArtifacts, RunError> {
    config.validate()?;
    if config.strategy.kind.needs_store() && stores.index.is_none() {
        return Err(PipelineError::MissingStore(config.strategy.label()).into());
    }
    if config.inference_mode == InferenceMode::MultiClass {
        log::warn!("multi-relation prompt ends with a yes/no instruction; relation-name answers are accepted as well");
    }
    let workers = config.parallelism.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;

    let out = &input.out_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let results_path = out.join(RESULTS_FILE);
    let traces_path = out.join(TRACES_FILE);
    let mut results_w = BufWriter::new(File::create(&results_path).map_err(io_err(&results_path))?);
    let mut traces_w = BufWriter::new(File::create(&traces_path).map_err(io_err(&traces_path))?);

    let mut inputs = Vec::new();
    let mut all = Vec::new();
    let mut summary = RunSummary::default();
    let batch_size = workers * BATCH_PER_WORKER;

    for path in &input.episode_files {
        let file = file_label(path);
        inputs.push(InputDigest { file: file.clone(), sha256: sha256_file(path)? });
        let reader = EpisodeReader::new(BufReader::new(File::open(path).map_err(io_err(path))?))
            .with_inventory(input.inventory.clone());
        let mut reader = reader.peekable();
        loop {
            let mut batch = Vec::with_capacity(batch_size);
            while batch.len() < batch_size {
                match reader.next() {
                    None => break,
                    Some(Ok(ep)) => batch.push(Item::Episode(ep)),
                    Some(Err(LoadError::InvariantViolation { episode_id, reason, line })) => {
                        log::warn!("{file} line {line}: episode {episode_id} rejected: {reason}");
                        batch.push(Item::Invalid { episode_id, reason });
                    }
                    Some(Err(source)) => return Err(RunError::Load { file, source }),
                }
            }
            if batch.is_empty() {
                break;
            }
            let done: Vec<(EpisodeResult, Vec<SelectionTrace>)> = pool.install(|| {
                batch.into_par_iter().map(|item| run_item(&file, item, config, stores, gateway)).collect()
            });
            for (r, traces) in done {
                summary.absorb(&r, &traces, crate::model::EPISODE_WAYS);
                write_line(&mut results_w, &r, &results_path)?;
                for t in &traces {
                    write_line(&mut traces_w, t, &traces_path)?;
                }
                all.push(r);
            }
            if reader.peek().is_none() {
                break;
            }
        }
    }
    results_w.flush().map_err(io_err(&results_path))?;
    traces_w.flush().map_err(io_err(&traces_path))?;

    let stats = gateway.stats();
    let manifest = Manifest {
        config: config.clone(),
        gateway: gateway.config().clone(),
        templates: TemplateId::ALL.iter().map(|t| (t.as_str().to_string(), t.hash())).collect(),
        inputs,
        summary: summary.clone(),
        stats,
    };
    let manifest_path = out.join(MANIFEST_FILE);
    let mut mw = BufWriter::new(File::create(&manifest_path).map_err(io_err(&manifest_path))?);
    write_line(&mut mw, &manifest, &manifest_path)?;
    mw.flush().map_err(io_err(&manifest_path))?;

    Ok(RunArtifacts { out_dir: out.clone(), results: all, summary, stats })
}

/// Read a results file back.
pub fn read_results(path: impl AsRef<Path>) -> io::Result<Vec<EpisodeResult>> {
    read_jsonl(path)
}

pub fn read_traces(path: impl AsRef<Path>) -> io::Result<Vec<SelectionTrace>> {
    read_jsonl(path)
}

pub fn read_manifest(path: impl AsRef<Path>) -> io::Result<Manifest> {
    read_jsonl(path)?.pop().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty manifest"))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> io::Result<Vec<T>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}
