use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::aggregate::{aggregate, FileAggregate, MeanStd};
use super::score::{score_pairs, ScoreReport};
use crate::model::Label;
use crate::pipeline::{
    aggregate as aggregate_decisions, read_manifest, read_results, EpisodeResult, InferenceMode, Manifest, MANIFEST_FILE,
    RESULTS_FILE,
};

pub const SCORES_FILE: &str = "scores.jsonl";
pub const REPORT_FILE: &str = "report.txt";
pub const F1_BARS_FILE: &str = "f1_bars.tsv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{dir}: missing {missing:?}")]
    MissingArtifacts { dir: PathBuf, missing: Vec<String> },
    #[error("{dir}: no successfully processed episode to score")]
    NothingScored { dir: PathBuf },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

/// Manifest and results of one run directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub results: Vec<EpisodeResult>,
}

pub fn load_run(dir: impl AsRef<Path>) -> Result<LoadedRun, ReportError> {
    let dir = dir.as_ref();
    let missing: Vec<String> = [MANIFEST_FILE, RESULTS_FILE]
        .iter()
        .filter(|f| !dir.join(f).is_file())
        .map(|f| f.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ReportError::MissingArtifacts { dir: dir.to_path_buf(), missing });
    }
    let mp = dir.join(MANIFEST_FILE);
    let rp = dir.join(RESULTS_FILE);
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        manifest: read_manifest(&mp).map_err(io_err(&mp))?,
        results: read_results(&rp).map_err(io_err(&rp))?,
    })
}

/// Per-file micro scores in first-seen file order. Failed episodes are left
/// out; files with no successful episode are dropped.
pub fn score_results(results: &[EpisodeResult]) -> Vec<(String, ScoreReport)> {
    score_with(results, |_, q| q.predicted.clone())
}

fn score_with(
    results: &[EpisodeResult],
    predict: impl Fn(&EpisodeResult, &crate::pipeline::QueryResult) -> Label,
) -> Vec<(String, ScoreReport)> {
    let mut files: Vec<(String, Vec<(Label, Label)>)> = Vec::new();
    for r in results.iter().filter(|r| !r.is_failed()) {
        let pos = match files.iter().position(|(f, _)| f == r.file()) {
            Some(p) => p,
            None => {
                files.push((r.file().to_string(), Vec::new()));
                files.len() - 1
            }
        };
        for q in r.queries() {
            files[pos].1.push((q.gold.clone(), predict(r, q)));
        }
    }
    files.into_iter().map(|(f, pairs)| (f, score_pairs(pairs.iter().map(|(g, p)| (g, p))))).collect()
}

/// Scores and bookkeeping of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub strategy: String,
    pub shots: usize,
    /// Strategy plus filter and inference settings.
    pub label: String,
    pub aggregate: FileAggregate,
    pub failed_episodes: usize,
    pub candidate_pairs: usize,
    pub prompted_pairs: usize,
}

pub fn run_label(m: &Manifest) -> String {
    let c = &m.config;
    let mut s = format!("{} ner={}", c.strategy.label(), ner_name(c.ner_filter));
    if c.inference_mode == InferenceMode::MultiClass {
        s.push_str(" multi-class");
    }
    s
}

fn ner_name(mode: crate::pipeline::NerFilterMode) -> String {
    serde_json::to_value(mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

pub fn score_run(run: &LoadedRun) -> Result<RunScores, ReportError> {
    let files = score_results(&run.results);
    if files.is_empty() {
        return Err(ReportError::NothingScored { dir: run.dir.clone() });
    }
    let s = &run.manifest.summary;
    Ok(RunScores {
        strategy: run.manifest.config.strategy.label(),
        shots: run.manifest.config.strategy.shots,
        label: run_label(&run.manifest),
        aggregate: aggregate(files),
        failed_episodes: s.failed,
        candidate_pairs: s.candidate_pairs,
        prompted_pairs: s.prompted_pairs,
    })
}

/// Machine-readable score line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub strategy: String,
    pub shots: usize,
    #[serde(rename = "P_mean")]
    pub p_mean: f64,
    #[serde(rename = "P_std")]
    pub p_std: f64,
    #[serde(rename = "R_mean")]
    pub r_mean: f64,
    #[serde(rename = "R_std")]
    pub r_std: f64,
    #[serde(rename = "F1_mean")]
    pub f1_mean: f64,
    #[serde(rename = "F1_std")]
    pub f1_std: f64,
}

impl From<&RunScores> for ScoreRecord {
    fn from(r: &RunScores) -> Self {
        let a = &r.aggregate;
        Self {
            strategy: r.label.clone(),
            shots: r.shots,
            p_mean: a.precision.mean,
            p_std: a.precision.std,
            r_mean: a.recall.mean,
            r_std: a.recall.std,
            f1_mean: a.f1.mean,
            f1_std: a.f1.std,
        }
    }
}

/// Re-break multi-yes ties with each of `seeds` and report the spread of the
/// per-run F1 (mean over files). Multi-class results have no ties and are
/// scored as recorded.
pub fn seed_sweep(results: &[EpisodeResult], seeds: impl IntoIterator<Item = u64>) -> Option<MeanStd> {
    let mut f1s = Vec::new();
    for seed in seeds {
        let files = score_with(results, |r, q| {
            if q.decisions.is_empty() {
                return q.predicted.clone();
            }
            aggregate_decisions(q.decisions.iter().map(|d| (d.relation.as_str(), d.answer)), seed, r.episode_id(), q.query_idx)
        });
        if files.is_empty() {
            return None;
        }
        f1s.push(aggregate(files).f1.mean);
    }
    (!f1s.is_empty()).then(|| MeanStd::of(&f1s))
}

fn pm(m: &MeanStd) -> String {
    format!("{:5.1} ± {:4.2}", m.mean, m.std)
}

/// Human-readable score table.
pub fn score_table(runs: &[RunScores]) -> String {
    let w = runs.iter().map(|r| r.label.len()).max().unwrap_or(0).max(8);
    let mut s = format!("{:<w$}  {:>5}  {:>12}  {:>12}  {:>12}  files\n", "strategy", "G+A", "P", "R", "F1");
    for r in runs {
        let a = &r.aggregate;
        let _ = writeln!(
            s,
            "{:<w$}  {:>5}  {}  {}  {}  {}{}",
            r.label,
            format!("1+{}", r.shots.saturating_sub(1)),
            pm(&a.precision),
            pm(&a.recall),
            pm(&a.f1),
            a.files.len(),
            if a.single_file { " (single file: std not estimated)" } else { "" },
        );
    }
    s
}

/// Runs side by side with their difference to the first one, e.g. a run with
/// the entity-type filter against one without it.
pub fn ablation_table(runs: &[RunScores]) -> String {
    let Some(base) = runs.first() else {
        return String::new();
    };
    let w = runs.iter().map(|r| r.label.len()).max().unwrap_or(0).max(8);
    let mut s = format!(
        "{:<w$}  {:>5}  {:>12}  {:>12}  {:>12}  {:>7}  {:>9}\n",
        "run", "G+A", "P", "R", "F1", "ΔF1", "prompted"
    );
    for r in runs {
        let a = &r.aggregate;
        let _ = writeln!(
            s,
            "{:<w$}  {:>5}  {}  {}  {}  {:>+7.1}  {:>9}",
            r.label,
            format!("1+{}", r.shots.saturating_sub(1)),
            pm(&a.precision),
            pm(&a.recall),
            pm(&a.f1),
            a.f1.mean - base.aggregate.f1.mean,
            format!("{}/{}", r.prompted_pairs, r.candidate_pairs),
        );
    }
    s
}

/// Tab-separated plot data: one bar per run.
pub fn f1_bars(runs: &[RunScores]) -> String {
    let mut s = String::from("strategy\tshots\tf1_mean\tf1_std\n");
    for r in runs {
        let _ = writeln!(s, "{}\t{}\t{:.4}\t{:.4}", r.label, r.shots, r.aggregate.f1.mean, r.aggregate.f1.std);
    }
    s
}

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    /// Number of tie-break seeds to re-score; 0 skips the sweep.
    pub seed_sweep: u64,
}

/// Score `run_dirs` and write the score records, text table and bar data to
/// `out_dir`.
pub fn emit_report(run_dirs: &[PathBuf], out_dir: &Path, opts: &ReportOptions) -> Result<Vec<RunScores>, ReportError> {
    if run_dirs.is_empty() {
        return Err(ReportError::MissingArtifacts { dir: out_dir.to_path_buf(), missing: vec!["run directory".into()] });
    }
    let mut runs = Vec::new();
    let mut sweeps = Vec::new();
    for d in run_dirs {
        let loaded = load_run(d)?;
        let scores = score_run(&loaded)?;
        if opts.seed_sweep > 0 {
            sweeps.push((scores.label.clone(), seed_sweep(&loaded.results, 0..opts.seed_sweep)));
        }
        runs.push(scores);
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut jsonl = String::new();
    for r in &runs {
        jsonl.push_str(&serde_json::to_string(&ScoreRecord::from(r)).expect("plain record"));
        jsonl.push('\n');
    }
    let mut text = score_table(&runs);
    for r in &runs {
        if r.failed_episodes > 0 {
            let _ = writeln!(text, "{}: {} failed episode(s) excluded", r.label, r.failed_episodes);
        }
    }
    for (label, sweep) in &sweeps {
        if let Some(m) = sweep {
            let _ = writeln!(text, "{label}: tie-break seed sweep over {} seeds: F1 {}", opts.seed_sweep, pm(m));
        }
    }
    for (name, body) in [(SCORES_FILE, jsonl), (REPORT_FILE, text), (F1_BARS_FILE, f1_bars(&runs))] {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(io_err(&p))?;
    }
    Ok(runs)
}
