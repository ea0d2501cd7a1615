//! Scoring, per-file aggregation and analysis reports.
//!
//! Scores are micro-averaged over all queries of a file with `no_relation`
//! never counted as a positive, then averaged across files (mean and sample
//! standard deviation). Percentages keep full precision until presentation.

mod aggregate;
mod analysis;
mod report;
mod score;

pub use aggregate::{aggregate, FileAggregate, MeanStd};
pub use analysis::{pick_provenance, trace_diversity, trace_provenance, DiversityRow, ProvenanceRow};
pub use report::{
    ablation_table, emit_report, f1_bars, load_run, run_label, score_results, score_run, score_table, seed_sweep,
    LoadedRun, ReportError, ReportOptions, RunScores, ScoreRecord, F1_BARS_FILE, REPORT_FILE, SCORES_FILE,
};
pub use score::{f1_from, score, score_pairs, ScoreError, ScoreReport};
