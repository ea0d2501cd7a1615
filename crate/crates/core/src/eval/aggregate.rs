use serde::{Deserialize, Serialize};

use super::score::ScoreReport;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

/// Mean and spread of per-file scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileAggregate {
    pub files: Vec<(String, ScoreReport)>,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    /// Only one file was scored, so the deviations are 0 by convention.
    pub single_file: bool,
}

/// Aggregate per-file reports.
///
/// # Panics
/// If `files` is empty.
pub fn aggregate(files: Vec<(String, ScoreReport)>) -> FileAggregate {
    assert!(!files.is_empty(), "aggregate needs at least one file");
    let col = |f: fn(&ScoreReport) -> f64| MeanStd::of(&files.iter().map(|(_, r)| f(r)).collect::<Vec<_>>());
    FileAggregate {
        precision: col(|r| r.precision),
        recall: col(|r| r.recall),
        f1: col(|r| r.f1),
        single_file: files.len() == 1,
        files,
    }
}
