//! Cosine matching, logistic-regression score fusion and verification
//! metrics.

mod fusion;
mod io;
mod metrics;

pub use fusion::{log_loss, lr_fit, lr_fit_with, lr_fuse, lr_linear, LrConfig, LrModel};
pub use io::{read_score_csv, roc_summary_json, roc_svg, write_roc_csv, write_score_csv, RocSummary};
pub use metrics::{accuracy_at, accuracy_mean, auc_pairwise, roc_curve, AccuracySummary, RocPoint, RocReport};

#[derive(Debug, thiserror::Error)]
pub enum ScoringError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("scores and labels must contain both kin and non-kin examples")]
    SingleClass,
    #[error("non-finite score for pair {pair_id}")]
    NonFinite { pair_id: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("malformed score file: {0}")]
    Malformed(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Cosine of the angle between `v1` and `v2`. Zero vectors score 0.
pub fn cosine_similarity(v1: &[f64], v2: &[f64]) -> Result<f64, ScoringError> {
    if v1.len() != v2.len() {
        return Err(ScoringError::DimMismatch(v1.len(), v2.len()));
    }
    let dot: f64 = v1.iter().zip(v2).map(|(a, b)| a * b).sum();
    let n1 = v1.iter().map(|a| a * a).sum::<f64>().sqrt();
    let n2 = v2.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (n1 * n2)).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRecord {
    pub pair_id: String,
    pub label: bool,
    pub scores: Vec<f64>,
}

/// Per-pair matcher scores with ground-truth kin labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    matchers: Vec<String>,
    records: Vec<ScoreRecord>,
}

impl ScoreSet {
    pub fn new(matchers: Vec<String>, records: Vec<ScoreRecord>) -> Result<Self, ScoringError> {
        if matchers.is_empty() {
            return Err(ScoringError::Empty("no matchers"));
        }
        for r in &records {
            if r.scores.len() != matchers.len() {
                return Err(ScoringError::DimMismatch(r.scores.len(), matchers.len()));
            }
            if r.scores.iter().any(|s| !s.is_finite()) {
                return Err(ScoringError::NonFinite {
                    pair_id: r.pair_id.clone(),
                });
            }
        }
        Ok(Self { matchers, records })
    }

    pub fn matchers(&self) -> &[String] {
        &self.matchers
    }

    pub fn records(&self) -> &[ScoreRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.scores[k]).collect()
    }

    pub fn has_both_labels(&self) -> bool {
        self.records.iter().any(|r| r.label) && self.records.iter().any(|r| !r.label)
    }
}
