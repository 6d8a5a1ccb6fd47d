//! Manifests, subject-disjoint cross-validation, negative-pair generation
//! and the end-to-end experiment.

mod experiment;
mod features;
mod folds;
mod manifest;
mod report;

pub use experiment::{
    check_leakage, run_experiment, write_outputs, AuditEntry, ExperimentConfig, ExperimentOutcome, FoldModels,
    FoldScores, OutputSelection, TrainScores,
};
pub use features::{
    extract_to_dir, parse_shape, BsifSource, Channel, DiskFeatures, ExtractSettings, FeatureProvider, ImageExtractor,
    MemoryFeatures,
};
pub use folds::{generate_negatives, kfold_split, shared_families, EvalPair, FoldAssignment};
pub use manifest::{load_manifest, parse_manifest, sample_id, write_manifest, PairManifest, PairRecord, RELATIONS};
pub use report::{
    bundled_reference, compare_report, parse_reference, render_table, EvalReport, FoldMetrics, MethodReport,
    MethodSummary, PooledRoc, Provenance, ReferenceRow, RelationReport,
};

use crate::scoring::ScoringError;
use crate::subspace::SubspaceError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("feature error for sample {sample:?}: {reason}")]
    Feature { sample: String, reason: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{relation} fold {fold}, stage {stage}{}: {source}", sample.as_ref().map(|s| format!(", sample {s:?}")).unwrap_or_default())]
    Stage {
        relation: String,
        fold: usize,
        stage: String,
        sample: Option<String>,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// 2 for configuration errors, 3 for data errors, 4 for numerical
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) | Self::Io { .. } | Self::Feature { .. } => 3,
            Self::Numerical(_) => 4,
            Self::Stage { source, .. } => source.exit_code(),
        }
    }

    pub(crate) fn at(self, relation: &str, fold: usize, stage: &str) -> Self {
        let sample = match &self {
            Self::Feature { sample, .. } => Some(sample.clone()),
            _ => None,
        };
        Self::Stage {
            relation: relation.to_string(),
            fold,
            stage: stage.to_string(),
            sample,
            source: Box::new(self),
        }
    }
}

impl From<SubspaceError> for PipelineError {
    fn from(e: SubspaceError) -> Self {
        match e {
            SubspaceError::Eigen { .. } | SubspaceError::Linalg(_) | SubspaceError::SingularWithinClass => {
                Self::Numerical(e.to_string())
            }
            SubspaceError::Dimension(_) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<ScoringError> for PipelineError {
    fn from(e: ScoringError) -> Self {
        match e {
            ScoringError::NonFinite { .. } => Self::Numerical(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}
