use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::experiment::ExperimentConfig;
use super::PipelineError;
use crate::scoring::RocReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// Caller-supplied description of the inputs (manifest, feature sources).
    pub inputs: BTreeMap<String, String>,
    pub fold_sizes: Vec<usize>,
    pub threshold_rule: String,
    pub leakage_check: String,
    /// TXQDA sweeps whose per-mode trace ratio fell by more than 1e-9.
    pub trace_ratio_decreases: Vec<String>,
    pub lr_unconverged_folds: usize,
    /// Seconds since the Unix epoch when the report was written.
    pub timestamp: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    pub auc: f64,
    pub eer: f64,
    pub threshold: f64,
    pub n_test: usize,
}

/// ROC of the test scores of all folds taken together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledRoc {
    pub auc: f64,
    pub eer: f64,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

impl From<&RocReport> for PooledRoc {
    fn from(r: &RocReport) -> Self {
        Self {
            auc: r.auc,
            eer: r.eer,
            fpr: r.points.iter().map(|p| p.fpr).collect(),
            tpr: r.points.iter().map(|p| p.tpr).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub mean_accuracy: f64,
    pub mean_auc: f64,
    pub mean_eer: f64,
    pub folds: Vec<FoldMetrics>,
    pub pooled: PooledRoc,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl MethodReport {
    pub fn new(method: String, folds: Vec<FoldMetrics>, pooled: PooledRoc) -> Self {
        Self {
            method,
            mean_accuracy: mean(folds.iter().map(|f| f.accuracy)),
            mean_auc: mean(folds.iter().map(|f| f.auc)),
            mean_eer: mean(folds.iter().map(|f| f.eer)),
            folds,
            pooled,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub relation: String,
    pub n_positive: usize,
    pub methods: Vec<MethodReport>,
}

impl RelationReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }
}

/// Per-method means over relations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_accuracy: f64,
    pub mean_auc: f64,
    pub mean_eer: f64,
}

impl MethodSummary {
    pub fn over(method: &str, relations: &[RelationReport]) -> Self {
        let ms: Vec<&MethodReport> = relations.iter().filter_map(|r| r.method(method)).collect();
        Self {
            method: method.to_string(),
            mean_accuracy: mean(ms.iter().map(|m| m.mean_accuracy)),
            mean_auc: mean(ms.iter().map(|m| m.mean_auc)),
            mean_eer: mean(ms.iter().map(|m| m.mean_eer)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: Provenance,
    pub relations: Vec<RelationReport>,
    pub summary: Vec<MethodSummary>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Data(format!("report: {e}")))
    }

    pub fn relation(&self, name: &str) -> Option<&RelationReport> {
        self.relations.iter().find(|r| r.relation == name)
    }

    pub fn summary_for(&self, method: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|m| m.method == method)
    }
}

/// Plain-text table of mean accuracy (%) per method and relation, with the
/// mean over relations in the last column.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let mut header = format!("{:<12}", "method");
    for r in &report.relations {
        let _ = write!(header, "{:>10}", r.relation);
    }
    let _ = write!(header, "{:>10}{:>10}", "mean", "AUC");
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "{}", "-".repeat(header.len()));
    for s in &report.summary {
        let mut line = format!("{:<12}", s.method);
        for r in &report.relations {
            match r.method(&s.method) {
                Some(m) => {
                    let _ = write!(line, "{:>10.2}", 100.0 * m.mean_accuracy);
                }
                None => {
                    let _ = write!(line, "{:>10}", "-");
                }
            }
        }
        let _ = write!(line, "{:>10.2}{:>10.4}", 100.0 * s.mean_accuracy, s.mean_auc);
        let _ = writeln!(out, "{line}");
    }
    out
}

/// One published accuracy figure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub group: String,
    pub dataset: String,
    pub method: String,
    pub setting: String,
    pub column: String,
    pub accuracy: f64,
}

const REFERENCE_CSV: &str = include_str!("../../data/reference.csv");

pub fn parse_reference(text: &str) -> Result<Vec<ReferenceRow>, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let rows = rdr
        .deserialize()
        .collect::<Result<Vec<ReferenceRow>, _>>()
        .map_err(|e| PipelineError::Data(format!("reference table: {e}")))?;
    if rows.is_empty() {
        return Err(PipelineError::Data("reference table has no rows".into()));
    }
    Ok(rows)
}

/// The reference accuracies shipped with the crate.
pub fn bundled_reference() -> Vec<ReferenceRow> {
    parse_reference(REFERENCE_CSV).expect("bundled reference parses")
}

fn method_for(reference_method: &str) -> Option<&'static str> {
    match reference_method {
        "LR Fusion" => Some("fused"),
        "VGG16" => Some("deep"),
        "BSIF with MSR" | "BSIF without MSR" => Some("bsif"),
        _ => None,
    }
}

/// Side-by-side listing of the reference rows for `dataset` and the
/// matching figures of `report`. Informational only.
pub fn compare_report(report: &EvalReport, reference: &[ReferenceRow], dataset: &str) -> String {
    let rows: Vec<&ReferenceRow> = reference.iter().filter(|r| r.dataset == dataset).collect();
    let mut out = String::new();
    if rows.is_empty() {
        let mut known: Vec<&str> = reference.iter().map(|r| r.dataset.as_str()).collect();
        known.dedup();
        let _ = writeln!(
            out,
            "no reference rows for dataset {dataset:?} (available: {})",
            known.join(", ")
        );
        return out;
    }
    let _ = writeln!(out, "dataset: {dataset}");
    let _ = writeln!(
        out,
        "{:<12} {:<20} {:<22} {:<7} {:>10} {:>10}",
        "group", "method", "setting", "column", "reference", "this run"
    );
    for r in rows {
        let ours = method_for(&r.method).and_then(|m| {
            if r.group != "scales" {
                return None;
            }
            if r.column == "mean" {
                report.summary_for(m).map(|s| s.mean_accuracy)
            } else {
                report
                    .relation(&r.column)
                    .and_then(|rel| rel.method(m))
                    .map(|x| x.mean_accuracy)
            }
        });
        let ours = ours.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v));
        let _ = writeln!(
            out,
            "{:<12} {:<20} {:<22} {:<7} {:>10.2} {:>10}",
            r.group, r.method, r.setting, r.column, r.accuracy, ours
        );
    }
    let _ = writeln!(
        out,
        "reference figures come from the original datasets and network weights; this run uses the inputs listed in its report"
    );
    out
}
