use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RocReport, ScoreRecord, ScoreSet, ScoringError};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScoringError + '_ {
    move |source| ScoringError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `pair_id,label,score_<matcher>,...` with `label` as `1`/`0`.
pub fn write_score_csv(path: impl AsRef<Path>, set: &ScoreSet) -> Result<(), ScoringError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["pair_id".to_string(), "label".to_string()];
    header.extend(set.matchers().iter().map(|m| format!("score_{m}")));
    w.write_record(&header)?;
    for r in set.records() {
        let mut row = vec![r.pair_id.clone(), if r.label { "1" } else { "0" }.to_string()];
        row.extend(r.scores.iter().map(|s| s.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_score_csv(path: impl AsRef<Path>) -> Result<ScoreSet, ScoringError> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "pair_id" || &header[1] != "label" {
        return Err(ScoringError::Malformed(
            "header must start with pair_id,label followed by score columns".into(),
        ));
    }
    let matchers = header
        .iter()
        .skip(2)
        .map(|h| {
            h.strip_prefix("score_")
                .map(str::to_string)
                .ok_or_else(|| ScoringError::Malformed(format!("column {h:?} lacks the score_ prefix")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let label = match &row[1] {
            "1" => true,
            "0" => false,
            other => {
                return Err(ScoringError::Malformed(format!(
                    "row {}: label must be 0 or 1, got {other:?}",
                    line + 2
                )))
            }
        };
        let scores = row
            .iter()
            .skip(2)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| ScoringError::Malformed(format!("row {}: bad score {v:?}", line + 2)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        records.push(ScoreRecord {
            pair_id: row[0].to_string(),
            label,
            scores,
        });
    }
    ScoreSet::new(matchers, records)
}

/// `threshold,fpr,tpr` rows; the first threshold is `inf`.
pub fn write_roc_csv(path: impl AsRef<Path>, roc: &RocReport) -> Result<(), ScoringError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in &roc.points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub auc: f64,
    pub eer: f64,
    pub acc: f64,
    pub threshold: Option<f64>,
}

impl From<&RocReport> for RocSummary {
    fn from(r: &RocReport) -> Self {
        Self {
            auc: r.auc,
            eer: r.eer,
            acc: r.accuracy,
            threshold: r.threshold.is_finite().then_some(r.threshold),
        }
    }
}

pub fn roc_summary_json(roc: &RocReport) -> String {
    serde_json::to_string_pretty(&RocSummary::from(roc)).expect("summary serializes")
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Standalone SVG with one polyline per curve, a chance diagonal and a legend.
pub fn roc_svg(title: &str, curves: &[(String, &RocReport)]) -> String {
    let (w, h, m) = (420.0, 420.0, 50.0);
    let side = w - 2.0 * m;
    let px = |f: f64| m + f * side;
    let py = |t: f64| h - m - t * side;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{side}" height="{side}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#,
            px(v),
            h - m + 15.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#,
            m - 5.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">False positive rate</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">True positive rate</text>"#,
        h / 2.0,
        h / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for (i, (name, roc)) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = roc
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.fpr), py(p.tpr)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = m + 16.0 + 15.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#,
            px(0.45),
            px(0.52)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{} (AUC {:.3})</text>"#,
            px(0.54),
            ly + 4.0,
            escape(name),
            roc.auc
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::roc_curve;

    fn sample() -> ScoreSet {
        let records = vec![
            ScoreRecord {
                pair_id: "a".into(),
                label: true,
                scores: vec![0.1 + 0.2, -1e-300],
            },
            ScoreRecord {
                pair_id: "b,c".into(),
                label: false,
                scores: vec![std::f64::consts::PI, 5e-324],
            },
        ];
        ScoreSet::new(vec!["bsif".into(), "deep".into()], records).unwrap()
    }

    #[test]
    fn score_csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let set = sample();
        write_score_csv(&path, &set).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("pair_id,label,score_bsif,score_deep\n"));
        assert_eq!(read_score_csv(&path).unwrap(), set);
    }

    #[test]
    fn score_csv_rejects_bad_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        std::fs::write(&path, "pair_id,label,score_x\np,2,0.5\n").unwrap();
        assert!(matches!(read_score_csv(&path), Err(ScoringError::Malformed(_))));
        std::fs::write(&path, "id,label,score_x\n").unwrap();
        assert!(read_score_csv(&path).is_err());
    }

    #[test]
    fn roc_exports() {
        let roc = roc_curve(&[0.9, 0.8, 0.4, 0.3], &[true, true, false, false]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roc.csv");
        write_roc_csv(&path, &roc).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next(), Some("threshold,fpr,tpr"));
        assert_eq!(text.lines().nth(1), Some("inf,0,0"));
        let summary: RocSummary = serde_json::from_str(&roc_summary_json(&roc)).unwrap();
        assert_eq!(summary.auc, 1.0);
        assert_eq!(summary.threshold, Some(0.8));
        let svg = roc_svg("A & B", &[("fused".into(), &roc)]);
        assert!(svg.starts_with("<svg") && svg.contains("A &amp; B") && svg.contains("AUC 1.000"));
    }
}
