use serde::{Deserialize, Serialize};

use super::ScoringError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Pairs scoring at or above this value are predicted kin. The first
    /// point of a curve uses `+∞` (nothing predicted kin).
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocReport {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub eer: f64,
    /// Best accuracy over all thresholds.
    pub accuracy: f64,
    /// Threshold achieving `accuracy`; the lowest one on ties.
    pub threshold: f64,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), ScoringError> {
    if scores.len() != labels.len() {
        return Err(ScoringError::DimMismatch(scores.len(), labels.len()));
    }
    if !(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l)) {
        return Err(ScoringError::SingleClass);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(ScoringError::NonFinite {
            pair_id: format!("#{i}"),
        });
    }
    Ok(())
}

/// Threshold sweep over the distinct scores in descending order.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocReport, ScoringError> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let n = labels.len() as f64;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut best = (n_neg / n, f64::INFINITY);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp / n_neg,
            tpr: tp / n_pos,
        });
        let acc = (tp + (n_neg - fp)) / n;
        if acc >= best.0 {
            best = (acc, t);
        }
    }

    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    Ok(RocReport {
        eer: equal_error_rate(&points),
        points,
        auc,
        accuracy: best.0,
        threshold: best.1,
    })
}

/// Linear interpolation of the first crossing of `fpr` and `1 − tpr`.
fn equal_error_rate(points: &[RocPoint]) -> f64 {
    let gap = |p: &RocPoint| p.fpr - (1.0 - p.tpr);
    for w in points.windows(2) {
        let (g0, g1) = (gap(&w[0]), gap(&w[1]));
        if g1 >= 0.0 {
            if g1 == 0.0 {
                return w[1].fpr;
            }
            let t = -g0 / (g1 - g0);
            return w[0].fpr + t * (w[1].fpr - w[0].fpr);
        }
    }
    // The last point is always (1, 1), where the gap is 1.
    unreachable!("ROC sweep must end at (1, 1)")
}

/// Fraction of pairs classified correctly when `score >= threshold` means kin.
pub fn accuracy_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64, ScoringError> {
    if scores.len() != labels.len() {
        return Err(ScoringError::DimMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(ScoringError::Empty("no scores"));
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= threshold) == l)
        .count();
    Ok(correct as f64 / scores.len() as f64)
}

/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)` by direct comparison of every pair.
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> Result<f64, ScoringError> {
    check_inputs(scores, labels)?;
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|p| *p.1).map(|p| *p.0).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|p| !*p.1).map(|p| *p.0).collect();
    let mut wins = 0.0;
    for p in &pos {
        for q in &neg {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub mean: f64,
    pub folds: Vec<f64>,
}

pub fn accuracy_mean(fold_accuracies: &[f64]) -> Result<AccuracySummary, ScoringError> {
    if fold_accuracies.is_empty() {
        return Err(ScoringError::Empty("no fold accuracies"));
    }
    let mean = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    Ok(AccuracySummary {
        mean,
        folds: fold_accuracies.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let r = roc_curve(&[0.9, 0.8, 0.4, 0.3], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.eer, 0.0);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.threshold, 0.8);
        assert_eq!(r.points.len(), 5);
        assert_eq!((r.points[0].fpr, r.points[0].tpr), (0.0, 0.0));
        assert_eq!((r.points[4].fpr, r.points[4].tpr), (1.0, 1.0));
    }

    #[test]
    fn interleaved_scores() {
        let s = [0.9, 0.4, 0.8, 0.3];
        let l = [true, false, false, true];
        let r = roc_curve(&s, &l).unwrap();
        assert_eq!(auc_pairwise(&s, &l).unwrap(), 0.5);
        assert!((r.auc - 0.5).abs() < 1e-12);
        assert!((r.eer - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ties_count_half() {
        let s = [0.5, 0.5, 0.5, 0.5];
        let l = [true, false, true, false];
        let r = roc_curve(&s, &l).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points.len(), 2);
        assert_eq!(auc_pairwise(&s, &l).unwrap(), 0.5);
        // Predicting everything non-kin and everything kin tie at 0.5;
        // the lower threshold wins.
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.threshold, 0.5);
    }

    #[test]
    fn inverted_scores() {
        let r = roc_curve(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 0.0);
        assert_eq!(r.eer, 1.0);
        assert_eq!(r.accuracy, 0.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            roc_curve(&[0.1, 0.2], &[true, true]),
            Err(ScoringError::SingleClass)
        ));
        assert!(roc_curve(&[0.1], &[true, false]).is_err());
        assert!(roc_curve(&[f64::NAN, 0.2], &[true, false]).is_err());
        assert!(accuracy_mean(&[]).is_err());
    }

    #[test]
    fn accuracy_helpers() {
        assert_eq!(accuracy_mean(&[0.9]).unwrap().mean, 0.9);
        assert_eq!(accuracy_mean(&[1.0, 0.0]).unwrap().mean, 0.5);
        let acc = accuracy_at(&[0.9, 0.1, 0.6], &[true, false, false], 0.5).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-15);
    }
}
