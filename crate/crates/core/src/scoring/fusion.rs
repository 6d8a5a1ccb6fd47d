use serde::{Deserialize, Serialize};

use super::{ScoreSet, ScoringError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrConfig {
    /// L2 penalty `λ/2 ‖a‖²` added to the mean log-loss; the bias is not
    /// penalized.
    pub l2: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            l2: 1e-6,
            max_iterations: 10_000,
            gradient_tolerance: 1e-8,
        }
    }
}

/// Fusion weights for `p = 1 / (1 + exp(Σ a_k Y_k + b))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub a: Vec<f64>,
    pub b: f64,
    /// Penalized objective at `(a, b)`.
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub loss_history: Vec<f64>,
}

/// `Σ a_k Y_k + b`.
pub fn lr_linear(model: &LrModel, scores: &[f64]) -> Result<f64, ScoringError> {
    if scores.len() != model.a.len() {
        return Err(ScoringError::DimMismatch(scores.len(), model.a.len()));
    }
    Ok(model.a.iter().zip(scores).map(|(a, y)| a * y).sum::<f64>() + model.b)
}

pub fn lr_fuse(model: &LrModel, scores: &[f64]) -> Result<f64, ScoringError> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(ScoringError::NonFinite {
            pair_id: "<fuse input>".into(),
        });
    }
    Ok(1.0 / (1.0 + lr_linear(model, scores)?.exp()))
}

/// `ln(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy of `model` on `set` (kin = 1), without the
/// penalty term.
pub fn log_loss(model: &LrModel, set: &ScoreSet) -> Result<f64, ScoringError> {
    let mut total = 0.0;
    for r in set.records() {
        let z = lr_linear(model, &r.scores)?;
        // -ln p = softplus(z), -ln(1 - p) = softplus(-z).
        total += if r.label { softplus(z) } else { softplus(-z) };
    }
    Ok(total / set.len() as f64)
}

pub fn lr_fit(set: &ScoreSet) -> Result<LrModel, ScoringError> {
    lr_fit_with(set, &LrConfig::default())
}

/// Penalized maximum likelihood by full-batch gradient descent with Armijo
/// backtracking.
///
/// Descent runs in centred, unit-variance score coordinates, which is a
/// fixed diagonal change of variables: the objective (including the
/// penalty on the original `a`) is unchanged, only its conditioning.
pub fn lr_fit_with(set: &ScoreSet, cfg: &LrConfig) -> Result<LrModel, ScoringError> {
    if set.len() < 2 || !set.has_both_labels() {
        return Err(ScoringError::SingleClass);
    }
    let k = set.matchers().len();
    let n = set.len() as f64;
    let mut centre = vec![0.0; k];
    let mut spread = vec![1.0; k];
    for j in 0..k {
        let col = set.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        centre[j] = mean;
        if var.sqrt() > 1e-12 {
            spread[j] = var.sqrt();
        }
    }
    let xs: Vec<Vec<f64>> = set
        .records()
        .iter()
        .map(|r| (0..k).map(|j| (r.scores[j] - centre[j]) / spread[j]).collect())
        .collect();
    let ts: Vec<f64> = set.records().iter().map(|r| f64::from(u8::from(r.label))).collect();

    // Parameters θ = (c_1..c_k, d) with z = Σ c_j x_j + d.
    // Original coordinates: a_j = c_j / s_j, b = d − Σ a_j m_j.
    let objective = |theta: &[f64]| -> f64 {
        let mut loss = 0.0;
        for (x, &t) in xs.iter().zip(&ts) {
            let z = theta[..k].iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + theta[k];
            loss += if t > 0.5 { softplus(z) } else { softplus(-z) };
        }
        let pen: f64 = (0..k).map(|j| (theta[j] / spread[j]).powi(2)).sum();
        loss / n + 0.5 * cfg.l2 * pen
    };
    let gradient = |theta: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; k + 1];
        for (x, &t) in xs.iter().zip(&ts) {
            let z = theta[..k].iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + theta[k];
            let p = 1.0 / (1.0 + z.exp());
            // d(loss)/dz = t − p.
            let r = t - p;
            for j in 0..k {
                g[j] += r * x[j];
            }
            g[k] += r;
        }
        for j in 0..k {
            g[j] = g[j] / n + cfg.l2 * theta[j] / (spread[j] * spread[j]);
        }
        g[k] /= n;
        g
    };

    let mut theta = vec![0.0; k + 1];
    let mut f = objective(&theta);
    let mut history = vec![f];
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        let g = gradient(&theta);
        let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if g_inf < cfg.gradient_tolerance {
            converged = true;
            break;
        }
        let g_sq: f64 = g.iter().map(|v| v * v).sum();
        step = (step * 2.0).min(1e8);
        let mut accepted = false;
        while step > 1e-20 {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gv)| t - step * gv).collect();
            let fc = objective(&cand);
            if fc <= f - 1e-4 * step * g_sq {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        history.push(f);
    }

    let a: Vec<f64> = (0..k).map(|j| theta[j] / spread[j]).collect();
    let b = theta[k] - a.iter().zip(&centre).map(|(a, m)| a * m).sum::<f64>();
    if a.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(ScoringError::NonFinite {
            pair_id: "<fitted parameters>".into(),
        });
    }
    Ok(LrModel {
        a,
        b,
        final_loss: f,
        iterations,
        converged,
        loss_history: history,
    })
}
