//! Class-weighted regression losses against ordinal targets 0, 1, 2.

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::dataset::NUM_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    /// Huber with beta = 1.
    SmoothL1,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub class_weights: [f64; NUM_CLASSES],
}

impl LossConfig {
    pub fn unweighted(kind: LossKind) -> Self {
        Self {
            kind,
            class_weights: [1.0; NUM_CLASSES],
        }
    }
}

/// Inverse-frequency weights `N / (K * N_c)` over the `K` classes present.
/// Absent classes get weight 0. The sample-weighted mean of the weights is 1.
pub fn class_weights(counts: [usize; NUM_CLASSES]) -> Result<[f64; NUM_CLASSES], NnError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(NnError::NoClasses);
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    Ok(counts.map(|c| {
        if c == 0 {
            0.0
        } else {
            total as f64 / (present * c as f64)
        }
    }))
}

/// Loss is `(1/n) * sum_i w_{y_i} * l(s_i - y_i)`; returns it with `dloss/dscores`.
pub fn loss_and_grad(scores: &[f64], labels: &[u8], config: &LossConfig) -> Result<(f64, Vec<f64>), NnError> {
    if scores.len() != labels.len() {
        return Err(NnError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if config.class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(NnError::InvalidWeights(config.class_weights));
    }
    let n = scores.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(scores.len());
    for (&s, &y) in scores.iter().zip(labels) {
        let w = *config.class_weights.get(y as usize).ok_or(NnError::InvalidLabel(y))?;
        let d = s - f64::from(y);
        let (l, dl) = match config.kind {
            LossKind::Mse => (d * d, 2.0 * d),
            LossKind::SmoothL1 => {
                if d.abs() < 1.0 {
                    (0.5 * d * d, d)
                } else {
                    (d.abs() - 0.5, d.signum())
                }
            }
        };
        loss += w * l;
        grad.push(w * dl / n);
    }
    Ok((loss / n, grad))
}
