//! Simulated expert panels for the synthetic pipeline.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{RaterError, RatingMatrix};
use crate::dataset::{label_from_coverage, NUM_CLASSES};
use crate::rng::{self, tag};

/// Each expert judges `coverage * (1 + e)` with `e ~ N(0, relative_noise)`,
/// then with probability `slip_rate` moves the label one class up or down.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertModel {
    pub relative_noise: f64,
    pub slip_rate: f64,
}

impl Default for ExpertModel {
    fn default() -> Self {
        Self {
            relative_noise: 0.25,
            slip_rate: 0.04,
        }
    }
}

pub fn simulate_experts(
    image_ids: &[String],
    coverage: &[f64],
    raters: &[String],
    model: &ExpertModel,
    seed: u64,
) -> Result<RatingMatrix, RaterError> {
    if image_ids.len() != coverage.len() {
        return Err(RaterError::Invalid(format!(
            "{} images with {} coverage values",
            image_ids.len(),
            coverage.len()
        )));
    }
    if !(model.relative_noise >= 0.0 && (0.0..=1.0).contains(&model.slip_rate)) {
        return Err(RaterError::Invalid(format!("expert model {model:?}")));
    }
    let noise = Normal::new(0.0, model.relative_noise).map_err(|e| RaterError::Invalid(e.to_string()))?;
    let mut labels = Vec::with_capacity(raters.len());
    for r in 0..raters.len() {
        let mut g = rng::stream(seed, &[tag::RATERS, r as u64]);
        let mut row = Vec::with_capacity(coverage.len());
        for &c in coverage {
            let perceived = (c * (1.0 + noise.sample(&mut g))).clamp(0.0, 1.0);
            let mut l = label_from_coverage(perceived).map_err(|e| RaterError::Invalid(e.to_string()))?;
            if g.random_bool(model.slip_rate) {
                l = match l {
                    0 => 1,
                    2 => 1,
                    _ if g.random_bool(0.5) => 0,
                    _ => 2,
                };
            }
            debug_assert!((l as usize) < NUM_CLASSES);
            row.push(l);
        }
        labels.push(row);
    }
    RatingMatrix::new(raters.to_vec(), image_ids.to_vec(), labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_experts_match_truth() {
        let ids: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        let cov = [0.0, 0.05, 0.15, 0.5];
        let raters = vec!["a".to_string(), "b".to_string()];
        let exact = ExpertModel {
            relative_noise: 0.0,
            slip_rate: 0.0,
        };
        let m = simulate_experts(&ids, &cov, &raters, &exact, 1).unwrap();
        for r in 0..2 {
            assert_eq!((0..4).map(|i| m.label(r, i)).collect::<Vec<_>>(), vec![0, 1, 1, 2]);
        }
        let noisy = simulate_experts(&ids, &cov, &raters, &ExpertModel::default(), 1).unwrap();
        assert_eq!(
            noisy,
            simulate_experts(&ids, &cov, &raters, &ExpertModel::default(), 1).unwrap()
        );
    }
}
