//! Learning-rate range test: train while the learning rate grows
//! geometrically and record the smoothed loss.

use super::{OptimError, Optimizer, OptimizerConfig};

/// Smoothing factor of the exponential moving average over raw losses.
pub const EMA_BETA: f64 = 0.98;
/// The sweep stops once the smoothed loss exceeds this multiple of its best.
const DIVERGENCE_FACTOR: f64 = 4.0;

/// Anything that yields a mini-batch loss and gradient at given parameters.
pub trait Objective {
    fn loss_and_grad(&mut self, params: &[f64], iteration: usize) -> Result<(f64, Vec<f64>), crate::Error>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangePoint {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub smoothed_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangeTest {
    pub points: Vec<RangePoint>,
    /// Learning rate at the smoothed-loss minimum divided by 10, clipped to
    /// the tested range; the geometric midpoint when the curve is flat.
    pub suggested_lr: f64,
    pub stopped_early: bool,
}

impl RangeTest {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,lr,smoothed_loss\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.step, p.lr, p.smoothed_loss));
        }
        out
    }
}

pub fn lr_range_test<O: Objective>(
    objective: &mut O,
    init_params: &[f64],
    optimizer: OptimizerConfig,
    lr_min: f64,
    lr_max: f64,
    n_iters: usize,
) -> Result<RangeTest, crate::Error> {
    if !(lr_min > 0.0 && lr_min < lr_max) {
        return Err(OptimError::Invalid(format!("need 0 < lr_min < lr_max, got {lr_min}, {lr_max}")).into());
    }
    if n_iters < 10 {
        return Err(OptimError::Invalid(format!("range test needs at least 10 iterations, got {n_iters}")).into());
    }
    let mut params = init_params.to_vec();
    let mut opt = Optimizer::new(
        OptimizerConfig {
            lr: lr_min,
            ..optimizer
        },
        params.len(),
    )?;
    let ratio = lr_max / lr_min;
    let mut avg = 0.0;
    let mut best = f64::INFINITY;
    let mut points = Vec::with_capacity(n_iters);
    let mut stopped_early = false;
    for step in 0..n_iters {
        let lr = lr_min * ratio.powf(step as f64 / (n_iters - 1) as f64);
        let (loss, grad) = objective.loss_and_grad(&params, step)?;
        if !loss.is_finite() {
            if step == 0 {
                return Err(OptimError::Divergent.into());
            }
            stopped_early = true;
            break;
        }
        avg = EMA_BETA * avg + (1.0 - EMA_BETA) * loss;
        let smoothed = avg / (1.0 - EMA_BETA.powi(step as i32 + 1));
        points.push(RangePoint {
            step,
            lr,
            loss,
            smoothed_loss: smoothed,
        });
        best = best.min(smoothed);
        if step > 0 && smoothed > DIVERGENCE_FACTOR * best {
            stopped_early = true;
            break;
        }
        if opt.step_with_lr(&mut params, &grad, lr).is_err() {
            stopped_early = true;
            break;
        }
    }

    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.smoothed_loss), hi.max(p.smoothed_loss))
    });
    let suggested_lr = if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        (lr_min * lr_max).sqrt()
    } else {
        let at_min = points
            .iter()
            .min_by(|a, b| a.smoothed_loss.total_cmp(&b.smoothed_loss))
            .expect("at least one point");
        (at_min.lr / 10.0).clamp(lr_min, lr_max)
    };
    Ok(RangeTest {
        points,
        suggested_lr,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::OptimizerConfig;

    struct Quadratic;
    impl Objective for Quadratic {
        fn loss_and_grad(&mut self, p: &[f64], _: usize) -> Result<(f64, Vec<f64>), crate::Error> {
            Ok((0.5 * p[0] * p[0], vec![p[0]]))
        }
    }

    struct Flat;
    impl Objective for Flat {
        fn loss_and_grad(&mut self, p: &[f64], _: usize) -> Result<(f64, Vec<f64>), crate::Error> {
            Ok((1.0, vec![0.0; p.len()]))
        }
    }

    #[test]
    fn quadratic_suggestion_is_stable() {
        // Gradient descent on 0.5 θ² diverges for lr > 2.
        let rt = lr_range_test(&mut Quadratic, &[1.0], OptimizerConfig::sgd(1e-4, 0.0), 1e-4, 10.0, 100).unwrap();
        assert!(rt.suggested_lr < 2.0);
        assert!(rt.suggested_lr >= 1e-4);
        assert!(rt.points.windows(2).all(|w| w[1].lr > w[0].lr));
    }

    #[test]
    fn flat_curve_falls_back_to_geometric_midpoint() {
        let rt = lr_range_test(&mut Flat, &[0.3, 0.4], OptimizerConfig::sgd(1e-4, 0.0), 1e-4, 1.0, 20).unwrap();
        assert_eq!(rt.points.len(), 20);
        assert!((rt.suggested_lr - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn reruns_are_identical() {
        let a = lr_range_test(&mut Quadratic, &[1.0], OptimizerConfig::sgd(1e-3, 0.9), 1e-3, 5.0, 50).unwrap();
        let b = lr_range_test(&mut Quadratic, &[1.0], OptimizerConfig::sgd(1e-3, 0.9), 1e-3, 5.0, 50).unwrap();
        assert_eq!(a, b);
        assert!(a.to_csv().starts_with("step,lr,smoothed_loss\n0,"));
    }

    #[test]
    fn rejects_bad_ranges() {
        let cfg = OptimizerConfig::sgd(1e-3, 0.0);
        assert!(lr_range_test(&mut Quadratic, &[1.0], cfg, 1.0, 0.1, 50).is_err());
        assert!(lr_range_test(&mut Quadratic, &[1.0], cfg, 0.1, 1.0, 5).is_err());
    }

    #[test]
    fn divergent_start_is_an_error() {
        struct Nan;
        impl Objective for Nan {
            fn loss_and_grad(&mut self, _: &[f64], _: usize) -> Result<(f64, Vec<f64>), crate::Error> {
                Ok((f64::NAN, vec![0.0]))
            }
        }
        let err = lr_range_test(&mut Nan, &[1.0], OptimizerConfig::sgd(1e-3, 0.0), 1e-3, 1.0, 20).unwrap_err();
        assert!(matches!(err, crate::Error::Optim(OptimError::Divergent)));
    }
}
