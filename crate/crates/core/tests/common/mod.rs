//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use hullgauge::nn::{loss_and_grad, LossConfig, LossKind, NetworkSpec, NetworkState};
use hullgauge::rng::{self, Rng};
use rand::Rng as _;

/// Step-interpolated AP by a quadratic scan: for every distinct score `t`,
/// count positives and negatives with score >= t from scratch.
pub fn brute_force_ap(scores: &[f64], positives: &[bool]) -> f64 {
    let total_pos = positives.iter().filter(|&&p| p).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let mut tp = 0.0;
        let mut fp = 0.0;
        for (s, &p) in scores.iter().zip(positives) {
            if *s >= t {
                if p {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / total_pos;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

/// Mean of the two task APs, both by brute force.
pub fn brute_force_map(scores: &[f64], slof: &[u8]) -> f64 {
    let any: Vec<bool> = slof.iter().map(|&l| l > 0).collect();
    let heavy: Vec<bool> = slof.iter().map(|&l| l == 2).collect();
    0.5 * (brute_force_ap(scores, &any) + brute_force_ap(scores, &heavy))
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Two-sided Fisher p by exact integer enumeration. A table counts when its
/// hypergeometric numerator is at most the observed one times (1 + 1e-7).
pub fn fisher_exact_oracle(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let c2 = b + d;
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return 1.0;
    }
    let numerator = |x: u64| binomial(r1, x) * binomial(r2, c1 - x);
    let observed = numerator(a);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let scale: u128 = 10_000_000;
    let hits: u128 = (lo..=hi)
        .map(numerator)
        .filter(|&v| v * scale <= observed * (scale + 1))
        .sum();
    hits as f64 / binomial(r1 + r2, c1) as f64
}

fn binomial_cdf(k: i64, n: u64, p: f64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut ln_c = 0.0f64;
    for i in 0..=k as u64 {
        if i > 0 {
            ln_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        let term = if p == 0.0 {
            if i == 0 {
                1.0
            } else {
                0.0
            }
        } else if p == 1.0 {
            if i == n {
                1.0
            } else {
                0.0
            }
        } else {
            (ln_c + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()).exp()
        };
        total += term;
    }
    total.min(1.0)
}

fn bisect(mut lo: f64, mut hi: f64, increasing: bool, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Clopper-Pearson bounds from binomial tail sums: `P(X >= s | low) = a/2`
/// and `P(X <= s | high) = a/2`.
pub fn clopper_pearson_oracle(s: u64, n: u64, confidence: f64) -> (f64, f64) {
    let half = (1.0 - confidence) / 2.0;
    let low = if s == 0 {
        0.0
    } else {
        bisect(0.0, 1.0, true, |p| (1.0 - binomial_cdf(s as i64 - 1, n, p)) - half)
    };
    let high = if s == n {
        1.0
    } else {
        bisect(0.0, 1.0, false, |p| binomial_cdf(s as i64, n, p) - half)
    };
    (low, high)
}

/// Outcome of one finite-difference draw.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a ReLU or smooth-L1 kink even
    /// at the smallest step.
    pub skipped: usize,
}

/// Which linear piece the loss is on: every ReLU sign and every smooth-L1 branch.
fn piece(state: &NetworkState, inputs: &[&[f64]], labels: &[u8], cfg: &LossConfig) -> (f64, Vec<bool>) {
    let (scores, cache) = state.forward(inputs).unwrap();
    let mut signature: Vec<bool> = cache
        .samples
        .iter()
        .flat_map(|s| s.pre.iter().flatten().map(|&z| z > 0.0))
        .collect();
    if cfg.kind == LossKind::SmoothL1 {
        signature.extend(scores.iter().zip(labels).map(|(s, &y)| (s - f64::from(y)).abs() < 1.0));
    }
    let (loss, _) = loss_and_grad(&scores, labels, cfg).unwrap();
    (loss, signature)
}

/// Random network, batch, labels and loss; compare backprop with central
/// differences on every parameter.
pub fn gradient_check_draw(seed: u64) -> GradCheck {
    let mut r: Rng = rng::stream(seed, &[0x6C]);
    let input_size = [8usize, 12, 16][r.random_range(0..3)];
    let depth = r.random_range(1..=3);
    let widths: Vec<usize> = (0..depth).map(|_| r.random_range(2..=6)).collect();
    let spec = NetworkSpec::with_widths(input_size, &widths);
    let mut state = NetworkState::init(spec.clone(), r.random()).unwrap();
    // Move biases off zero so ReLUs are not all exactly at their kinks.
    for p in state.params_mut().iter_mut() {
        *p += r.random_range(-0.05..0.05);
    }
    let batch = r.random_range(1..=4);
    let inputs: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..spec.input_len()).map(|_| r.random_range(-0.5..0.5)).collect())
        .collect();
    let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
    let labels: Vec<u8> = (0..batch).map(|_| r.random_range(0..3)).collect();
    let cfg = LossConfig {
        kind: if r.random_bool(0.5) {
            LossKind::Mse
        } else {
            LossKind::SmoothL1
        },
        class_weights: [0; 3].map(|_| r.random_range(0.2..3.0)),
    };

    let (scores, cache) = state.forward(&refs).unwrap();
    let (_, dscores) = loss_and_grad(&scores, &labels, &cfg).unwrap();
    let analytic = state.backward(&cache, &dscores).unwrap();
    let (_, base_piece) = piece(&state, &refs, &labels, &cfg);
    let theta = state.params().to_vec();

    let mut out = GradCheck::default();
    for i in 0..theta.len() {
        let mut h = 1e-3;
        let mut numeric = None;
        for _ in 0..8 {
            state.params_mut()[i] = theta[i] + h;
            let (lp, sp) = piece(&state, &refs, &labels, &cfg);
            state.params_mut()[i] = theta[i] - h;
            let (lm, sm) = piece(&state, &refs, &labels, &cfg);
            state.params_mut()[i] = theta[i];
            if sp == base_piece && sm == base_piece {
                numeric = Some((lp - lm) / (2.0 * h));
                break;
            }
            h /= 8.0;
        }
        match numeric {
            Some(n) => {
                let a = analytic[i];
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                out.max_rel_err = out.max_rel_err.max(rel);
                out.checked += 1;
            }
            None => out.skipped += 1,
        }
    }
    out
}

/// Scores with ties: values drawn from a coarse grid.
pub fn tied_scores(r: &mut Rng, n: usize) -> Vec<f64> {
    let levels = r.random_range(2..=40);
    (0..n)
        .map(|_| f64::from(r.random_range(0..levels)) / f64::from(levels))
        .collect()
}

/// Labels in 0..=2 with every class present (needs `n >= 3`).
pub fn labels_all_classes(r: &mut Rng, n: usize) -> Vec<u8> {
    let mut l: Vec<u8> = (0..n).map(|_| r.random_range(0..3)).collect();
    l[0] = 0;
    l[1] = 1;
    l[2] = 2;
    l
}
